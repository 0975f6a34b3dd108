"""
Condition builders for driving world models.

Each module covers one stage of the compile pipeline: the scene model,
coordinate geometry, instance flow, layout rasters, condition
embeddings, attention fusion, noise schedules and the scenario
simulator.
"""
