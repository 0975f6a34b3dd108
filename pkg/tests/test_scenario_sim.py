import json
from sys import path as syspath
from os import path as ospath
import math
import unittest

import numpy as np
import numpy.testing as npt

syspath.append(ospath.join(ospath.dirname(ospath.abspath(__file__)), '..'))

from conditions.geometry import is_orthonormal
from conditions.instance_flow import compute_offsets, normalize_to_rgb, rasterize_flow
from conditions.scenario_sim import (ActorScript, Brake, ConstantSpeed, CutIn, EgoScript, LaneLayout, ScriptError,
									actor_speed, actor_state, collision_warnings, ego_station, lane_offset, layout_map,
									layout_point, load_scenario, random_scenario, simulate, simulate_scenario, smoothstep,
									surround_rig)
from conditions.scene_model import find_camera, parse_scene, serialize_scene, validate_scene


STRAIGHT = LaneLayout(origin=(0.0, 0.0), heading=0.0, lane_count=3, lane_width=3.5)
CRUISING_EGO = EgoScript(lane=1, speeds=((0.0, 10.0),))
RIG = surround_rig(width=64, height=32, focal=28.0)



def offsets_of(scene, track_id):

	return [t for t in compute_offsets(scene) if t.track_id == track_id][0].offsets



class TestLayout(unittest.TestCase):

	"""
	Reference-line geometry of straight and curved roads.
	"""


	def test_straight(self):

		layout = LaneLayout(origin=(5.0, -2.0), heading=math.pi / 2)

		npt.assert_allclose(layout_point(layout, 10.0, 3.5), (5.0 - 3.5, -2.0 + 10.0, math.pi / 2), atol=1e-12)
		npt.assert_allclose(layout_point(STRAIGHT, 7.0, -1.0), (7.0, -1.0, 0.0))


	def test_curved(self):

		layout = LaneLayout(origin=(0.0, 0.0), heading=0.0, curvature=0.01)
		center = (0.0, 100.0)

		for station in (0.0, 25.0, 80.0):
			for offset in (0.0, 3.5, -2.0):
				x, y, theta = layout_point(layout, station, offset)
				npt.assert_allclose(math.hypot(x - center[0], y - center[1]), 100.0 - offset, atol=1e-9)
				npt.assert_allclose(theta, 0.01 * station)

		# Small stations follow the tangent
		x, y, _ = layout_point(layout, 0.01, 0.0)
		npt.assert_allclose((x, y), (0.01, 0.0), atol=1e-6)


	def test_map_elements(self):

		elements = layout_map(STRAIGHT)
		kinds = [e.kind for e in elements]

		npt.assert_equal(kinds.count("lane_divider"), 2)
		npt.assert_equal(kinds.count("drivable_area_boundary"), 2)
		npt.assert_equal(kinds.count("lane_centerline"), 3)

		offsets = sorted(e.polyline_world[0][1] for e in elements if e.kind != "lane_centerline")
		npt.assert_allclose(offsets, [-1.75, 1.75, 5.25, 8.75])

		curved = layout_map(STRAIGHT._replace(curvature=0.002))
		npt.assert_equal(len(curved[0].polyline_world) > 2, True)


	def test_smoothstep(self):

		npt.assert_allclose([smoothstep(s) for s in (-1.0, 0.0, 0.25, 0.5, 1.0, 2.0)],
							[0.0, 0.0, 0.15625, 0.5, 1.0, 1.0])


	def test_ego_station(self):

		ego = EgoScript(lane=0, speeds=((0.0, 10.0), (1.0, 0.0), (2.0, 4.0)), initial_station=3.0)

		npt.assert_allclose([ego_station(ego, t) for t in (0.0, 0.5, 1.0, 1.5, 3.0)],
							[3.0, 8.0, 13.0, 13.0, 17.0])



class TestBehaviors(unittest.TestCase):


	def test_constant_speed_offsets(self):

		actor = ActorScript("car-1", "car", (4.5, 1.9, 1.6), ConstantSpeed(12.0), initial_station=20.0, lane=0)
		scene = simulate(STRAIGHT, CRUISING_EGO, [actor], 10, 10.0, RIG, scene_id="constant")

		npt.assert_allclose(offsets_of(scene, "car-1")[1:], [(1.2, 0.0, 0.0)] * 9, atol=1e-12)
		npt.assert_allclose(scene.frames[4].instances[0].center_world, (20.0 + 12.0 * 0.4, 0.0, 0.8))
		npt.assert_allclose(scene.frames[4].ego.translation_we, (4.0, 3.5, 0.0))


	def test_brake_stops(self):

		actor = ActorScript("car-1", "car", (4.5, 1.9, 1.6), Brake(t_start=0.2, decel=5.0, v0=10.0), 30.0, 1)
		scene = simulate(STRAIGHT, CRUISING_EGO, [actor], 40, 10.0, RIG)
		offsets = offsets_of(scene, "car-1")

		npt.assert_allclose(offsets[1], (1.0, 0.0, 0.0), atol=1e-12)
		npt.assert_equal(all(offsets[i][0] <= offsets[i - 1][0] + 1e-12 for i in range(2, 40)), True)

		for i in range(24, 40):
			npt.assert_array_equal(offsets[i], (0.0, 0.0, 0.0))

		# v0^2 / (2 decel) after the constant-speed part
		npt.assert_allclose(scene.frames[-1].instances[0].center_world[0], 30.0 + 2.0 + 10.0, atol=1e-9)


	def test_cut_in_follows_smoothstep(self):

		behavior = CutIn(t_start=0.5, duration=1.0, source_lane=0, target_lane=1, v=10.0)
		actor = ActorScript("car-1", "car", (4.5, 1.9, 1.6), behavior, 15.0, 0)
		scene = simulate(STRAIGHT, CRUISING_EGO, [actor], 25, 10.0, RIG)

		lateral = [f.instances[0].center_world[1] for f in scene.frames]
		yaw = [f.instances[0].yaw_world for f in scene.frames]

		npt.assert_allclose(lateral[:6], 0.0, atol=1e-12)
		npt.assert_allclose(lateral[10], 1.75, atol=1e-12)
		npt.assert_allclose(lateral[15:], 3.5, atol=1e-12)
		npt.assert_equal(np.all(np.diff(lateral) >= -1e-12), True)

		npt.assert_allclose(yaw[10], math.atan2(3.5 * 1.5, 10.0), atol=1e-12)
		npt.assert_allclose(yaw[:5], 0.0, atol=1e-12)
		npt.assert_allclose(yaw[16:], 0.0, atol=1e-12)


	def test_parked_actor_has_zero_flow(self):

		actor = ActorScript("car-1", "car", (4.5, 1.9, 1.6), ConstantSpeed(0.0), 12.0, 1)
		scene = simulate(STRAIGHT, CRUISING_EGO, [actor], 5, 10.0, RIG)

		cam = find_camera(scene, "CAM_FRONT")
		trajectory_map = rasterize_flow(scene, compute_offsets(scene), 3, cam)

		npt.assert_equal(trajectory_map.coverage.any(), True)
		npt.assert_array_equal(normalize_to_rgb(trajectory_map).pixels, 128)


	def test_collisions_are_reported(self):

		a = ActorScript("car-1", "car", (4.5, 1.9, 1.6), ConstantSpeed(5.0), 20.0, 0)
		b = ActorScript("car-2", "car", (4.5, 1.9, 1.6), ConstantSpeed(5.0), 21.0, 0)

		with self.assertLogs('conditions.scenario_sim', level='WARNING'):
			scene = simulate(STRAIGHT, CRUISING_EGO, [a, b], 3, 10.0, RIG)

		warnings = collision_warnings(scene)
		npt.assert_equal([(w.frame, w.first, w.second) for w in warnings],
						[(0, "car-1", "car-2"), (1, "car-1", "car-2"), (2, "car-1", "car-2")])
		npt.assert_allclose(warnings[0].distance, 1.0)


	def test_script_errors(self):

		car = (4.5, 1.9, 1.6)

		cases = [
			(STRAIGHT, CRUISING_EGO, [ActorScript("a", "car", car, ConstantSpeed(1.0), 0.0, 3)]),
			(STRAIGHT, CRUISING_EGO, [ActorScript("a", "car", car, CutIn(0.0, 1.0, 1, 2, 5.0), 0.0, 0)]),
			(STRAIGHT, CRUISING_EGO, [ActorScript("a", "car", car, Brake(0.0, 0.0, 5.0), 0.0, 0)]),
			(STRAIGHT, CRUISING_EGO, [ActorScript("a", "car", (4.5, 0.0, 1.6), ConstantSpeed(1.0))]),
			(STRAIGHT, CRUISING_EGO, [ActorScript("a", "car", car, ConstantSpeed(1.0)),
									ActorScript("a", "car", car, ConstantSpeed(1.0), 30.0)]),
			(STRAIGHT, EgoScript(lane=0, speeds=((0.5, 10.0),)), []),
			(STRAIGHT, EgoScript(lane=0, speeds=((0.0, 10.0), (0.0, 5.0))), []),
			(STRAIGHT, EgoScript(lane=5, speeds=((0.0, 10.0),)), []),
			(STRAIGHT._replace(lane_width=1.5), CRUISING_EGO, []),
			(STRAIGHT._replace(curvature=0.5), CRUISING_EGO, []),
		]

		for layout, ego, actors in cases:
			npt.assert_raises(ScriptError, simulate, layout, ego, actors, 5, 10.0, RIG)

		npt.assert_raises(ScriptError, simulate, STRAIGHT, CRUISING_EGO, [], 1, 10.0, RIG)



class TestSimulatedScenes(unittest.TestCase):


	def test_rig(self):

		rig = surround_rig()

		npt.assert_equal(len(rig), 6)
		for cam in rig:
			npt.assert_equal(is_orthonormal(cam.R), True)
			npt.assert_array_equal(np.asarray(cam.K)[:2, 2], (224.0, 128.0))


	def test_scene_is_valid_and_canonical(self):

		behavior = CutIn(t_start=0.2, duration=1.0, source_lane=2, target_lane=1, v=12.0)
		actors = [ActorScript("car-1", "car", (4.5, 1.9, 1.6), behavior, 25.0, 2),
				ActorScript("truck-1", "truck", (8.0, 2.5, 3.0), Brake(0.5, 4.0, 10.0), 50.0, 1)]

		scene = simulate(STRAIGHT._replace(curvature=0.003), CRUISING_EGO, actors, 16, 10.0, surround_rig(),
						scene_id="cut-in")

		npt.assert_equal(validate_scene(scene), [])
		data = serialize_scene(scene)
		npt.assert_equal(serialize_scene(parse_scene(data)), data)

		npt.assert_equal("cuts in from lane 2 to lane 1" in scene.description, True)
		npt.assert_equal(scene.frames[0].instances[1].center_world[2], 1.5)
		npt.assert_equal(scene.frames[0].ego.translation_we[2], 0.0)


	def test_random_scenarios(self):

		npt.assert_equal(random_scenario(seed=3), random_scenario(seed=3))
		npt.assert_equal(random_scenario(seed=3) == random_scenario(seed=4), False)

		behaviors = set()
		lane_counts = set()
		for seed in range(200):
			layout, ego, actors = random_scenario(seed=seed)
			lane_counts.add(layout.lane_count)
			behaviors |= {type(a.behavior).__name__ for a in actors}

		npt.assert_equal(lane_counts, {2, 3, 4})
		npt.assert_equal(behaviors, {"ConstantSpeed", "CutIn", "Brake"})


	def test_random_scenes_validate(self):

		for seed in range(10):
			layout, ego, actors = random_scenario(seed=seed)
			scene = simulate(layout, ego, actors, 8, 10.0, RIG, seed=seed)

			npt.assert_equal([v for v in validate_scene(scene) if v.severity == 'error'], [])
			npt.assert_equal(scene.scene_id.startswith("sim-"), True)


	def test_random_scripts_follow_their_behavior(self):

		"""
		Braking actors never speed up after the trigger and cut-in actors
		sit on the target lane once their window is over.
		"""

		times = np.arange(0, 60) / 10.0

		for seed in range(300):
			layout, _, actors = random_scenario(seed=seed)

			for actor in actors:
				b = actor.behavior
				if isinstance(b, Brake):
					speeds = [actor_speed(actor, t) for t in times if t >= b.t_start]
					npt.assert_equal(all(v_b <= v_a for v_a, v_b in zip(speeds[:-1], speeds[1:])), True)
					npt.assert_equal(min(speeds + [b.v0]) >= 0.0, True)

				elif isinstance(b, CutIn):
					end = b.t_start + b.duration
					npt.assert_allclose(actor_state(actor, layout, end)[1], lane_offset(layout, b.target_lane),
										atol=1e-12)
					npt.assert_allclose(actor_state(actor, layout, b.t_start)[1],
										lane_offset(layout, b.source_lane), atol=1e-12)



class TestScenarioDocuments(unittest.TestCase):

	document = {
		"scene_id": "doc-cut-in",
		"frames": 6,
		"frame_rate": 10.0,
		"layout": {"lane_count": 2, "lane_width": 3.5},
		"ego": {"lane": 0, "speeds": [[0.0, 8.0]]},
		"actors": [
			{"actor_id": "car-1", "class_label": "car", "lane": 1, "initial_station": 15.0,
			"behavior": {"type": "cut_in", "t_start": 0.1, "duration": 0.3, "source_lane": 1, "target_lane": 0,
						"v": 9.0}},
			{"actor_id": "bus-1", "class_label": "bus", "lane": 0, "initial_station": 40.0,
			"behavior": {"type": "constant_speed", "v": 0.0}}
		],
		"rig": {"width": 64, "height": 32, "focal": 28.0}
	}


	def test_load(self):

		scenario = load_scenario(json.dumps(self.document))

		npt.assert_equal(scenario.scene_id, "doc-cut-in")
		npt.assert_equal(scenario.actors[0].behavior, CutIn(0.1, 0.3, 1, 0, 9.0))
		# default class size
		npt.assert_equal(scenario.actors[1].size, (11.0, 2.9, 3.4))
		npt.assert_equal((scenario.rig[0].width, scenario.rig[0].height), (64, 32))

		scene = simulate_scenario(scenario)
		npt.assert_equal(len(scene.frames), 6)
		npt.assert_equal(validate_scene(scene), [])


	def test_random_block(self):

		document = {"frames": 4, "frame_rate": 10.0, "random": {"lane_count": [3, 3], "actor_count": [2, 2]}}

		scenario = load_scenario(document, seed=9)

		npt.assert_equal(scenario.layout.lane_count, 3)
		npt.assert_equal(len(scenario.actors), 2)
		npt.assert_equal(load_scenario(document, seed=9), scenario)


	def test_invalid_documents(self):

		def variant(change):
			document = json.loads(json.dumps(self.document))
			change(document)
			return document

		invalid = [
			"{not json",
			variant(lambda d: d.pop("frames")),
			variant(lambda d: d.update(frames=1)),
			variant(lambda d: d.pop("layout")),
			variant(lambda d: d["actors"][0]["behavior"].update(type="teleport")),
			variant(lambda d: d["actors"][0]["behavior"].update(speed=3.0)),
			variant(lambda d: d["actors"][1].update(class_label="tram")),
			{"frames": 4, "frame_rate": 10.0, "random": {"wheels": [1, 2]}},
		]

		for document in invalid:
			npt.assert_raises(ScriptError, load_scenario, document)

		# Script-level checks happen at simulation time
		lane_mismatch = variant(lambda d: d["actors"][0].update(lane=0))
		npt.assert_raises(ScriptError, simulate_scenario, load_scenario(lane_mismatch))


	def test_shipped_configurations(self):

		folder = ospath.join(ospath.dirname(ospath.abspath(__file__)), '..', 'configurations')

		for name in ("cutin_scenario.json", "braking_scenario.json", "random_scenario.json"):
			with open(ospath.join(folder, name), 'r', encoding='utf-8') as f:
				configuration = json.load(f)

			scene = simulate_scenario(load_scenario(configuration["scenario"], configuration.get("seed", 0)),
									configuration.get("seed", 0))
			npt.assert_equal([v for v in validate_scene(scene) if v.severity == 'error'], [])



# Running all unittests
if __name__ == "__main__":
	unittest.main()
