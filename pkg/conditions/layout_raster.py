"""
Camera-view layout conditions: occlusion-ordered 3D box projections and
road map projections, plus their composition.
"""

import hashlib
import json
from collections import namedtuple

import numpy as np

from conditions.geometry import BOX_EDGES, Z_NEAR, vehicle_to_camera, world_to_vehicle
from conditions.raster import draw_camera_polyline, fill_region, instance_footprint, painter_order
from conditions.scene_model import DEFAULT_OBJECT_CLASSES, DEFAULT_ROAD_CLASSES


# Indexed by class registry order (docs/palette.md)
OBJECT_COLORS = ((255, 158, 0), (255, 99, 71), (255, 69, 0), (255, 140, 0), (233, 150, 70),
				(0, 0, 230), (255, 61, 99), (220, 20, 60), (47, 79, 79), (112, 128, 144))

ROAD_COLORS = ((255, 255, 255), (255, 255, 0), (128, 128, 128), (0, 255, 0), (0, 255, 255),
			(255, 0, 255), (0, 128, 255), (128, 0, 255), (0, 255, 128), (64, 64, 192))

# Road kinds drawn as closed outlines
POLYGON_KINDS = frozenset(("crosswalk", "walkway", "carpark_area", "road_segment"))


Palette = namedtuple('Palette', ['objects', 'roads'])
RasterStyle = namedtuple('RasterStyle', ['fill', 'wireframe', 'alpha', 'map_line_width', 'wireframe_width'],
						defaults=(True, False, 1.0, 2, 1))

BoxRaster = namedtuple('BoxRaster', ['frame', 'camera', 'pixels', 'legend'])
MapRaster = namedtuple('MapRaster', ['frame', 'camera', 'pixels', 'legend'])



def make_palette(object_classes=DEFAULT_OBJECT_CLASSES, road_classes=DEFAULT_ROAD_CLASSES):

	"""
	Assigns the fixed color tables to a class registry, in order.

	Raises
	------

	ValueError
		When a registry holds more classes than there are colors,
		or repeats a label.
	"""

	if len(object_classes) > len(OBJECT_COLORS) or len(road_classes) > len(ROAD_COLORS):
		raise ValueError("Palette supports at most %d object and %d road classes, got %d and %d"
						% (len(OBJECT_COLORS), len(ROAD_COLORS), len(object_classes), len(road_classes)))

	for labels in (object_classes, road_classes):
		if len(set(labels)) != len(labels):
			raise ValueError("Class registry repeats a label: %s" % list(labels))

	return Palette(dict(zip(object_classes, OBJECT_COLORS)), dict(zip(road_classes, ROAD_COLORS)))


DEFAULT_PALETTE = make_palette()



def palette_digest(palette):

	document = {"objects": {k: list(v) for k, v in palette.objects.items()},
				"roads": {k: list(v) for k, v in palette.roads.items()}}

	text = json.dumps(document, sort_keys=True, separators=(',', ':'))
	return hashlib.sha256(text.encode('utf-8')).hexdigest()



def render_boxes(scene, frame, cam, style=RasterStyle(), palette=DEFAULT_PALETTE, z_near=Z_NEAR):

	"""
	Renders the 3D boxes of a frame into one camera view.

	Boxes are painted back to front by camera-frame centre depth: the
	convex hull of the valid projected corners is filled with the class
	color, blended at style.alpha over earlier content, then the 12
	cuboid edges are drawn at full intensity when style.wireframe is
	set. At alpha 1 with fill only, every pixel shows the nearest box
	whose hull covers it.

	Parameters
	----------

	scene: Scene

	frame: int

	cam: CameraRig

	style: RasterStyle

	palette: Palette

	z_near: float

	Returns
	-------

	raster: BoxRaster
		Black background, legend is the full object color table. Pixels
		only take legend colors when style.alpha is 1.
	"""

	if not 0 <= frame < len(scene.frames):
		raise IndexError("Frame %d out of range [0, %d)" % (frame, len(scene.frames)))

	pixels = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
	current = scene.frames[frame]

	labels = {}
	footprints = []
	for instance in current.instances:
		footprint = instance_footprint(instance, current.ego, cam, z_near)
		if footprint is not None:
			footprints.append(footprint)
			labels[instance.track_id] = instance.class_label

	for footprint in painter_order(footprints):

		color = palette.objects[labels[footprint.track_id]]

		if style.fill:
			fill_region(pixels, footprint.region, color, style.alpha)

		if style.wireframe:
			for a, b in BOX_EDGES:
				draw_camera_polyline(pixels, footprint.corners_camera[[a, b]], cam, color,
									style.wireframe_width, z_near)

	return BoxRaster(frame, cam.name, pixels, dict(palette.objects))



def render_map(scene, frame, cam, style=RasterStyle(), palette=DEFAULT_PALETTE, z_near=Z_NEAR):

	"""
	Renders the road map polylines seen from one camera at a frame's ego
	pose. Segments are clipped at the near plane before projection.
	"""

	if not 0 <= frame < len(scene.frames):
		raise IndexError("Frame %d out of range [0, %d)" % (frame, len(scene.frames)))

	pixels = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
	ego = scene.frames[frame].ego

	for element in scene.map:
		points = vehicle_to_camera(world_to_vehicle(element.polyline_world, ego), cam)
		draw_camera_polyline(pixels, points, cam, palette.roads[element.kind], style.map_line_width,
							z_near, closed=element.kind in POLYGON_KINDS)

	return MapRaster(frame, cam.name, pixels, dict(palette.roads))



def composite(map_raster, box_raster):

	"""
	Boxes over map: every non-black box pixel replaces the map pixel.
	"""

	pixels = map_raster.pixels.copy()
	boxes = box_raster.pixels.any(axis=2)
	pixels[boxes] = box_raster.pixels[boxes]

	return pixels



def overlay(base, flow_pixels, coverage, alpha):

	"""
	Blends flow colors at alpha over base, only where flow was filled.
	"""

	pixels = base.copy()
	if alpha <= 0:
		return pixels

	blended = alpha * flow_pixels[coverage].astype(np.float64) + (1.0 - alpha) * base[coverage]
	pixels[coverage] = np.floor(blended + 0.5).astype(np.uint8)

	return pixels



def legend_text(raster, condition):

	legend = {k: list(v) for k, v in raster.legend.items()}
	return {"condition": condition, "legend": json.dumps(legend, sort_keys=True, separators=(',', ':'))}
