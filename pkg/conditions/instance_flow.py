"""
Instance flow: world-frame motion of every tracked box, rasterized into
per-camera trajectory maps and encoded as RGB images.
"""

import logging
from collections import namedtuple

import numpy as np

from conditions.geometry import Z_NEAR
from conditions.raster import fill_region, instance_footprint, painter_order


log = logging.getLogger(__name__)

DEFAULT_O_MAX = 3.0


FlowTrack = namedtuple('FlowTrack', ['track_id', 'coordinates', 'offsets'])
TrajectoryMap = namedtuple('TrajectoryMap', ['frame', 'camera', 'data', 'coverage'])
FlowRGB = namedtuple('FlowRGB', ['frame', 'camera', 'pixels', 'o_max'])



class InvalidBound(ValueError):

	def __init__(self, o_max):

		ValueError.__init__(self, "Normalization bound must be positive, got %r" % (o_max,))
		self.o_max = o_max



def compute_offsets(scene):

	"""
	Builds the coordinate and offset sequences of every track.

	Offsets are world-frame differences between consecutive frames and
	are only defined where the track is present in both frames i and
	i - 1. First appearances and frames right after a gap carry None.

	Parameters
	----------

	scene: Scene

	Returns
	-------

	tracks: list of FlowTrack
		Sorted by track_id. coordinates and offsets are tuples of length
		T holding 3-tuples (meters, meters/frame) or None.
	"""

	num_frames = len(scene.frames)
	coordinates = {}

	for i, frame in enumerate(scene.frames):
		for instance in frame.instances:
			coordinates.setdefault(instance.track_id, [None] * num_frames)[i] = \
				tuple(float(c) for c in instance.center_world)

	tracks = []
	for track_id in sorted(coordinates):

		coords = coordinates[track_id]
		offsets = [None] * num_frames

		for i in range(1, num_frames):
			if coords[i] is not None and coords[i - 1] is not None:
				offsets[i] = tuple(a - b for a, b in zip(coords[i], coords[i - 1]))

		tracks.append(FlowTrack(track_id, tuple(coords), tuple(offsets)))

	return tracks



def rasterize_flow(scene, tracks, frame, cam, z_near=Z_NEAR):

	"""
	Fills the projected footprint of every moving-or-still instance of a
	frame with its world-frame offset.

	Footprints are convex hulls of the projected box corners in front of
	the near plane; overlaps are resolved back to front so that the
	instance with the nearest centre wins. Instances without a defined
	offset (first appearance, after a gap) leave the map untouched, and
	frame 0 is therefore always the zero map.

	Parameters
	----------

	scene: Scene

	tracks: list of FlowTrack
		Output of compute_offsets for the same scene.

	frame: int
		Frame index, 0 <= frame < T.

	cam: CameraRig

	z_near: float

	Returns
	-------

	trajectory_map: TrajectoryMap
		data is a float64 (H, W, 3) array; coverage flags filled pixels.
	"""

	if not 0 <= frame < len(scene.frames):
		raise IndexError("Frame %d out of range [0, %d)" % (frame, len(scene.frames)))

	data = np.zeros((cam.height, cam.width, 3), dtype=np.float64)
	coverage = np.zeros((cam.height, cam.width), dtype=bool)

	offsets = {t.track_id: t.offsets[frame] for t in tracks}
	current = scene.frames[frame]

	footprints = []
	for instance in current.instances:
		if offsets.get(instance.track_id) is None:
			continue

		footprint = instance_footprint(instance, current.ego, cam, z_near)
		if footprint is not None and footprint.region is not None:
			footprints.append(footprint)

	for footprint in painter_order(footprints):
		fill_region(data, footprint.region, offsets[footprint.track_id])
		fill_region(coverage, footprint.region, True)

	return TrajectoryMap(frame, cam.name, data, coverage)



def normalize_to_rgb(trajectory_map, o_max=DEFAULT_O_MAX):

	"""
	Encodes a trajectory map as 8-bit RGB, x -> R, y -> G, z -> B.

	Each channel is clamped to [-o_max, o_max] and mapped with
	floor(255 * (c / o_max + 1) / 2 + 0.5), so a zero offset is 128.
	"""

	if not o_max > 0:
		raise InvalidBound(o_max)

	clamped = np.clip(trajectory_map.data, -o_max, o_max)
	pixels = np.floor(255.0 * (clamped / o_max + 1.0) / 2.0 + 0.5).astype(np.uint8)

	return FlowRGB(trajectory_map.frame, trajectory_map.camera, pixels, float(o_max))



def decode_rgb(flow_rgb):

	"""
	Offsets (meters/frame) represented by the pixels of a FlowRGB, exact
	to within o_max / 255 of the clamped input.
	"""

	levels = np.asarray(flow_rgb.pixels, dtype=np.float64)
	return (2.0 * levels / 255.0 - 1.0) * flow_rgb.o_max



def flow_text(flow_rgb):

	return {
		"condition": "instance_flow",
		"channels": "x->R y->G z->B",
		"o_max": repr(float(flow_rgb.o_max)),
	}
