"""
Small software rasterizer shared by the flow and layout renderers:
convex footprint fill, back-to-front ordering, near-plane and image
clipping of segments, and PNG input/output.

Pixel (row r, column c) is sampled at its centre (c + 0.5, r + 0.5) in
the continuous image coordinates used by the pinhole projection.
"""

from collections import namedtuple

import cv2
import numpy as np
from PIL import Image, PngImagePlugin
from scipy.spatial import ConvexHull, QhullError

from conditions.geometry import Z_NEAR, box_corners, project, vehicle_to_camera, world_to_vehicle


HULL_TOL = 1e-9

# cv2 sub-pixel precision (coordinates scaled by 2^4)
LINE_SHIFT = 4


HullRegion = namedtuple('HullRegion', ['rows', 'cols', 'mask'])
Footprint = namedtuple('Footprint', ['track_id', 'depth', 'region', 'corners_camera'])



def hull_region(points_uv, height, width):

	"""
	Pixels whose centres fall inside the closed convex hull of a set of
	image points.

	Parameters
	----------

	points_uv: array, shape (n, 2)
		Image points in pixels (u right, v down).

	height, width: int
		Image size.

	Returns
	-------

	region: HullRegion or None
		Bounding-box slices into the image plus the boolean membership
		mask over that box. None when the hull has zero area or misses
		every pixel centre.
	"""

	points = np.unique(np.asarray(points_uv, dtype=np.float64), axis=0)
	if len(points) < 3:
		return None

	try:
		hull = ConvexHull(points)
	except QhullError:
		# collinear points
		return None

	vertices = points[hull.vertices]
	u_min, v_min = vertices.min(axis=0)
	u_max, v_max = vertices.max(axis=0)

	col_lo = max(int(np.ceil(u_min - 0.5 - HULL_TOL)), 0)
	col_hi = min(int(np.floor(u_max - 0.5 + HULL_TOL)), width - 1)
	row_lo = max(int(np.ceil(v_min - 0.5 - HULL_TOL)), 0)
	row_hi = min(int(np.floor(v_max - 0.5 + HULL_TOL)), height - 1)

	if col_lo > col_hi or row_lo > row_hi:
		return None

	u = np.arange(col_lo, col_hi + 1, dtype=np.float64) + 0.5
	v = np.arange(row_lo, row_hi + 1, dtype=np.float64) + 0.5

	# equations rows are (a, b, c) with a*u + b*v + c <= 0 inside
	mask = np.ones((len(v), len(u)), dtype=bool)
	for a, b, c in hull.equations:
		mask &= (a * u[None, :] + b * v[:, None] + c) <= HULL_TOL

	if not mask.any():
		return None

	return HullRegion(slice(row_lo, row_hi + 1), slice(col_lo, col_hi + 1), mask)



def region_mask(region, height, width):

	"""
	Full-image boolean mask of a HullRegion (all False for None).
	"""

	mask = np.zeros((height, width), dtype=bool)
	if region is not None:
		mask[region.rows, region.cols] = region.mask

	return mask



def instance_footprint(instance, ego, cam, z_near=Z_NEAR):

	"""
	Projects an instance box into a camera at a given ego pose.

	The depth key is the camera-frame z of the box centre. The region is
	the hull of the corners in front of the near plane; a box with no
	valid corner has no footprint at all.

	Returns
	-------

	footprint: Footprint or None
	"""

	corners_camera = vehicle_to_camera(world_to_vehicle(box_corners(instance), ego), cam)
	center_camera = vehicle_to_camera(world_to_vehicle(instance.center_world, ego), cam)

	projection = project(corners_camera, cam, z_near)
	if not projection.valid.any():
		return None

	points = np.stack((projection.u[projection.valid], projection.v[projection.valid]), axis=1)
	region = hull_region(points, cam.height, cam.width)

	return Footprint(instance.track_id, float(center_camera[2]), region, corners_camera)



def painter_order(footprints):

	"""
	Back-to-front drawing order: farther centres first; at equal depth
	the lower track_id is drawn later, so it ends on top.
	"""

	return sorted(footprints, key=lambda f: (f.depth, f.track_id), reverse=True)



def fill_region(canvas, region, value, alpha=1.0):

	if region is None:
		return

	window = canvas[region.rows, region.cols]

	if alpha >= 1.0:
		window[region.mask] = value
	else:
		previous = window[region.mask].astype(np.float64)
		blended = alpha * np.asarray(value, dtype=np.float64) + (1.0 - alpha) * previous
		window[region.mask] = np.floor(blended + 0.5).astype(canvas.dtype)



def clip_segment_near(p0, p1, z_near=Z_NEAR):

	"""
	Clips a camera-frame segment against the plane z = z_near by
	parametric intersection.

	Returns
	-------

	segment: tuple of two 3-vectors, or None when fully behind.
	"""

	p0 = np.asarray(p0, dtype=np.float64)
	p1 = np.asarray(p1, dtype=np.float64)
	in0, in1 = p0[2] >= z_near, p1[2] >= z_near

	if in0 and in1:
		return p0, p1
	if not in0 and not in1:
		return None

	t = (z_near - p0[2]) / (p1[2] - p0[2])
	cut = p0 + t * (p1 - p0)
	cut[2] = z_near

	return (p0, cut) if in0 else (cut, p1)



def clip_segment_2d(a, b, x_min, y_min, x_max, y_max):

	"""
	Liang-Barsky clipping of segment ab to an axis-aligned rectangle.
	"""

	(x0, y0), (x1, y1) = a, b
	dx, dy = x1 - x0, y1 - y0
	t0, t1 = 0.0, 1.0

	for p, q in ((-dx, x0 - x_min), (dx, x_max - x0), (-dy, y0 - y_min), (dy, y_max - y0)):
		if p == 0:
			if q < 0:
				return None
			continue

		r = q / p
		if p < 0:
			t0 = max(t0, r)
		else:
			t1 = min(t1, r)

		if t0 > t1:
			return None

	return (x0 + t0 * dx, y0 + t0 * dy), (x0 + t1 * dx, y0 + t1 * dy)



def draw_segment(canvas, a, b, color, thickness):

	"""
	Draws an image-space segment with cv2, after clipping it to a margin
	around the canvas so that fixed-point coordinates cannot overflow.
	"""

	height, width = canvas.shape[:2]
	margin = thickness + 2

	clipped = clip_segment_2d(a, b, -margin, -margin, width + margin, height + margin)
	if clipped is None:
		return

	scale = float(1 << LINE_SHIFT)
	# continuous coordinates -> cv2 pixel-centre coordinates
	pt0 = tuple(int(np.floor((c - 0.5) * scale + 0.5)) for c in clipped[0])
	pt1 = tuple(int(np.floor((c - 0.5) * scale + 0.5)) for c in clipped[1])

	cv2.line(canvas, pt0, pt1, tuple(int(c) for c in color), int(thickness), cv2.LINE_8, LINE_SHIFT)



def draw_camera_polyline(canvas, points_camera, cam, color, thickness, z_near=Z_NEAR, closed=False):

	"""
	Draws a camera-frame polyline: each segment is clipped at the near
	plane, projected and drawn.
	"""

	points = np.asarray(points_camera, dtype=np.float64)
	pairs = list(zip(points[:-1], points[1:]))

	if closed and len(points) > 2 and not np.array_equal(points[0], points[-1]):
		pairs.append((points[-1], points[0]))

	for p0, p1 in pairs:

		segment = clip_segment_near(p0, p1, z_near)
		if segment is None:
			continue

		projection = project(np.stack(segment), cam, z_near)
		draw_segment(canvas, (projection.u[0], projection.v[0]), (projection.u[1], projection.v[1]),
					color, thickness)



def write_png(path, pixels, text=None):

	"""
	Writes an 8-bit RGB PNG, non-interlaced, with optional tEXt chunks
	(written in sorted key order).
	"""

	info = PngImagePlugin.PngInfo()
	for key in sorted(text or {}):
		info.add_text(key, text[key])

	image = Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8))
	image.save(path, format='PNG', pnginfo=info, compress_level=6)



def read_png(path):

	with Image.open(path) as image:
		pixels = np.asarray(image.convert('RGB'))
		text = dict(getattr(image, 'text', {}))

	return pixels, text
