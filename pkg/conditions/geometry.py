"""
Coordinate transforms between world, vehicle and camera frames, pinhole
projection, box corners and Fourier features.

Conventions: world and vehicle frames are right-handed with vehicle x
forward, y left and z up; camera frames have x right, y down and z
forward. Points are row vectors, so every function accepts a single
3-vector or an (..., 3) array.
"""

from collections import namedtuple

import numpy as np
from scipy.spatial.transform import Rotation


Z_NEAR = 0.1

# Corner k has sign bits (x, y, z) = binary k, bit set meaning '+'
CORNER_SIGNS = np.array([[1 if (k >> 2) & 1 else -1,
						1 if (k >> 1) & 1 else -1,
						1 if k & 1 else -1] for k in range(8)], dtype=np.float64)

# The 12 cuboid edges join corners whose indices differ in one bit
BOX_EDGES = tuple((a, a | bit) for bit in (4, 2, 1) for a in range(8) if not a & bit)


Projection = namedtuple('Projection', ['u', 'v', 'depth', 'valid'])
FourierSpec = namedtuple('FourierSpec', ['num_frequencies', 'base'], defaults=(2,))



def is_orthonormal(matrix, tol=1e-9):

	"""
	True when matrix is a 3x3 rotation: max |R^T R - I| <= tol and
	|det R - 1| <= tol.
	"""

	try:
		R = np.asarray(matrix, dtype=np.float64)
	except (TypeError, ValueError):
		return False

	if R.shape != (3, 3) or not np.all(np.isfinite(R)):
		return False

	return bool(np.max(np.abs(R.T @ R - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol)



class RigidTransform(namedtuple('RigidTransform', ['rotation', 'translation'])):

	"""
	RigidTransform

	x -> rotation x + translation, with rotation a 3x3 orthonormal
	array and translation a 3-vector in meters.
	"""

	__slots__ = ()


	@classmethod
	def identity(cls):

		return cls(np.eye(3), np.zeros(3))


	@classmethod
	def from_matrix(cls, matrix):

		matrix = np.asarray(matrix, dtype=np.float64)
		return cls(matrix[:3, :3].copy(), matrix[:3, 3].copy())


	def apply(self, points):

		return np.asarray(points, dtype=np.float64) @ np.asarray(self.rotation).T + self.translation


	def inverse(self):

		rotation_t = np.asarray(self.rotation).T
		return RigidTransform(rotation_t, -rotation_t @ self.translation)


	def compose(self, other):

		"""
		self o other: applies other first, then self.
		"""

		rotation = np.asarray(self.rotation) @ np.asarray(other.rotation)
		return RigidTransform(rotation, np.asarray(self.rotation) @ other.translation + self.translation)


	def as_matrix(self):

		matrix = np.eye(4)
		matrix[:3, :3] = self.rotation
		matrix[:3, 3] = self.translation
		return matrix



def ego_transform(ego):

	"""
	Vehicle to world transform of an ego pose.
	"""

	return RigidTransform(np.asarray(ego.rotation_we, dtype=np.float64),
						np.asarray(ego.translation_we, dtype=np.float64))



def camera_transform(cam):

	"""
	Vehicle to camera transform of a camera rig.
	"""

	return RigidTransform(np.asarray(cam.R, dtype=np.float64), np.asarray(cam.T, dtype=np.float64))



def world_to_vehicle(point_world, ego):

	rotation = np.asarray(ego.rotation_we, dtype=np.float64)
	translation = np.asarray(ego.translation_we, dtype=np.float64)

	# R^T (p - t) for row vectors
	return (np.asarray(point_world, dtype=np.float64) - translation) @ rotation



def vehicle_to_world(point_vehicle, ego):

	return ego_transform(ego).apply(point_vehicle)



def vehicle_to_camera(point_vehicle, cam):

	return camera_transform(cam).apply(point_vehicle)



def camera_to_vehicle(point_camera, cam):

	R = np.asarray(cam.R, dtype=np.float64)
	return (np.asarray(point_camera, dtype=np.float64) - np.asarray(cam.T, dtype=np.float64)) @ R



def camera_center(cam):

	"""
	Camera optical centre in the vehicle frame, -R^T T.
	"""

	return camera_to_vehicle(np.zeros(3), cam)



def project(point_camera, cam, z_near=Z_NEAR):

	"""
	Pinhole projection of camera-frame points.

	Parameters
	----------

	point_camera: array-like, shape (3,) or (n, 3)
		Points in the camera frame, meters.

	cam: CameraRig

	z_near: float
		Near plane. Points with z < z_near are flagged invalid.

	Returns
	-------

	projection: Projection
		u, v in pixels, depth in meters and the valid flag. u and v are
		NaN wherever valid is False.
	"""

	points = np.asarray(point_camera, dtype=np.float64)
	x, y, z = points[..., 0], points[..., 1], points[..., 2]

	K = np.asarray(cam.K, dtype=np.float64)
	valid = z >= z_near

	with np.errstate(divide='ignore', invalid='ignore'):
		u = np.where(valid, K[0, 0] * x / z + K[0, 2], np.nan)
		v = np.where(valid, K[1, 1] * y / z + K[1, 2], np.nan)

	return Projection(u, v, z, valid)



def yaw_matrix(yaw):

	return Rotation.from_euler('z', yaw).as_matrix()



def box_corners(instance):

	"""
	The 8 world-frame corners of a gravity-aligned box.

	Corner k carries the sign pattern of binary k over (x, y, z) in the
	box frame: corner 0 is (-l/2, -w/2, -h/2), corner 7 is
	(+l/2, +w/2, +h/2).

	Returns
	-------

	corners: array, shape (8, 3)
	"""

	half = CORNER_SIGNS * (np.asarray(instance.size, dtype=np.float64) / 2.0)
	return half @ yaw_matrix(instance.yaw_world).T + np.asarray(instance.center_world, dtype=np.float64)



def fourier_embed(x, spec):

	"""
	NeRF-style Fourier features.

	Each scalar x_k maps to [sin(f_0 x_k), cos(f_0 x_k), ..., sin(f_{L-1}
	x_k), cos(f_{L-1} x_k)] with f_j = base^j * pi, concatenated in input
	(row-major) order.

	Parameters
	----------

	x: array-like
		Any shape; flattened in C order.

	spec: FourierSpec

	Returns
	-------

	features: array, shape (2 * L * x.size,)
	"""

	values = np.asarray(x, dtype=np.float64).reshape(-1)
	frequencies = np.pi * float(spec.base) ** np.arange(spec.num_frequencies)

	phases = values[:, None] * frequencies[None, :]
	return np.stack((np.sin(phases), np.cos(phases)), axis=-1).reshape(-1)
