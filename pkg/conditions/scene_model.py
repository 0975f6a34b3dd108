import json
import logging
from collections import namedtuple

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from conditions.geometry import is_orthonormal


log = logging.getLogger(__name__)

FORMAT_VERSION = "physica-scene/1"
ORTHONORMAL_TOL = 1e-9

# Defaults follow the nuScenes detection and map-expansion class names.
DEFAULT_OBJECT_CLASSES = ("car", "truck", "bus", "trailer", "construction_vehicle",
						"pedestrian", "motorcycle", "bicycle", "traffic_cone", "barrier")

DEFAULT_ROAD_CLASSES = ("lane_divider", "road_divider", "road_edge", "drivable_area_boundary",
						"crosswalk", "stop_line", "walkway", "carpark_area", "lane_centerline",
						"road_segment")


ClassRegistry = namedtuple('ClassRegistry', ['object_classes', 'road_classes'])
DEFAULT_REGISTRY = ClassRegistry(DEFAULT_OBJECT_CLASSES, DEFAULT_ROAD_CLASSES)

Scene = namedtuple('Scene', ['scene_id', 'frame_rate', 'cameras', 'map', 'frames', 'description'],
					defaults=(None,))
Frame = namedtuple('Frame', ['index', 'timestamp', 'ego', 'instances'])
Instance = namedtuple('Instance', ['track_id', 'class_label', 'center_world', 'size', 'yaw_world'])
EgoPose = namedtuple('EgoPose', ['rotation_we', 'translation_we'])
CameraRig = namedtuple('CameraRig', ['name', 'K', 'R', 'T', 'width', 'height'])
MapElement = namedtuple('MapElement', ['kind', 'polyline_world'])

Violation = namedtuple('Violation', ['code', 'location', 'message', 'severity'])



class SceneError(ValueError):

	"""
	Base class for every scene ingestion failure.
	"""



class SceneSyntaxError(SceneError):

	def __init__(self, message, line=None, column=None):

		self.line = line
		self.column = column

		if line is not None:
			message = "Malformed scene JSON at line %d, column %d: %s" % (line, column, message)
		else:
			message = "Malformed scene JSON: %s" % message

		super(SceneSyntaxError, self).__init__(message)



class SchemaError(SceneError):

	def __init__(self, message, path):

		self.path = path
		super(SchemaError, self).__init__("Schema error at %s: %s" % (path, message))



class InvariantError(SceneError):

	def __init__(self, violation):

		self.violation = violation
		super(InvariantError, self).__init__("Invariant violated (%s) at %s: %s"
											% (violation.code, violation.location, violation.message))



_VECTOR3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_MATRIX3 = {"type": "array", "items": _VECTOR3, "minItems": 3, "maxItems": 3}

SCENE_SCHEMA = {
	"$schema": "https://json-schema.org/draft/2020-12/schema",
	"type": "object",
	"additionalProperties": False,
	"required": ["format", "scene_id", "frame_rate", "cameras", "map", "frames"],
	"properties": {
		"format": {"const": FORMAT_VERSION},
		"scene_id": {"type": "string"},
		"description": {"type": "string"},
		"frame_rate": {"type": "number"},
		"cameras": {
			"type": "array",
			"items": {
				"type": "object",
				"additionalProperties": False,
				"required": ["name", "K", "R", "T", "width", "height"],
				"properties": {
					"name": {"type": "string", "minLength": 1},
					"K": _MATRIX3,
					"R": _MATRIX3,
					"T": _VECTOR3,
					"width": {"type": "integer", "minimum": 1},
					"height": {"type": "integer", "minimum": 1}
				}
			}
		},
		"map": {
			"type": "array",
			"items": {
				"type": "object",
				"additionalProperties": False,
				"required": ["kind", "polyline_world"],
				"properties": {
					"kind": {"type": "string"},
					"polyline_world": {"type": "array", "items": _VECTOR3}
				}
			}
		},
		"frames": {
			"type": "array",
			"items": {
				"type": "object",
				"additionalProperties": False,
				"required": ["index", "timestamp", "ego", "instances"],
				"properties": {
					"index": {"type": "integer", "minimum": 0},
					"timestamp": {"type": "number"},
					"ego": {
						"type": "object",
						"additionalProperties": False,
						"required": ["rotation_we", "translation_we"],
						"properties": {
							"rotation_we": _MATRIX3,
							"translation_we": _VECTOR3
						}
					},
					"instances": {
						"type": "array",
						"items": {
							"type": "object",
							"additionalProperties": False,
							"required": ["track_id", "class_label", "center_world", "size", "yaw_world"],
							"properties": {
								"track_id": {"type": "string", "minLength": 1},
								"class_label": {"type": "string"},
								"center_world": _VECTOR3,
								"size": _VECTOR3,
								"yaw_world": {"type": "number"}
							}
						}
					}
				}
			}
		}
	}
}

_VALIDATOR = Draft202012Validator(SCENE_SCHEMA)



def _json_path(parts):

	path = "$"
	for part in parts:
		if isinstance(part, int):
			path += "[%d]" % part
		else:
			path += "." + str(part)

	return path



def _reject_constant(token):

	raise SceneSyntaxError("non-finite number '%s' is not allowed" % token)



def _vector(values):

	return tuple(float(v) for v in values)



def _matrix(rows):

	return tuple(_vector(row) for row in rows)



def parse_scene(data, registry=DEFAULT_REGISTRY, check=True):

	"""
	Parses a scene document into an immutable Scene.

	Parameters
	----------

	data: bytes or str
		UTF-8 JSON text in the physica-scene/1 format
		(see docs/scene-format.md).

	registry: ClassRegistry
		Object and road classes accepted by the invariant check.

	check: boolean
		When False only syntax and schema are enforced, which lets
		callers list every violation through validate_scene.

	Returns
	-------

	scene: Scene

	Raises
	------

	SceneSyntaxError, SchemaError, InvariantError
	"""

	if isinstance(data, bytes):
		try:
			text = data.decode('utf-8')
		except UnicodeDecodeError as e:
			line = data[:e.start].count(b'\n') + 1
			column = e.start - (data.rfind(b'\n', 0, e.start) + 1) + 1
			raise SceneSyntaxError("invalid UTF-8 byte", line, column)
	else:
		text = data

	try:
		document = json.loads(text, parse_constant=_reject_constant)
	except json.JSONDecodeError as e:
		raise SceneSyntaxError(e.msg, e.lineno, e.colno)

	error = best_match(_VALIDATOR.iter_errors(document))
	if error is not None:
		raise SchemaError(error.message, _json_path(error.absolute_path))

	scene = _build_scene(document)

	if check:
		for violation in validate_scene(scene, registry):
			if violation.severity == 'error':
				raise InvariantError(violation)
			log.warning("%s at %s: %s", violation.code, violation.location, violation.message)

	return scene



def _build_scene(document):

	cameras = tuple(CameraRig(name=c['name'], K=_matrix(c['K']), R=_matrix(c['R']),
							T=_vector(c['T']), width=int(c['width']), height=int(c['height']))
					for c in document['cameras'])

	map_elements = tuple(MapElement(kind=m['kind'], polyline_world=_matrix(m['polyline_world']))
						for m in document['map'])

	frames = []
	for f in document['frames']:

		ego = EgoPose(rotation_we=_matrix(f['ego']['rotation_we']),
					translation_we=_vector(f['ego']['translation_we']))

		instances = tuple(Instance(track_id=i['track_id'], class_label=i['class_label'],
								center_world=_vector(i['center_world']), size=_vector(i['size']),
								yaw_world=float(i['yaw_world']))
						for i in f['instances'])

		frames.append(Frame(index=int(f['index']), timestamp=float(f['timestamp']),
							ego=ego, instances=instances))

	return Scene(scene_id=document['scene_id'], frame_rate=float(document['frame_rate']),
				cameras=cameras, map=map_elements, frames=tuple(frames),
				description=document.get('description'))



def scene_document(scene):

	"""
	Plain JSON-ready dictionary of a scene, every number coerced to a
	Python float (or int for indices and image sizes).
	"""

	document = {
		"format": FORMAT_VERSION,
		"scene_id": scene.scene_id,
		"frame_rate": float(scene.frame_rate),
		"cameras": [{"name": c.name,
					"K": [list(_vector(row)) for row in c.K],
					"R": [list(_vector(row)) for row in c.R],
					"T": list(_vector(c.T)),
					"width": int(c.width),
					"height": int(c.height)} for c in scene.cameras],
		"map": [{"kind": m.kind,
				"polyline_world": [list(_vector(p)) for p in m.polyline_world]} for m in scene.map],
		"frames": [{"index": int(f.index),
					"timestamp": float(f.timestamp),
					"ego": {"rotation_we": [list(_vector(row)) for row in f.ego.rotation_we],
							"translation_we": list(_vector(f.ego.translation_we))},
					"instances": [{"track_id": i.track_id,
									"class_label": i.class_label,
									"center_world": list(_vector(i.center_world)),
									"size": list(_vector(i.size)),
									"yaw_world": float(i.yaw_world)} for i in f.instances]}
					for f in scene.frames]
	}

	if scene.description is not None:
		document["description"] = scene.description

	return document



def serialize_scene(scene):

	"""
	Canonical bytes of a scene: sorted keys, no insignificant
	whitespace, shortest round-trip float text, trailing newline.
	"""

	text = json.dumps(scene_document(scene), sort_keys=True, separators=(',', ':'),
					allow_nan=False, ensure_ascii=True)

	return (text + "\n").encode('utf-8')



def read_scene(path, registry=DEFAULT_REGISTRY, check=True):

	with open(path, 'rb') as f:
		data = f.read()

	return parse_scene(data, registry, check)



def write_scene(scene, path):

	with open(path, 'wb') as f:
		f.write(serialize_scene(scene))



def find_camera(scene, name):

	for cam in scene.cameras:
		if cam.name == name:
			return cam

	raise KeyError("No camera named '%s' in scene %s" % (name, scene.scene_id))



def _finite(values):

	try:
		return bool(np.all(np.isfinite(np.asarray(values, dtype=np.float64))))
	except (TypeError, ValueError):
		return False



def validate_scene(scene, registry=DEFAULT_REGISTRY):

	"""
	Checks every type invariant of a scene.

	Violations are data, not errors: the returned list is empty iff
	the scene is valid. Track discontinuity is reported with severity
	'warning', everything else with severity 'error'.

	Parameters
	----------

	scene: Scene

	registry: ClassRegistry

	Returns
	-------

	violations: list of Violation
		Ordered by scene traversal (scene, cameras, map, frames, tracks).
	"""

	violations = []

	def report(code, location, message, severity='error'):
		violations.append(Violation(code, location, message, severity))


	if len(scene.frames) == 0:
		report("SCENE_NO_FRAMES", "$.frames", "frames non-empty")

	if not _finite(scene.frame_rate) or not scene.frame_rate > 0:
		report("SCENE_FRAME_RATE_NOT_POSITIVE", "$.frame_rate", "frame_rate > 0")

	if len(scene.cameras) == 0:
		report("SCENE_NO_CAMERAS", "$.cameras", "at least one camera")


	# Cameras
	seen_names = set()
	for c_idx, cam in enumerate(scene.cameras):

		location = "$.cameras[%d]" % c_idx

		if cam.name in seen_names:
			report("CAM_NAME_DUPLICATE", location + ".name", "camera names unique, '%s' repeated" % cam.name)
		seen_names.add(cam.name)

		K = np.asarray(cam.K, dtype=np.float64)
		if K.shape != (3, 3) or not _finite(K) or not (K[0, 0] > 0 and K[1, 1] > 0) \
				or K[0, 1] != 0 or K[1, 0] != 0 or tuple(K[2]) != (0.0, 0.0, 1.0):
			report("CAM_K_INVALID", location + ".K", "fx, fy > 0, zero skew, last row (0, 0, 1)")

		if not is_orthonormal(cam.R, ORTHONORMAL_TOL):
			report("CAM_R_NOT_ORTHONORMAL", location + ".R", "camera R orthonormal within 1e-9")

		if not _finite(cam.T):
			report("VALUE_NOT_FINITE", location + ".T", "finite translation")

		if cam.width % 8 != 0 or cam.height % 8 != 0:
			report("IMG_DIM_NOT_DIV8", location,
					"width and height divisible by 8, got %dx%d" % (cam.width, cam.height))


	# Map elements
	for m_idx, element in enumerate(scene.map):

		location = "$.map[%d]" % m_idx

		if element.kind not in registry.road_classes:
			report("MAP_UNKNOWN_KIND", location + ".kind", "road class '%s' not registered" % element.kind)

		points = np.asarray(element.polyline_world, dtype=np.float64)
		if len(points) < 2:
			report("MAP_POLYLINE_TOO_SHORT", location + ".polyline_world", "polyline has at least 2 points")
		elif not _finite(points):
			report("VALUE_NOT_FINITE", location + ".polyline_world", "finite polyline points")
		elif np.any(np.all(points[1:] == points[:-1], axis=1)):
			report("MAP_REPEATED_POINT", location + ".polyline_world", "consecutive points not identical")


	# Frames
	previous_timestamp = None
	for f_idx, frame in enumerate(scene.frames):

		location = "$.frames[%d]" % f_idx

		if frame.index != f_idx:
			report("FRAME_INDEX_MISMATCH", location + ".index",
					"frame index equals its position, got %d at %d" % (frame.index, f_idx))

		if not _finite(frame.timestamp):
			report("VALUE_NOT_FINITE", location + ".timestamp", "finite timestamp")
		elif previous_timestamp is not None and not frame.timestamp > previous_timestamp:
			report("FRAME_TIMESTAMP_NOT_INCREASING", location + ".timestamp",
					"frame timestamps strictly increasing")
		previous_timestamp = frame.timestamp

		if not is_orthonormal(frame.ego.rotation_we, ORTHONORMAL_TOL):
			report("EGO_R_NOT_ORTHONORMAL", location + ".ego.rotation_we", "ego rotation orthonormal within 1e-9")

		if not _finite(frame.ego.translation_we):
			report("VALUE_NOT_FINITE", location + ".ego.translation_we", "finite translation")

		track_ids = set()
		for i_idx, instance in enumerate(frame.instances):

			i_location = location + ".instances[%d]" % i_idx

			if instance.track_id in track_ids:
				report("FRAME_TRACK_ID_DUPLICATE", i_location + ".track_id",
						"track_ids unique within a frame, '%s' repeated" % instance.track_id)
			track_ids.add(instance.track_id)

			if instance.class_label not in registry.object_classes:
				report("INST_UNKNOWN_CLASS", i_location + ".class_label",
						"class_label '%s' not registered" % instance.class_label)

			if not _finite(instance.size) or not all(s > 0 for s in instance.size):
				report("INST_SIZE_NOT_POSITIVE", i_location + ".size", "size components > 0")

			if not _finite(instance.center_world) or not _finite(instance.yaw_world):
				report("VALUE_NOT_FINITE", i_location, "finite center and yaw")


	# Track continuity
	appearances = {}
	for f_idx, frame in enumerate(scene.frames):
		for instance in frame.instances:
			appearances.setdefault(instance.track_id, []).append(f_idx)

	for track_id in sorted(appearances):
		frames_seen = appearances[track_id]
		if frames_seen[-1] - frames_seen[0] + 1 != len(set(frames_seen)):
			report("TRACK_NOT_CONTIGUOUS", "$.frames",
					"track '%s' absent inside frames %d..%d" % (track_id, frames_seen[0], frames_seen[-1]),
					severity='warning')

	return violations
