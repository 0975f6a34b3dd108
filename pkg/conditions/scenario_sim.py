"""
Waypoint-based synthetic scenarios (cut-in, sudden braking) on a
straight or constant-curvature multi-lane road, simulated into Scenes.
"""

import json
import logging
import math
from collections import namedtuple

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from conditions.geometry import yaw_matrix
from conditions.scene_model import CameraRig, EgoPose, Frame, Instance, MapElement, Scene
from conditions.seeding import SplitMix64, derive_seed


log = logging.getLogger(__name__)

MIN_LANE_WIDTH = 2.0

# Spacing of the map polyline samples on curved layouts, meters
ARC_SAMPLE_SPACING = 2.0

SURROUND_CAMERAS = (("CAM_FRONT", 0.0), ("CAM_FRONT_RIGHT", -60.0), ("CAM_BACK_RIGHT", -120.0),
					("CAM_BACK", 180.0), ("CAM_BACK_LEFT", 120.0), ("CAM_FRONT_LEFT", 60.0))

CLASS_SIZES = {"car": (4.5, 1.9, 1.6), "truck": (8.0, 2.5, 3.0), "bus": (11.0, 2.9, 3.4),
			"motorcycle": (2.1, 0.8, 1.4)}


LaneLayout = namedtuple('LaneLayout', ['origin', 'heading', 'curvature', 'length', 'lane_count', 'lane_width'],
						defaults=(0.0, 200.0, 3, 3.5))

ConstantSpeed = namedtuple('ConstantSpeed', ['v'])
CutIn = namedtuple('CutIn', ['t_start', 'duration', 'source_lane', 'target_lane', 'v'])
Brake = namedtuple('Brake', ['t_start', 'decel', 'v0'])

ActorScript = namedtuple('ActorScript', ['actor_id', 'class_label', 'size', 'behavior', 'initial_station', 'lane'],
						defaults=(0.0, 0))
EgoScript = namedtuple('EgoScript', ['lane', 'speeds', 'initial_station'], defaults=(0.0,))

Scenario = namedtuple('Scenario', ['scene_id', 'frames', 'frame_rate', 'layout', 'ego', 'actors', 'rig'])

ScenarioRanges = namedtuple('ScenarioRanges', ['lane_count', 'lane_width', 'curvature', 'actor_count',
												'actor_speed', 'ego_speed', 'station', 't_start',
												'duration', 'decel', 'behaviors', 'classes'],
							defaults=((2, 4), (3.0, 3.75), (-0.005, 0.005), (0, 6), (0.0, 20.0),
									(5.0, 15.0), (10.0, 80.0), (0.0, 1.0), (0.5, 1.5), (2.0, 8.0),
									('constant_speed', 'cut_in', 'brake'), ('car', 'truck', 'bus')))

CollisionWarning = namedtuple('CollisionWarning', ['frame', 'first', 'second', 'distance'])



class ScriptError(ValueError):
	pass



def _check(condition, message, *args):

	if not condition:
		raise ScriptError(message % args)



def lane_offset(layout, lane):

	"""
	Signed lateral offset (left positive) of a lane centerline from the
	reference line, which is lane 0.
	"""

	_check(0 <= lane < layout.lane_count, "Unknown lane %r, layout has %d lanes", lane, layout.lane_count)
	return lane * layout.lane_width



def layout_point(layout, station, offset):

	"""
	World (x, y) and tangent heading of the point at a given station
	along the reference line and lateral offset from it.
	"""

	x0, y0 = layout.origin
	theta0, kappa = layout.heading, layout.curvature

	if kappa == 0:
		x = x0 + station * math.cos(theta0) - offset * math.sin(theta0)
		y = y0 + station * math.sin(theta0) + offset * math.cos(theta0)
		return x, y, theta0

	theta = theta0 + kappa * station
	radius = 1.0 / kappa - offset
	cx = x0 - math.sin(theta0) / kappa
	cy = y0 + math.cos(theta0) / kappa

	return cx + radius * math.sin(theta), cy - radius * math.cos(theta), theta



def check_layout(layout):

	_check(layout.lane_count >= 1, "lane_count must be >= 1, got %r", layout.lane_count)
	_check(layout.lane_width > MIN_LANE_WIDTH, "lane_width must exceed %.1f m, got %r",
			MIN_LANE_WIDTH, layout.lane_width)
	_check(layout.length > 0, "Layout length must be positive, got %r", layout.length)

	extent = (layout.lane_count - 0.5) * layout.lane_width
	_check(abs(layout.curvature) * max(extent, 0.5 * layout.lane_width) < 1.0,
			"Curvature %r too tight for a %d-lane road", layout.curvature, layout.lane_count)



def layout_map(layout):

	"""
	Map elements of a layout: lane centerlines, lane dividers between
	neighbouring lanes and the two drivable-area boundaries.
	"""

	if layout.curvature == 0:
		stations = np.array([0.0, layout.length])
	else:
		samples = int(math.ceil(layout.length / ARC_SAMPLE_SPACING)) + 1
		stations = np.linspace(0.0, layout.length, samples)

	def polyline(offset):
		return tuple((x, y, 0.0) for x, y, _ in (layout_point(layout, float(s), offset) for s in stations))

	width = layout.lane_width
	elements = [MapElement("drivable_area_boundary", polyline(-0.5 * width))]
	elements += [MapElement("lane_divider", polyline((k + 0.5) * width)) for k in range(layout.lane_count - 1)]
	elements.append(MapElement("drivable_area_boundary", polyline((layout.lane_count - 0.5) * width)))
	elements += [MapElement("lane_centerline", polyline(k * width)) for k in range(layout.lane_count)]

	return tuple(elements)



def smoothstep(s):

	s = min(max(s, 0.0), 1.0)
	return 3.0 * s * s - 2.0 * s * s * s



def check_actor(actor, layout):

	_check(len(actor.size) == 3 and all(s > 0 for s in actor.size),
			"Actor %s: size components must be positive", actor.actor_id)

	behavior = actor.behavior
	if isinstance(behavior, ConstantSpeed):
		_check(behavior.v >= 0, "Actor %s: negative speed %r", actor.actor_id, behavior.v)
		lane_offset(layout, actor.lane)

	elif isinstance(behavior, CutIn):
		_check(behavior.v >= 0, "Actor %s: negative speed %r", actor.actor_id, behavior.v)
		_check(behavior.t_start >= 0, "Actor %s: negative t_start %r", actor.actor_id, behavior.t_start)
		_check(behavior.duration > 0, "Actor %s: duration must be positive", actor.actor_id)
		_check(behavior.source_lane == actor.lane, "Actor %s: cut-in must start from its lane %d",
				actor.actor_id, actor.lane)
		lane_offset(layout, behavior.source_lane)
		lane_offset(layout, behavior.target_lane)

	elif isinstance(behavior, Brake):
		_check(behavior.v0 >= 0, "Actor %s: negative speed %r", actor.actor_id, behavior.v0)
		_check(behavior.t_start >= 0, "Actor %s: negative t_start %r", actor.actor_id, behavior.t_start)
		_check(behavior.decel > 0, "Actor %s: decel must be positive", actor.actor_id)
		lane_offset(layout, actor.lane)

	else:
		raise ScriptError("Actor %s: unknown behavior %r" % (actor.actor_id, behavior))



def actor_state(actor, layout, t):

	"""
	Station, lateral offset and their rates for an actor at time t.
	All behaviors are closed form.

	Returns
	-------

	state: tuple (station, offset, station_rate, offset_rate)
	"""

	behavior = actor.behavior
	s0 = actor.initial_station

	if isinstance(behavior, ConstantSpeed):
		return s0 + behavior.v * t, lane_offset(layout, actor.lane), behavior.v, 0.0

	if isinstance(behavior, CutIn):
		o_src = lane_offset(layout, behavior.source_lane)
		o_tgt = lane_offset(layout, behavior.target_lane)

		s = (t - behavior.t_start) / behavior.duration
		weight = smoothstep(s)
		rate = 6.0 * s * (1.0 - s) / behavior.duration if 0.0 < s < 1.0 else 0.0

		return (s0 + behavior.v * t, (1.0 - weight) * o_src + weight * o_tgt,
				behavior.v, (o_tgt - o_src) * rate)

	# Brake
	offset = lane_offset(layout, actor.lane)
	if t <= behavior.t_start:
		return s0 + behavior.v0 * t, offset, behavior.v0, 0.0

	tau = min(t - behavior.t_start, behavior.v0 / behavior.decel)
	station = s0 + behavior.v0 * behavior.t_start + behavior.v0 * tau - 0.5 * behavior.decel * tau * tau

	return station, offset, max(0.0, behavior.v0 - behavior.decel * (t - behavior.t_start)), 0.0



def actor_speed(actor, t):

	"""
	Speed along the reference line.
	"""

	behavior = actor.behavior
	if isinstance(behavior, Brake):
		return behavior.v0 if t <= behavior.t_start else max(0.0, behavior.v0 - behavior.decel * (t - behavior.t_start))

	return behavior.v



def check_ego(ego, layout):

	lane_offset(layout, ego.lane)
	_check(len(ego.speeds) >= 1, "Ego speed profile is empty")
	_check(ego.speeds[0][0] == 0, "Ego speed profile must start at t = 0")

	for (t_a, v_a), (t_b, _) in zip(ego.speeds[:-1], ego.speeds[1:]):
		_check(t_b > t_a, "Ego speed profile times must increase")

	for t_k, v_k in ego.speeds:
		_check(t_k >= 0, "Negative time %r in ego speed profile", t_k)
		_check(v_k >= 0, "Negative speed %r in ego speed profile", v_k)



def ego_station(ego, t):

	station = ego.initial_station
	for k, (t_k, v_k) in enumerate(ego.speeds):
		t_next = ego.speeds[k + 1][0] if k + 1 < len(ego.speeds) else math.inf
		if t <= t_k:
			break
		station += v_k * (min(t, t_next) - t_k)

	return station



def surround_rig(width=448, height=256, focal=350.0, mount_height=1.5):

	"""
	Six cameras at 60 degree spacing mounted above the vehicle origin,
	x right, y down, z along the viewing direction.
	"""

	K = ((float(focal), 0.0, width / 2.0), (0.0, float(focal), height / 2.0), (0.0, 0.0, 1.0))

	rig = []
	for name, yaw_deg in SURROUND_CAMERAS:

		psi = math.radians(yaw_deg)
		R = np.array([[math.sin(psi), -math.cos(psi), 0.0],
					[0.0, 0.0, -1.0],
					[math.cos(psi), math.sin(psi), 0.0]])
		T = -R @ np.array([0.0, 0.0, mount_height])

		rig.append(CameraRig(name, K, tuple(tuple(float(v) for v in row) for row in R),
							tuple(float(v) for v in T), int(width), int(height)))

	return tuple(rig)



def describe(layout, ego, actors):

	"""
	One-paragraph text prompt of a scenario.
	"""

	road = "straight" if layout.curvature == 0 else "curved (radius %.0f m)" % abs(1.0 / layout.curvature)
	parts = ["A %d-lane %s road; the ego vehicle drives in lane %d at %.1f m/s."
			% (layout.lane_count, road, ego.lane, ego.speeds[0][1])]

	for actor in actors:
		b = actor.behavior
		if isinstance(b, CutIn):
			parts.append("A %s cuts in from lane %d to lane %d at %.1f s." % (actor.class_label, b.source_lane,
																				b.target_lane, b.t_start))
		elif isinstance(b, Brake):
			parts.append("A %s in lane %d brakes hard at %.1f s." % (actor.class_label, actor.lane, b.t_start))
		elif b.v == 0:
			parts.append("A %s is parked in lane %d." % (actor.class_label, actor.lane))
		else:
			parts.append("A %s drives in lane %d at %.1f m/s." % (actor.class_label, actor.lane, b.v))

	return " ".join(parts)



def simulate(layout, ego, actors, frames, frame_rate, rig, seed=0, scene_id=None):

	"""
	Simulates a scripted scenario into a Scene.

	Parameters
	----------

	layout: LaneLayout

	ego: EgoScript

	actors: list of ActorScript

	frames: int
		Number of frames T >= 2, sampled at t = i / frame_rate.

	frame_rate: float

	rig: list of CameraRig
		Copied into the scene.

	seed: int
		Only names the scene when scene_id is None.

	scene_id: str

	Returns
	-------

	scene: Scene
	"""

	_check(frames >= 2, "A scenario needs at least 2 frames, got %r", frames)
	_check(frame_rate > 0, "frame_rate must be positive, got %r", frame_rate)
	_check(len(set(a.actor_id for a in actors)) == len(actors), "Actor ids must be unique")

	check_layout(layout)
	check_ego(ego, layout)
	for actor in actors:
		check_actor(actor, layout)

	ego_lane = lane_offset(layout, ego.lane)
	scene_frames = []

	for i in range(frames):

		t = i / frame_rate

		x, y, heading = layout_point(layout, ego_station(ego, t), ego_lane)
		pose = EgoPose(tuple(tuple(float(v) for v in row) for row in yaw_matrix(heading)), (x, y, 0.0))

		instances = []
		for actor in actors:
			station, offset, station_rate, offset_rate = actor_state(actor, layout, t)
			ax, ay, theta = layout_point(layout, station, offset)
			yaw = theta + math.atan2(offset_rate, station_rate * (1.0 - layout.curvature * offset))

			instances.append(Instance(actor.actor_id, actor.class_label, (ax, ay, actor.size[2] / 2.0),
									tuple(float(s) for s in actor.size), yaw))

		scene_frames.append(Frame(i, t, pose, tuple(instances)))

	if scene_id is None:
		scene_id = "sim-%016x" % derive_seed(seed, 'scene')

	scene = Scene(scene_id, float(frame_rate), tuple(rig), layout_map(layout), tuple(scene_frames),
				describe(layout, ego, actors))

	for warning in collision_warnings(scene):
		log.warning("Actors %s and %s overlap at frame %d (%.2f m apart)",
					warning.first, warning.second, warning.frame, warning.distance)

	return scene



def collision_warnings(scene):

	"""
	Pairs of instances whose inscribed footprint circles intersect.
	Scripts are not corrected, only reported.
	"""

	warnings = []
	for frame in scene.frames:
		instances = sorted(frame.instances, key=lambda i: i.track_id)
		for a_idx, a in enumerate(instances):
			for b in instances[a_idx + 1:]:
				distance = math.hypot(a.center_world[0] - b.center_world[0], a.center_world[1] - b.center_world[1])
				if distance < min(a.size[:2]) / 2.0 + min(b.size[:2]) / 2.0:
					warnings.append(CollisionWarning(frame.index, a.track_id, b.track_id, distance))

	return warnings



def random_scenario(ranges=ScenarioRanges(), seed=0):

	"""
	Seeded random scenario script.

	Lane count, lane width, curvature, ego speed, actor count and every
	actor's behavior, class, lane, station and dynamics are drawn from
	one splitmix64 stream.

	Returns
	-------

	layout: LaneLayout

	ego: EgoScript

	actors: list of ActorScript
	"""

	_check(ranges.lane_count[0] >= 1 and ranges.lane_count[0] <= ranges.lane_count[1], "Invalid lane_count range")
	_check(0 <= ranges.actor_count[0] <= ranges.actor_count[1], "Invalid actor_count range")
	_check(len(ranges.behaviors) > 0 and len(ranges.classes) > 0, "Behaviors and classes must be non-empty")

	rng = SplitMix64(derive_seed(seed, 'scenario'))

	def uniform(bounds):
		return float(rng.uniform(bounds[0], bounds[1], 1)[0])

	def integer(bounds):
		return int(rng.integers(bounds[0], bounds[1], 1)[0])

	lane_count = integer(ranges.lane_count)
	layout = LaneLayout(origin=(0.0, 0.0), heading=0.0, curvature=uniform(ranges.curvature),
						length=200.0, lane_count=lane_count, lane_width=uniform(ranges.lane_width))

	ego = EgoScript(lane=integer((0, lane_count - 1)), speeds=((0.0, uniform(ranges.ego_speed)),))

	actors = []
	for k in range(integer(ranges.actor_count)):

		kind = ranges.behaviors[integer((0, len(ranges.behaviors) - 1))]
		label = ranges.classes[integer((0, len(ranges.classes) - 1))]
		lane = integer((0, lane_count - 1))
		station = uniform(ranges.station)
		speed = uniform(ranges.actor_speed)

		if kind == 'cut_in' and lane_count > 1:
			target = lane - 1 if lane > 0 else lane + 1
			behavior = CutIn(uniform(ranges.t_start), uniform(ranges.duration), lane, target, speed)
		elif kind == 'brake':
			behavior = Brake(uniform(ranges.t_start), uniform(ranges.decel), speed)
		else:
			behavior = ConstantSpeed(speed)

		actors.append(ActorScript("%s-%d" % (label, k + 1), label, CLASS_SIZES.get(label, CLASS_SIZES["car"]),
								behavior, station, lane))

	return layout, ego, actors



SCENARIO_SCHEMA = {
	"type": "object",
	"required": ["frames", "frame_rate"],
	"additionalProperties": False,
	"properties": {
		"scene_id": {"type": "string", "minLength": 1},
		"frames": {"type": "integer", "minimum": 2},
		"frame_rate": {"type": "number", "exclusiveMinimum": 0},
		"layout": {
			"type": "object",
			"required": ["lane_count", "lane_width"],
			"additionalProperties": False,
			"properties": {
				"origin": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
				"heading": {"type": "number"},
				"curvature": {"type": "number"},
				"length": {"type": "number", "exclusiveMinimum": 0},
				"lane_count": {"type": "integer", "minimum": 1},
				"lane_width": {"type": "number"}
			}
		},
		"ego": {
			"type": "object",
			"required": ["lane", "speeds"],
			"additionalProperties": False,
			"properties": {
				"lane": {"type": "integer"},
				"initial_station": {"type": "number"},
				"speeds": {"type": "array", "minItems": 1,
						"items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
			}
		},
		"actors": {
			"type": "array",
			"items": {
				"type": "object",
				"required": ["actor_id", "class_label", "behavior"],
				"additionalProperties": False,
				"properties": {
					"actor_id": {"type": "string", "minLength": 1},
					"class_label": {"type": "string"},
					"size": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
					"lane": {"type": "integer"},
					"initial_station": {"type": "number"},
					"behavior": {
						"type": "object",
						"required": ["type"],
						"properties": {"type": {"enum": ["constant_speed", "cut_in", "brake"]}}
					}
				}
			}
		},
		"rig": {
			"type": "object",
			"additionalProperties": False,
			"properties": {
				"width": {"type": "integer", "minimum": 8},
				"height": {"type": "integer", "minimum": 8},
				"focal": {"type": "number", "exclusiveMinimum": 0},
				"mount_height": {"type": "number"}
			}
		},
		"random": {"type": "object"}
	}
}

_VALIDATOR = Draft202012Validator(SCENARIO_SCHEMA)

_BEHAVIORS = {"constant_speed": ConstantSpeed, "cut_in": CutIn, "brake": Brake}



def _behavior(document, actor_id):

	fields = dict(document)
	behavior_type = _BEHAVIORS[fields.pop("type")]

	try:
		return behavior_type(**fields)
	except TypeError:
		raise ScriptError("Actor %s: behavior '%s' takes fields %s, got %s"
						% (actor_id, document["type"], list(behavior_type._fields), sorted(fields)))



def load_scenario(document, seed=0):

	"""
	Builds a Scenario from its JSON document (docs/scenario-format.md).

	Parameters
	----------

	document: dict, str or bytes
		Parsed document or its JSON text.

	seed: int
		Used for the scene name and for the 'random' block, which
		replaces layout, ego and actors with a random_scenario draw.

	Returns
	-------

	scenario: Scenario
	"""

	if isinstance(document, (str, bytes)):
		try:
			document = json.loads(document)
		except json.JSONDecodeError as e:
			raise ScriptError("Scenario is not valid JSON: %s (line %d)" % (e.msg, e.lineno))

	error = best_match(_VALIDATOR.iter_errors(document))
	if error is not None:
		raise ScriptError("Scenario schema error at %s: %s"
						% ("/".join(str(p) for p in error.absolute_path) or "<root>", error.message))

	if "random" in document:
		try:
			ranges = ScenarioRanges(**{k: tuple(v) for k, v in document["random"].items()})
		except TypeError:
			raise ScriptError("Unknown random range in %s" % sorted(document["random"]))
		layout, ego, actors = random_scenario(ranges, seed)

	else:
		_check("layout" in document and "ego" in document, "Scenario needs layout and ego (or a random block)")

		layout_doc = dict(document["layout"])
		if "origin" in layout_doc:
			layout_doc["origin"] = tuple(layout_doc["origin"])
		layout = LaneLayout(**{"origin": (0.0, 0.0), "heading": 0.0, **layout_doc})

		ego_doc = document["ego"]
		ego = EgoScript(ego_doc["lane"], tuple((float(t), float(v)) for t, v in ego_doc["speeds"]),
						float(ego_doc.get("initial_station", 0.0)))

		actors = []
		for a in document.get("actors", []):
			label = a["class_label"]
			size = tuple(a["size"]) if "size" in a else CLASS_SIZES.get(label)
			_check(size is not None, "Actor %s: no size given and no default for class '%s'", a["actor_id"], label)
			actors.append(ActorScript(a["actor_id"], label, size, _behavior(a["behavior"], a["actor_id"]),
									float(a.get("initial_station", 0.0)), a.get("lane", 0)))

	rig = surround_rig(**document.get("rig", {}))
	scene_id = document.get("scene_id", "sim-%016x" % derive_seed(seed, 'scene'))

	return Scenario(scene_id, document["frames"], float(document["frame_rate"]), layout, ego, actors, rig)



def simulate_scenario(scenario, seed=0):

	return simulate(scenario.layout, scenario.ego, scenario.actors, scenario.frames, scenario.frame_rate,
					scenario.rig, seed, scenario.scene_id)
