import hashlib
import json
import logging
import os
from copy import deepcopy
from itertools import product
from time import time

import numpy as np
from joblib import Parallel, delayed

from conditions.condition_embed import ConditionEncoder, embed_camera, embed_frame_boxes
from conditions.fusion_attn import TOKEN_LAYOUT, frame_tokens, fuse_condition, fuse_vehicle, view_layout
from conditions.instance_flow import compute_offsets, normalize_to_rgb, rasterize_flow
from conditions.layout_raster import (RasterStyle, composite, make_palette, overlay, palette_digest,
									render_boxes, render_map)
from conditions.raster import write_png
from conditions.scene_model import (DEFAULT_OBJECT_CLASSES, DEFAULT_ROAD_CLASSES, FORMAT_VERSION, ClassRegistry,
									find_camera, parse_scene)
from results import Results, load_manifest
from tensorfile import MAGIC, read_tensor_file


log = logging.getLogger(__name__)

BUNDLE_FORMAT = "physica-bundle/1"

DEFAULT_COMPILE_CONF = {"o_max": 3.0,
						"num_frequencies": 8,
						"d_model": 64,
						"z_near": 0.1,
						"t_scale": 100.0,
						"box_scale": 0.01,
						"latent_factor": 8,
						"patch_size": 2,
						"style": {"fill": True, "wireframe": False, "alpha": 1.0,
								"map_line_width": 2, "wireframe_width": 1},
						"overlay_alpha": 0.5,
						"object_classes": [],
						"road_classes": [],
						"weights_path": "",
						"write_raw_flow": False,
						"write_weights": False}



class ConfigError(ValueError):
	pass



def plain(value):

	"""
	Deep copy of a (possibly read-only) configuration value made of
	plain dicts, lists and scalars.
	"""

	if isinstance(value, dict):
		return {str(k): plain(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [plain(v) for v in value]

	return value



class Utilities:

	"""
	Utilities

	Class in charge of compiling one scene into its condition bundle:
	instance flow, box and map rasters for every (frame, camera) cell,
	camera and box embeddings, and the fused condition tensors.

	Cells are independent and run on a joblib thread pool; the
	embedding and fusion stage runs frame by frame afterwards. Output
	bytes never depend on the number of workers.


	Parameters
	----------

	general_conf: dict
		Paths and run options: 'scene_path', 'output_folder',
		'threads' and optionally 'manifest', the manifest.json of an
		earlier run whose compile_conf and seed are replayed.

	compile_conf: dict
		Numerical options of the compile, see DEFAULT_COMPILE_CONF.

	seed: int
		Seed of the encoder parameters.

	verbose: boolean
		Variable used for testing purposes. Lowers logging to warnings.


	Attributes
	----------

	_results: Results object
		Owner of the output folder.
	"""


	def __init__(self, general_conf, compile_conf, seed=0, verbose=True):


		self.general_conf = plain(general_conf)
		self.compile_conf = deepcopy(DEFAULT_COMPILE_CONF)
		self.compile_conf.update(plain(compile_conf))
		self.seed = int(seed)
		self.verbose = verbose

		manifest_path = self.general_conf.get('manifest', "")
		if manifest_path:

			manifest = load_manifest(manifest_path)
			self.compile_conf = deepcopy(DEFAULT_COMPILE_CONF)
			self.compile_conf.update(manifest['compile_conf'])
			self.seed = int(manifest['seed'])

			log.info("Replaying compile_conf and seed %d from %s", self.seed, manifest_path)

		if not verbose:
			log.setLevel(logging.WARNING)



	def run_compile(self):

		"""
		Compiles the scene. Main method of this framework.

		Returns
		-------

		manifest: dict
			Content of the written manifest.json.
		"""

		self._check_conf()
		conf = self.compile_conf

		start = time()
		scene, scene_sha256 = self._load_scene()
		self._check_scene(scene)

		log.info("Loaded scene %s: %d frames, %d cameras, %d instances", scene.scene_id, len(scene.frames),
				len(scene.cameras), sum(len(f.instances) for f in scene.frames))

		self._results = Results(self.general_conf['output_folder'])
		palette = make_palette(*self._registry())
		style = RasterStyle(**conf['style'])


		# Rasters, one cell per (frame, camera)
		tracks = compute_offsets(scene)
		cells = list(product(range(len(scene.frames)), scene.cameras))

		outputs = Parallel(n_jobs=int(self.general_conf.get('threads', 1)), prefer='threads')(
			delayed(self._compile_cell)(scene, tracks, frame, cam, style, palette) for frame, cam in cells)

		self._results.save_cells([o['row'] for o in outputs], [c.name for c in scene.cameras])
		rasters = {(o['row']['frame'], o['row']['camera']): o for o in outputs}

		if conf['write_raw_flow']:
			self._results.add_tensors("flow_raw.pct",
									{"flow/%s/%04d" % (camera, frame): o["flow_raw"].astype(np.float32)
									for (frame, camera), o in rasters.items()})

		log.info("Rasterized %d cells in %.2f s", len(cells), time() - start)


		# Embeddings
		start = time()
		encoder = self._load_encoder()

		h_c = np.stack([embed_camera(cam, encoder.e_cam, encoder.spec, t_scale=conf['t_scale'])
						for cam in scene.cameras])

		embeddings = {"h_c": h_c}
		fused = {}
		box_order = {}

		for frame in range(len(scene.frames)):

			h_coor = embed_frame_boxes(scene, frame, encoder.classes, encoder.mlp_p, encoder.mlp_b,
										encoder.spec, conf['box_scale'])
			embeddings["h_coor/%04d" % frame] = h_coor
			box_order["%04d" % frame] = sorted(i.track_id for i in scene.frames[frame].instances)

			h_vehicle, h_condition = self._fuse_frame(scene, frame, rasters, encoder, h_c, h_coor)
			fused["h_vehicle/%04d" % frame] = h_vehicle.astype(np.float32)
			fused["h_condition/%04d" % frame] = h_condition.astype(np.float32)

		self._results.add_tensors("embeddings.pct", embeddings)
		self._results.add_tensors("fused.pct", fused)

		if conf['write_weights']:
			self._results.add_tensors("weights.pct", encoder.to_tensors())

		log.info("Embedded and fused %d frames in %.2f s", len(scene.frames), time() - start)


		manifest = {"format": BUNDLE_FORMAT,
					"scene_format": FORMAT_VERSION,
					"tensor_format": MAGIC.decode('ascii'),
					"scene_id": scene.scene_id,
					"scene_sha256": scene_sha256,
					"seed": self.seed,
					"compile_conf": conf,
					"palette_sha256": palette_digest(palette),
					"token_layout": TOKEN_LAYOUT,
					"view_layout": view_layout([(c.height, c.width) for c in scene.cameras]),
					"frames": len(scene.frames),
					"cameras": [c.name for c in scene.cameras],
					"d_model": encoder.d_model,
					"box_order": box_order}

		manifest = self._results.save_manifest(manifest)
		log.info("Wrote %d files to %s", len(manifest['files']) + 1, self._results.output_folder)

		return manifest



	def _compile_cell(self, scene, tracks, frame, cam, style, palette):

		"""
		Rasterizes and writes the three images of one cell.
		"""

		conf = self.compile_conf

		trajectory_map = rasterize_flow(scene, tracks, frame, cam, conf['z_near'])
		flow_rgb = normalize_to_rgb(trajectory_map, conf['o_max'])
		boxes = render_boxes(scene, frame, cam, style, palette, conf['z_near'])
		road = render_map(scene, frame, cam, style, palette, conf['z_near'])

		row = self._results.add_cell(flow_rgb, boxes, road, trajectory_map.coverage)

		return {"row": row,
				"flow": flow_rgb.pixels,
				"boxes": boxes.pixels,
				"map": road.pixels,
				"flow_raw": trajectory_map.data if conf['write_raw_flow'] else None}



	def _fuse_frame(self, scene, frame, rasters, encoder, h_c, h_coor):

		"""
		h_vehicle and h_condition of one frame from its patch tokens,
		view-inflated when every camera has the same size.
		"""

		conf = self.compile_conf
		names = [c.name for c in scene.cameras]

		def tokens(kind, projection):
			patches = frame_tokens([rasters[(frame, n)][kind] for n in names],
									conf['latent_factor'], conf['patch_size'])
			return projection.transform(patches)

		h_map_proj = tokens("map", encoder.proj_map)
		h_box_proj = tokens("boxes", encoder.proj_box)
		h_world = tokens("flow", encoder.proj_world)

		h_vehicle = fuse_vehicle(h_map_proj, h_box_proj, h_coor, encoder.attn_vehicle)
		h_condition = fuse_condition(h_vehicle, h_c, h_world, encoder.attn_condition)

		return h_vehicle, h_condition



	def _registry(self):

		return scene_registry(self.compile_conf)



	def _load_scene(self):

		path = self.general_conf.get('scene_path', "")
		if not path:
			raise ConfigError("A scene has to be given (general_conf.scene_path) to compile.")

		with open(path, 'rb') as f:
			data = f.read()

		return parse_scene(data, ClassRegistry(*self._registry())), hashlib.sha256(data).hexdigest()



	def _load_encoder(self):

		conf = self.compile_conf
		if conf['weights_path']:

			encoder = ConditionEncoder.from_tensors(read_tensor_file(conf['weights_path']))
			if encoder.d_model != conf['d_model'] or encoder.spec.num_frequencies != conf['num_frequencies']:
				raise ConfigError("Weights in %s have d_model %d and L %d, configuration asks for %d and %d"
								% (conf['weights_path'], encoder.d_model, encoder.spec.num_frequencies,
									conf['d_model'], conf['num_frequencies']))
			return encoder

		return ConditionEncoder.seeded(self.seed, self._registry()[0], conf['d_model'],
										conf['num_frequencies'], conf['patch_size'])



	def _check_conf(self):

		"""
		Checks every compile option before any work is done.

		Raises
		------

		ConfigError
		"""

		conf = self.compile_conf

		def require(condition, message, *args):
			if not condition:
				raise ConfigError(message % args)

		def positive_int(name):
			value = conf[name]
			require(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
					"compile_conf.%s must be a positive integer, got %r", name, value)

		for name in ('o_max', 'z_near', 't_scale', 'box_scale'):
			require(isinstance(conf[name], (int, float)) and conf[name] > 0,
					"compile_conf.%s must be positive, got %r", name, conf[name])

		for name in ('num_frequencies', 'd_model', 'latent_factor', 'patch_size'):
			positive_int(name)

		require(0 <= conf['overlay_alpha'] <= 1, "compile_conf.overlay_alpha must lie in [0, 1]")

		style = conf['style']
		unknown = set(style) - set(RasterStyle._fields)
		require(not unknown, "Unknown style options %s", sorted(unknown))
		style = RasterStyle(**style)
		require(0 <= style.alpha <= 1, "style.alpha must lie in [0, 1], got %r", style.alpha)
		require(style.map_line_width >= 1 and style.wireframe_width >= 1, "Line widths must be >= 1")

		try:
			make_palette(*self._registry())
		except ValueError as e:
			raise ConfigError(str(e))

		threads = self.general_conf.get('threads', 1)
		require(isinstance(threads, int) and (threads >= 1 or threads == -1),
				"general_conf.threads must be a positive integer or -1, got %r", threads)



	def _check_scene(self, scene):

		factor = self.compile_conf['latent_factor']
		for cam in scene.cameras:
			if cam.width % factor or cam.height % factor:
				raise ConfigError("Camera %s (%dx%d) is not divisible by latent_factor %d"
								% (cam.name, cam.width, cam.height, factor))



##########################
# END OF UTILITIES CLASS #
##########################


def scene_registry(compile_conf):

	"""
	Object and road class registries of a configuration; empty lists
	select the defaults.
	"""

	objects = tuple(compile_conf.get('object_classes') or DEFAULT_OBJECT_CLASSES)
	roads = tuple(compile_conf.get('road_classes') or DEFAULT_ROAD_CLASSES)

	return objects, roads



def render_overlay(scene, frame, camera, out_png, compile_conf=None):

	"""
	Inspection image of one cell: boxes over map, with the instance
	flow colors blended on top at compile_conf['overlay_alpha'] where
	flow was filled.

	Parameters
	----------

	scene: Scene

	frame: int

	camera: string
		Camera name.

	out_png: string
		Output path.

	compile_conf: dict

	Returns
	-------

	pixels: array, shape (H, W, 3)
	"""

	conf = deepcopy(DEFAULT_COMPILE_CONF)
	conf.update(plain(compile_conf or {}))

	if not 0 <= frame < len(scene.frames):
		raise IndexError("Frame %d out of range [0, %d)" % (frame, len(scene.frames)))
	cam = find_camera(scene, camera)

	style = RasterStyle(**conf['style'])
	palette = make_palette(*scene_registry(conf))

	trajectory_map = rasterize_flow(scene, compute_offsets(scene), frame, cam, conf['z_near'])
	flow_rgb = normalize_to_rgb(trajectory_map, conf['o_max'])

	base = composite(render_map(scene, frame, cam, style, palette, conf['z_near']),
					render_boxes(scene, frame, cam, style, palette, conf['z_near']))
	pixels = overlay(base, flow_rgb.pixels, trajectory_map.coverage, conf['overlay_alpha'])

	write_png(out_png, pixels, {"condition": "overlay", "scene_id": scene.scene_id,
								"frame": "%d" % frame, "camera": camera})

	return pixels



def write_json(document, path):

	"""
	Writes JSON with sorted keys to a file, or to stdout when path is
	empty.
	"""

	text = json.dumps(document, sort_keys=True, indent=2)
	if not path:
		print(text)
		return

	directory = os.path.dirname(path)
	if directory:
		os.makedirs(directory, exist_ok=True)

	with open(path, 'w', encoding='utf-8') as f:
		f.write(text + "\n")
