import json
import sys

from sacred import Experiment

from conditions.noise_sched import linear_schedule, sample_frame_mask, schedule_table
from conditions.scenario_sim import ScriptError, load_scenario, simulate_scenario
from conditions.scene_model import ClassRegistry, SceneError, read_scene, validate_scene, write_scene
from utilities import ConfigError, Utilities, plain, render_overlay, scene_registry, write_json

ex = Experiment('Condition Compiler')

EXIT_INPUT_ERROR = 1
EXIT_IO_ERROR = 2


@ex.config
def default_config():

	# Giving default values
	general_conf = {"scene_path": "",
					"output_folder": "my_runs/bundle/",
					"threads": 1,
					"manifest": "",
					"scenario_path": "",
					"output_path": "",
					"frame": 0,
					"camera": "CAM_FRONT"
					}

	compile_conf = {"o_max": 3.0,
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
					"write_weights": False
					}

	schedule_conf = {"steps": 1000,
					"beta_start": 1e-4,
					"beta_end": 2e-2,
					"p_clean_first": 0.2,
					"frames": 16
					}

	scenario = {}

	seed = 0



def guarded(command, _log):

	"""
	Runs a command, mapping input errors to exit code 1 and I/O errors
	to exit code 2.
	"""

	try:
		return command()

	except (SceneError, ConfigError, ScriptError, IndexError, KeyError, ValueError) as e:
		_log.error("%s: %s", type(e).__name__, e)
		sys.exit(EXIT_INPUT_ERROR)

	except OSError as e:
		_log.error("I/O error: %s", e)
		sys.exit(EXIT_IO_ERROR)



@ex.command
def simulate(general_conf, scenario, seed, _log):

	"""
	Simulates a scenario (general_conf.scenario_path or the inline
	scenario config) into a scene file at general_conf.output_path.
	"""

	def run():

		if general_conf['scenario_path']:
			with open(general_conf['scenario_path'], 'rb') as f:
				document = json.loads(f.read().decode('utf-8'))
		elif scenario:
			document = plain(scenario)
		else:
			raise ConfigError("A scenario has to be given (general_conf.scenario_path or scenario).")

		if not general_conf['output_path']:
			raise ConfigError("general_conf.output_path is required to write the scene.")

		scene = simulate_scenario(load_scenario(document, seed), seed)
		write_scene(scene, general_conf['output_path'])

		_log.info("Simulated %s: %d frames, %d actors", scene.scene_id, len(scene.frames),
					len(scene.frames[0].instances))

	guarded(run, _log)



@ex.command
def render(general_conf, compile_conf, _log):

	"""
	Writes the overlay inspection image of general_conf.frame and
	general_conf.camera to general_conf.output_path.
	"""

	def run():

		if not general_conf['output_path']:
			raise ConfigError("general_conf.output_path is required to write the overlay.")

		objects, roads = scene_registry(compile_conf)
		scene = read_scene(general_conf['scene_path'], registry=ClassRegistry(objects, roads))
		render_overlay(scene, general_conf['frame'], general_conf['camera'], general_conf['output_path'],
						compile_conf)

	guarded(run, _log)



@ex.command
def validate(general_conf, compile_conf, _log):

	"""
	Lists every invariant violation of a scene as JSON. Exits with 1
	when at least one violation is an error.
	"""

	def run():

		objects, roads = scene_registry(compile_conf)
		registry = ClassRegistry(objects, roads)

		scene = read_scene(general_conf['scene_path'], registry=registry, check=False)
		violations = validate_scene(scene, registry)

		write_json([v._asdict() for v in violations], general_conf['output_path'])
		return any(v.severity == 'error' for v in violations)

	if guarded(run, _log):
		sys.exit(EXIT_INPUT_ERROR)



@ex.command
def schedule(general_conf, schedule_conf, seed, _log):

	"""
	Writes the noise schedule table (t, beta, alpha_bar) as CSV and logs
	a sampled first-frame mask.
	"""

	def run():

		sched = linear_schedule(schedule_conf['steps'], schedule_conf['beta_start'], schedule_conf['beta_end'])
		table = schedule_table(sched)

		if general_conf['output_path']:
			table.to_csv(general_conf['output_path'], index=False, float_format='%.17g', lineterminator="\n")
		else:
			print(table.to_csv(index=False, float_format='%.17g', lineterminator="\n"), end="")

		mask = sample_frame_mask(schedule_conf['frames'], schedule_conf['p_clean_first'], seed, sched.steps)
		_log.info("Frame mask for seed %d: clean=%s timesteps=%s", seed, list(mask.clean), list(mask.timesteps))

	guarded(run, _log)


@ex.automain
def compile(general_conf, compile_conf, seed, _log):

	if not general_conf["scene_path"]:

		_log.error('A scene has to be defined to run this program.\n' +
					'For more information about using this framework, please refer to the README.')
		sys.exit(EXIT_INPUT_ERROR)


	def run():

		interface = Utilities(general_conf, compile_conf, seed)
		interface.run_compile()

	guarded(run, _log)
