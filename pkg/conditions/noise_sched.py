"""
DDPM noise schedule utilities: beta / alpha-bar tables, forward noising
and the first-frame conditioning mask.
"""

from collections import namedtuple

import numpy as np
import pandas as pd

from conditions.seeding import SplitMix64, derive_seed


DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 2e-2
DEFAULT_P_CLEAN_FIRST = 0.2


NoiseSchedule = namedtuple('NoiseSchedule', ['steps', 'betas', 'alpha_bars'])
FrameMask = namedtuple('FrameMask', ['clean', 'timesteps'])



class InvalidRange(ValueError):
	pass



class StepOutOfRange(IndexError):

	def __init__(self, t, steps):

		IndexError.__init__(self, "Timestep %r outside [1, %d]" % (t, steps))
		self.t = t
		self.steps = steps



def schedule_from_betas(betas):

	"""
	Schedule of an arbitrary beta sequence, alpha_bar_t being the
	running product of (1 - beta_i) for i <= t.
	"""

	betas = np.asarray(betas, dtype=np.float64).reshape(-1)

	if len(betas) == 0:
		raise InvalidRange("A schedule needs at least one step")
	if not np.all((betas > 0) & (betas < 1)):
		raise InvalidRange("Every beta must lie in (0, 1)")

	return NoiseSchedule(len(betas), betas, np.cumprod(1.0 - betas))



def linear_schedule(steps=DEFAULT_STEPS, beta_start=DEFAULT_BETA_START, beta_end=DEFAULT_BETA_END):

	"""
	Linearly spaced betas from beta_start to beta_end, both included.

	Parameters
	----------

	steps: int
		Number of diffusion steps, >= 1.

	beta_start, beta_end: float
		0 < beta_start <= beta_end < 1.

	Returns
	-------

	schedule: NoiseSchedule
	"""

	if int(steps) != steps or steps < 1:
		raise InvalidRange("steps must be a positive integer, got %r" % (steps,))
	if not 0 < beta_start <= beta_end < 1:
		raise InvalidRange("Need 0 < beta_start <= beta_end < 1, got %r and %r" % (beta_start, beta_end))

	return schedule_from_betas(np.linspace(beta_start, beta_end, int(steps)))



def alpha_bar(schedule, t):

	"""
	alpha_bar at 1-based step t.
	"""

	if int(t) != t or not 1 <= t <= schedule.steps:
		raise StepOutOfRange(t, schedule.steps)

	return schedule.alpha_bars[int(t) - 1]



def add_noise(z0, t, eps, schedule):

	"""
	z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps, elementwise.
	"""

	z0 = np.asarray(z0, dtype=np.float64)
	eps = np.asarray(eps, dtype=np.float64)
	if z0.shape != eps.shape:
		raise ValueError("z0 and eps shapes differ: %s vs %s" % (z0.shape, eps.shape))

	a = alpha_bar(schedule, t)
	return np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps



def sample_frame_mask(frames, p_clean_first=DEFAULT_P_CLEAN_FIRST, seed=0, steps=DEFAULT_STEPS):

	"""
	Draws which frames of a clip are noised during training.

	With probability p_clean_first the first frame is kept clean with
	timestep 0, as an image condition. Noised frames share one timestep
	drawn uniformly in [1, steps].

	Parameters
	----------

	frames: int
		Clip length, >= 1.

	p_clean_first: float
		In [0, 1].

	seed: int

	steps: int

	Returns
	-------

	mask: FrameMask
		clean and timesteps are tuples of length frames.
	"""

	if not 0 <= p_clean_first <= 1:
		raise InvalidRange("p_clean_first must lie in [0, 1], got %r" % (p_clean_first,))
	if frames < 1 or steps < 1:
		raise InvalidRange("frames and steps must be positive, got %r and %r" % (frames, steps))

	rng = SplitMix64(derive_seed(seed, 'frame_mask'))
	clean_first = bool(rng.random(1)[0] < p_clean_first)
	t = int(rng.integers(1, steps, 1)[0])

	clean = (clean_first,) + (False,) * (frames - 1)
	timesteps = tuple(0 if c else t for c in clean)

	return FrameMask(clean, timesteps)



def schedule_table(schedule):

	return pd.DataFrame({"t": np.arange(1, schedule.steps + 1),
						"beta": schedule.betas,
						"alpha_bar": schedule.alpha_bars})
