import hashlib

import numpy as np


# splitmix64 constants (Steele, Lea and Flood)
GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
MIX_2 = np.uint64(0x94D049BB133111EB)

MASK_64 = 0xFFFFFFFFFFFFFFFF


def _mix(z):

	"""
	splitmix64 finalizer applied elementwise over an uint64 array.
	"""

	with np.errstate(over='ignore'):
		z = (z ^ (z >> np.uint64(30))) * MIX_1
		z = (z ^ (z >> np.uint64(27))) * MIX_2
		return z ^ (z >> np.uint64(31))



def derive_seed(seed, *keys):

	"""
	Derives an independent 64-bit seed from a parent seed and a list
	of keys (strings or integers).

	Used so that every layer, class label or scenario draw gets its own
	stream without depending on the order in which streams are
	consumed.

	Parameters
	----------

	seed: int
		Parent seed, reduced modulo 2^64.

	keys: str or int
		Labels identifying the child stream.

	Returns
	-------

	child: int
		Seed of the child stream, in [0, 2^64).
	"""

	digest = hashlib.blake2b(digest_size=8)
	digest.update((int(seed) & MASK_64).to_bytes(8, 'little'))

	for key in keys:
		digest.update(b'\x1f')
		digest.update(str(key).encode('utf-8'))

	child = np.array([int.from_bytes(digest.digest(), 'little')], dtype=np.uint64)
	return int(_mix(child)[0])



class SplitMix64:

	"""
	SplitMix64

	Counter-based splitmix64 generator. Output k of a stream seeded with
	s is mix(s + (k + 1) * gamma), so any block of the stream can be
	produced with one vectorized call and results are identical across
	platforms.

	Parameters
	----------

	seed: int
		Stream seed, reduced modulo 2^64.

	Attributes
	----------

	counter: int
		Number of 64-bit words already consumed from the stream.
	"""


	def __init__(self, seed):

		self.seed = int(seed) & MASK_64
		self.counter = 0


	def next_uint64(self, n):

		"""
		Returns the next n words of the stream as an uint64 array.
		"""

		counters = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
		self.counter += n

		with np.errstate(over='ignore'):
			state = np.uint64(self.seed) + counters * GOLDEN_GAMMA

		return _mix(state)


	def random(self, n):

		"""
		Uniform doubles in [0, 1) built from the top 53 bits of each word.
		"""

		return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


	def uniform(self, low, high, n):

		return low + (high - low) * self.random(n)


	def integers(self, low, high, n):

		"""
		Integers in the closed range [low, high].
		"""

		span = high - low + 1
		return low + np.floor(self.random(n) * span).astype(np.int64)


	def standard_normal(self, n):

		"""
		Standard normal draws through the Box-Muller transform. Both the
		cosine and sine branch of every uniform pair are used.
		"""

		pairs = (n + 1) // 2
		u = self.random(2 * pairs).reshape(pairs, 2)

		# 1 - u lies in (0, 1], keeps the logarithm finite
		radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
		angle = 2.0 * np.pi * u[:, 1]

		normals = np.stack((radius * np.cos(angle), radius * np.sin(angle)), axis=1)
		return normals.reshape(-1)[:n]
