from sys import path as syspath
from os import path as ospath
import math
import unittest

import numpy as np
import numpy.testing as npt
from hypothesis import given, settings
from hypothesis import strategies as st

syspath.append(ospath.join(ospath.dirname(ospath.abspath(__file__)), '..'))

from conditions.fusion_attn import (AttentionParams, DimMismatch, EmptyKeys, attention_weights, cross_attention,
									deinflate_views, frame_tokens, fuse_condition, fuse_vehicle, inflate_views,
									patchify, pool_latent, seeded_attention, view_layout)
from conditions.seeding import SplitMix64



def random_tokens(seed, n, d):

	return SplitMix64(seed).standard_normal(n * d).reshape(n, d)



def naive_attention(queries, keys_values, params):

	"""
	Double loop over queries and keys with an explicit max-shifted
	softmax.
	"""

	d = queries.shape[1]
	Q = queries @ params.W_Q.T
	K = keys_values @ params.W_K.T
	V = keys_values @ params.W_V.T

	output = np.zeros((len(queries), d))
	for i in range(len(queries)):
		logits = [float(Q[i] @ K[j]) / math.sqrt(d) for j in range(len(keys_values))]
		top = max(logits)
		weights = [math.exp(l - top) for l in logits]
		total = sum(weights)
		for j in range(len(keys_values)):
			output[i] += weights[j] / total * V[j]

	return output



class TestCrossAttention(unittest.TestCase):

	"""
	Scaled dot-product cross-attention and the two fusion formulas.
	"""

	params = seeded_attention(3, 8)


	def test_against_double_loop(self):

		queries = random_tokens(1, 5, 8)
		keys_values = random_tokens(2, 7, 8)

		npt.assert_allclose(cross_attention(queries, keys_values, self.params),
							naive_attention(queries, keys_values, self.params), atol=1e-12)


	def test_single_key_returns_its_value(self):

		queries = random_tokens(1, 4, 8)
		key = random_tokens(2, 1, 8)

		output = cross_attention(queries, key, self.params)
		npt.assert_allclose(output, np.repeat(key @ self.params.W_V.T, 4, axis=0), atol=1e-12)


	def test_rows_are_stochastic(self):

		weights = attention_weights(random_tokens(1, 6, 8), random_tokens(2, 9, 8), self.params)

		npt.assert_equal(weights.shape, (6, 9))
		npt.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
		npt.assert_equal((weights >= 0).all(), True)


	def test_chunking_does_not_change_the_result(self):

		queries = random_tokens(1, 37, 8)
		keys_values = random_tokens(2, 11, 8)

		full = cross_attention(queries, keys_values, self.params, chunk_rows=1000)
		npt.assert_allclose(cross_attention(queries, keys_values, self.params, chunk_rows=5), full, atol=1e-12)


	@settings(max_examples=30, deadline=None)
	@given(st.permutations(range(9)))
	def test_sorted_keys_make_permutations_bit_identical(self, permutation):

		queries = random_tokens(1, 6, 8)
		keys_values = random_tokens(2, 9, 8)

		reference = cross_attention(queries, keys_values, self.params, sorted_keys=True)
		permuted = cross_attention(queries, keys_values[list(permutation)], self.params, sorted_keys=True)

		npt.assert_array_equal(permuted, reference)
		npt.assert_allclose(cross_attention(queries, keys_values[list(permutation)], self.params), reference,
							atol=1e-12)


	def test_errors(self):

		queries = random_tokens(1, 3, 8)

		npt.assert_raises(EmptyKeys, cross_attention, queries, np.zeros((0, 8)), self.params)
		npt.assert_raises(EmptyKeys, attention_weights, queries, np.zeros((0, 8)), self.params)
		npt.assert_raises(DimMismatch, cross_attention, queries, np.zeros((2, 6)), self.params)
		npt.assert_raises(DimMismatch, cross_attention, random_tokens(1, 3, 4), np.zeros((2, 4)), self.params)

		# Key tensors of the wrong rank are a shape error, not an empty set
		for keys_values in (np.zeros(8), np.zeros((2, 3, 8)), np.zeros(0)):
			npt.assert_raises(DimMismatch, cross_attention, queries, keys_values, self.params)
			npt.assert_raises(DimMismatch, attention_weights, queries, keys_values, self.params)
		npt.assert_raises(DimMismatch, cross_attention, np.zeros(8), random_tokens(2, 2, 8), self.params)


	def test_seeded_attention(self):

		a = seeded_attention(5, 4)
		b = seeded_attention(5, 4)

		for W_a, W_b in zip(a, b):
			npt.assert_array_equal(W_a, W_b)
			npt.assert_equal(np.abs(W_a).max() <= math.sqrt(6.0 / 8.0), True)

		npt.assert_equal(np.array_equal(a.W_Q, a.W_K), False)


	def test_fuse_vehicle(self):

		h_map = random_tokens(1, 10, 8)
		h_box = random_tokens(2, 10, 8)
		h_coor = random_tokens(3, 4, 8)

		fused = fuse_vehicle(h_map, h_box, h_coor, self.params)
		npt.assert_allclose(fused, h_map + naive_attention(h_box, h_coor, self.params), atol=1e-12)

		# No boxes: map tokens pass through
		empty = fuse_vehicle(h_map, h_box, np.zeros((0, 8)), self.params)
		npt.assert_array_equal(empty, h_map)
		npt.assert_equal(empty is h_map, False)

		npt.assert_raises(DimMismatch, fuse_vehicle, h_map, h_box[:9], h_coor, self.params)


	def test_fuse_condition(self):

		h_vehicle = random_tokens(1, 10, 8)
		h_c = random_tokens(2, 6, 8)
		h_world = random_tokens(3, 10, 8)

		fused = fuse_condition(h_vehicle, h_c, h_world, self.params)

		npt.assert_equal(fused.shape, (16, 8))
		npt.assert_allclose(fused[10:], naive_attention(h_c, h_world, self.params), atol=1e-12)


	def test_identity_projections(self):

		"""
		With identity projections and one-hot keys far apart, each query
		picks the value of its own direction.
		"""

		params = AttentionParams(np.eye(2) * 20.0, np.eye(2) * 20.0, np.eye(2))
		keys_values = np.array([[1.0, 0.0], [0.0, 1.0]])

		output = cross_attention(np.array([[1.0, 0.0], [0.0, 1.0]]), keys_values, params)
		npt.assert_allclose(output, keys_values, atol=1e-9)



class TestTokens(unittest.TestCase):


	def test_inflate_round_trip(self):

		grids = [np.full((2, 3, 4, 5), float(k)) for k in range(6)]
		inflated = inflate_views(grids)

		npt.assert_equal(inflated.data.shape, (2, 3, 24, 5))
		npt.assert_equal((inflated.layout, inflated.views), ("inflated", 6))
		npt.assert_array_equal(inflated.data[:, :, 4:8], 1.0)

		for original, restored in zip(grids, deinflate_views(inflated)):
			npt.assert_array_equal(restored, original)


	def test_inflate_errors(self):

		npt.assert_raises(DimMismatch, inflate_views, [])
		npt.assert_raises(DimMismatch, inflate_views, [np.zeros((1, 2, 2, 3)), np.zeros((1, 2, 3, 3))])


	def test_pool_latent(self):

		raster = np.zeros((16, 24, 3), dtype=np.uint8)
		raster[:8, :8] = 255

		latent = pool_latent(raster, 8)

		npt.assert_equal(latent.shape, (2, 3, 3))
		npt.assert_allclose(latent[0, 0], 1.0)
		npt.assert_allclose(latent[1, 2], -1.0)
		npt.assert_raises(DimMismatch, pool_latent, np.zeros((12, 16, 3), dtype=np.uint8), 8)


	def test_patchify(self):

		latent = np.arange(3 * 5 * 1, dtype=np.float64).reshape(3, 5, 1)
		tokens = patchify(latent, 2)

		npt.assert_equal(tokens.shape, (2 * 3, 4))
		npt.assert_array_equal(tokens[0], [0.0, 1.0, 5.0, 6.0])
		npt.assert_array_equal(tokens[2], [4.0, 0.0, 9.0, 0.0])
		npt.assert_array_equal(tokens[3], [10.0, 11.0, 0.0, 0.0])


	def test_frame_tokens(self):

		rasters = [np.full((32, 48, 3), 255 * (k % 2), dtype=np.uint8) for k in range(6)]
		tokens = frame_tokens(rasters, factor=8, patch_size=2)

		# 4 x 36 latent -> 2 x 18 patches of 2 * 2 * 3 values
		npt.assert_equal(tokens.shape, (36, 12))
		npt.assert_allclose(tokens[0], -1.0)
		npt.assert_allclose(tokens[3], 1.0)


	def test_frame_tokens_of_mixed_sizes(self):

		rasters = [np.zeros((32, 48, 3), dtype=np.uint8), np.full((16, 16, 3), 255, dtype=np.uint8)]
		tokens = frame_tokens(rasters, factor=8, patch_size=2)

		npt.assert_equal(view_layout([r.shape for r in rasters]), "per_view")
		npt.assert_equal(view_layout([(32, 48, 3)] * 3), "inflated")

		# 2 x 3 patches of the first view, then 1 x 1 of the second
		npt.assert_equal(tokens.shape, (7, 12))
		npt.assert_array_equal(tokens[:6], patchify(pool_latent(rasters[0], 8), 2))
		npt.assert_allclose(tokens[6], 1.0)

		npt.assert_raises(DimMismatch, frame_tokens, [])



# Running all unittests
if __name__ == "__main__":
	unittest.main()
