"""
Forward-only condition fusion: single-head cross-attention, the vehicle
and condition fusion formulas, view inflation and the latent token
layout ("pool8": 8x average pooling followed by 2x2 patches).
"""

from collections import namedtuple

import numpy as np
from scipy.special import softmax

from conditions.seeding import SplitMix64, derive_seed


TOKEN_LAYOUT = "pool8"
DEFAULT_CHUNK_ROWS = 512


AttentionParams = namedtuple('AttentionParams', ['W_Q', 'W_K', 'W_V'])
TokenGrid = namedtuple('TokenGrid', ['data', 'layout', 'views'])



class DimMismatch(ValueError):

	def __init__(self, what, expected, got):

		ValueError.__init__(self, "Dimension mismatch in %s: expected %s, got %s" % (what, expected, got))
		self.expected = expected
		self.got = got



class EmptyKeys(ValueError):

	def __init__(self):

		ValueError.__init__(self, "Cross-attention needs at least one key/value token")



def seeded_attention(seed, d_model):

	"""
	Attention projections drawn uniformly in [-a, a] with
	a = sqrt(6 / (2 d_model)), one splitmix64 stream per matrix.
	"""

	bound = np.sqrt(6.0 / (2 * d_model))
	matrices = []
	for name in AttentionParams._fields:
		rng = SplitMix64(derive_seed(seed, name))
		matrices.append(rng.uniform(-bound, bound, d_model * d_model).reshape(d_model, d_model))

	return AttentionParams(*matrices)



def _check_params(params, d):

	for name, W in zip(AttentionParams._fields, params):
		if np.shape(W) != (d, d):
			raise DimMismatch(name, (d, d), np.shape(W))



def _check_tokens(queries, keys_values):

	if queries.ndim != 2:
		raise DimMismatch("queries rank", 2, queries.ndim)
	if keys_values.ndim != 2:
		raise DimMismatch("keys_values rank", 2, keys_values.ndim)
	if len(keys_values) == 0:
		raise EmptyKeys()
	if keys_values.shape[1] != queries.shape[1]:
		raise DimMismatch("keys_values", queries.shape[1], keys_values.shape[1])



def attention_weights(queries, keys_values, params):

	"""
	Row-stochastic matrix softmax(Q K^T / sqrt(d)), shape (n, m).
	"""

	queries = np.asarray(queries, dtype=np.float64)
	keys_values = np.asarray(keys_values, dtype=np.float64)

	_check_tokens(queries, keys_values)
	_check_params(params, queries.shape[1])

	Q = queries @ params.W_Q.T
	K = keys_values @ params.W_K.T

	return softmax((Q @ K.T) / np.sqrt(queries.shape[1]), axis=1)



def cross_attention(queries, keys_values, params, sorted_keys=False, chunk_rows=DEFAULT_CHUNK_ROWS):

	"""
	Scaled dot-product cross-attention.

	Parameters
	----------

	queries: array, shape (n, d)

	keys_values: array, shape (m, d)
		Tokens providing both keys and values; m >= 1.

	params: AttentionParams

	sorted_keys: boolean
		Sorts key/value rows lexicographically first, which makes the
		result bit-identical under any permutation of keys_values.

	chunk_rows: int
		Queries are processed in blocks of this many rows to bound the
		size of the logit matrix.

	Returns
	-------

	output: array, shape (n, d)
	"""

	queries = np.asarray(queries, dtype=np.float64)
	keys_values = np.asarray(keys_values, dtype=np.float64)

	_check_tokens(queries, keys_values)

	d = queries.shape[1]
	_check_params(params, d)

	if sorted_keys:
		keys_values = keys_values[np.lexsort(keys_values.T[::-1])]

	Q = queries @ params.W_Q.T
	K = keys_values @ params.W_K.T
	V = keys_values @ params.W_V.T
	scale = 1.0 / np.sqrt(d)

	output = np.empty((len(queries), d), dtype=np.float64)
	for start in range(0, len(queries), chunk_rows):
		block = slice(start, start + chunk_rows)
		output[block] = softmax((Q[block] @ K.T) * scale, axis=1) @ V

	return output



def fuse_vehicle(h_map_proj, h_box_proj, h_coor, params, **kwargs):

	"""
	h_vehicle = h_map_proj + CrossAttn(h_box_proj, h_coor).

	A frame without boxes leaves the map tokens unchanged.
	"""

	h_map_proj = np.asarray(h_map_proj, dtype=np.float64)
	if np.shape(h_box_proj) != h_map_proj.shape:
		raise DimMismatch("h_box_proj", h_map_proj.shape, np.shape(h_box_proj))

	if len(h_coor) == 0:
		return h_map_proj.copy()

	return h_map_proj + cross_attention(h_box_proj, h_coor, params, **kwargs)



def fuse_condition(h_vehicle, h_c, h_world, params, **kwargs):

	"""
	h_condition = CrossAttn(cat(h_vehicle, h_c), h_world), with
	n + V output tokens.
	"""

	queries = np.vstack((np.asarray(h_vehicle, dtype=np.float64), np.asarray(h_c, dtype=np.float64)))
	return cross_attention(queries, h_world, params, **kwargs)



def inflate_views(grids):

	"""
	Concatenates per-view (t, h, w, c) grids along the width axis in
	camera order, giving (t, h, w * v, c).
	"""

	grids = [np.asarray(g) for g in grids]
	if len(grids) == 0:
		raise DimMismatch("inflate_views", "at least one view", 0)

	for g in grids[1:]:
		if g.shape != grids[0].shape:
			raise DimMismatch("inflate_views", grids[0].shape, g.shape)

	return TokenGrid(np.concatenate(grids, axis=2), 'inflated', len(grids))



def deinflate_views(grid):

	data = np.asarray(grid.data)
	if data.shape[2] % grid.views != 0:
		raise DimMismatch("deinflate_views", "width divisible by %d" % grid.views, data.shape[2])

	return [np.ascontiguousarray(part) for part in np.split(data, grid.views, axis=2)]



def pool_latent(raster, factor=8):

	"""
	Stand-in for a VAE encoder: scales 8-bit pixels to [-1, 1] and
	average-pools factor x factor blocks, (H, W, 3) -> (H/f, W/f, 3).
	"""

	height, width = raster.shape[:2]
	if height % factor or width % factor:
		raise DimMismatch("pool_latent", "sides divisible by %d" % factor, (height, width))

	scaled = np.asarray(raster, dtype=np.float64) / 127.5 - 1.0
	blocks = scaled.reshape(height // factor, factor, width // factor, factor, -1)

	return blocks.mean(axis=(1, 3))



def patchify(latent, patch_size=2):

	"""
	Row-major p x p patch tokens of a (h, w, c) latent, zero padded at
	the bottom and right, shape (ceil(h/p) * ceil(w/p), p * p * c).
	"""

	h, w, c = latent.shape
	pad_h, pad_w = -h % patch_size, -w % patch_size
	padded = np.pad(latent, ((0, pad_h), (0, pad_w), (0, 0)))

	rows, cols = padded.shape[0] // patch_size, padded.shape[1] // patch_size
	patches = padded.reshape(rows, patch_size, cols, patch_size, c).transpose(0, 2, 1, 3, 4)

	return patches.reshape(rows * cols, patch_size * patch_size * c)



def view_layout(shapes):

	"""
	'inflated' when every view has the same (H, W), 'per_view'
	otherwise.
	"""

	return 'inflated' if len(set(tuple(s[:2]) for s in shapes)) <= 1 else 'per_view'



def frame_tokens(rasters, factor=8, patch_size=2):

	"""
	Patch tokens of one frame. Every camera raster is pooled; views of
	one size are inflated along the width and patchified together, views
	of mixed sizes are patchified one by one and their tokens
	concatenated in camera order.
	"""

	latents = [pool_latent(r, factor) for r in rasters]
	if len(latents) == 0:
		raise DimMismatch("frame_tokens", "at least one view", 0)

	if view_layout([r.shape for r in rasters]) == 'per_view':
		return np.concatenate([patchify(latent, patch_size) for latent in latents], axis=0)

	inflated = inflate_views([latent[None] for latent in latents])

	return patchify(inflated.data[0], patch_size)
