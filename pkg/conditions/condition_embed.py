"""
Camera-pose and box-coordinate embeddings computed as deterministic
forward passes of seeded (or loaded) MLP encoders.
"""

import logging

import numpy as np
from scipy.special import erf
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from conditions.fusion_attn import AttentionParams, DimMismatch, seeded_attention
from conditions.geometry import FourierSpec, box_corners, fourier_embed, world_to_vehicle
from conditions.seeding import SplitMix64, derive_seed


log = logging.getLogger(__name__)

DEFAULT_D_MODEL = 64
DEFAULT_T_SCALE = 100.0
DEFAULT_BOX_SCALE = 0.01

PBAR_SHAPE = (7, 3)



class UnknownClass(KeyError):

	def __init__(self, label):

		KeyError.__init__(self, "Class '%s' has no embedding" % label)
		self.label = label



def gelu(x):

	return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))



class MLP(BaseEstimator, TransformerMixin):

	"""

	MLP Fully connected encoder with GELU between layers and identity at
		the output. There is nothing to learn here: fit draws the seeded
		parameters, transform runs the forward pass.

		Weights of layer l are drawn from a splitmix64 stream seeded with
		derive_seed(seed, 'layer', l), uniformly in [-a, a] with
		a = sqrt(6 / (fan_in + fan_out)). Biases start at zero.

		MLP properties:
			dims						- Layer widths, input first.
			seed						- Parameter seed.
			weights_					- List of (fan_out, fan_in) arrays.
			biases_						- List of (fan_out,) arrays.

	"""

	def __init__(self, dims=(336, 256, 64), seed=0):

		self.dims = dims
		self.seed = seed


	def fit(self, X=None, y=None):

		dims = tuple(int(d) for d in self.dims)
		if len(dims) < 2 or min(dims) < 1:
			raise ValueError("MLP needs at least two positive layer widths, got %s" % (dims,))

		self.weights_ = []
		self.biases_ = []

		for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):

			bound = np.sqrt(6.0 / (fan_in + fan_out))
			rng = SplitMix64(derive_seed(self.seed, 'layer', layer))

			self.weights_.append(rng.uniform(-bound, bound, fan_out * fan_in).reshape(fan_out, fan_in))
			self.biases_.append(np.zeros(fan_out))

		return self


	def transform(self, X):

		"""
		Forward pass.

		Parameters
		----------

		X: array-like, shape (n_features,) or (n_samples, n_features)

		Returns
		-------

		output: array, shape (d_out,) or (n_samples, d_out)
		"""

		check_is_fitted(self, 'weights_')

		single = np.ndim(X) == 1
		X = check_array(np.atleast_2d(X), dtype=np.float64, ensure_min_samples=0)

		if X.shape[1] != self.weights_[0].shape[1]:
			raise DimMismatch("MLP input", self.weights_[0].shape[1], X.shape[1])

		last = len(self.weights_) - 1
		for layer, (W, b) in enumerate(zip(self.weights_, self.biases_)):
			X = X @ W.T + b
			if layer < last:
				X = gelu(X)

		return X[0] if single else X


	@classmethod
	def from_arrays(cls, weights, biases):

		"""
		Builds a fitted MLP from explicit parameters.
		"""

		weights = [np.asarray(W, dtype=np.float64) for W in weights]
		biases = [np.asarray(b, dtype=np.float64) for b in biases]

		if len(weights) == 0 or len(weights) != len(biases):
			raise DimMismatch("MLP layers", "one bias per weight matrix", (len(weights), len(biases)))

		for layer, (W, b) in enumerate(zip(weights, biases)):
			if W.ndim != 2 or b.shape != (W.shape[0],):
				raise DimMismatch("layer %d" % layer, "(fan_out, fan_in) and (fan_out,)", (W.shape, b.shape))
			if layer > 0 and W.shape[1] != weights[layer - 1].shape[0]:
				raise DimMismatch("layer %d input" % layer, weights[layer - 1].shape[0], W.shape[1])
			if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
				raise ValueError("Non-finite parameter in layer %d" % layer)

		mlp = cls(dims=tuple([weights[0].shape[1]] + [W.shape[0] for W in weights]), seed=None)
		mlp.weights_ = weights
		mlp.biases_ = biases

		return mlp


	@property
	def output_dim(self):

		return self.weights_[-1].shape[0]



class ClassEmbeddingTable:

	"""
	ClassEmbeddingTable

	Seeded unit-norm vector per class label, standing in for pooled text
	features of the class names. Each row comes from its own stream keyed
	by the label, so adding classes never changes existing rows.
	"""

	def __init__(self, vectors):

		self.vectors = {label: np.asarray(v, dtype=np.float64) for label, v in vectors.items()}


	@classmethod
	def seeded(cls, labels, d_model, seed):

		vectors = {}
		for label in labels:
			v = SplitMix64(derive_seed(seed, 'class', label)).standard_normal(d_model)
			vectors[label] = v / np.linalg.norm(v)

		return cls(vectors)


	def __getitem__(self, label):

		try:
			return self.vectors[label]
		except KeyError:
			raise UnknownClass(label)


	def __contains__(self, label):

		return label in self.vectors


	def labels(self):

		return tuple(self.vectors)



def build_pbar(cam, k_scale=None, t_scale=DEFAULT_T_SCALE):

	"""
	Camera parameter matrix [K, R, T]^T of shape (7, 3): the columns of
	K / k_scale, the columns of R, then T / t_scale.

	k_scale defaults to the image width.
	"""

	if k_scale is None:
		k_scale = float(cam.width)

	K = np.asarray(cam.K, dtype=np.float64) / k_scale
	R = np.asarray(cam.R, dtype=np.float64)
	T = np.asarray(cam.T, dtype=np.float64) / t_scale

	return np.vstack((K.T, R.T, T[None, :]))



def embed_camera(cam, e_cam, spec, k_scale=None, t_scale=DEFAULT_T_SCALE):

	"""
	h_c = E_cam(Fourier(P_bar)), a d_model vector.
	"""

	return e_cam.transform(fourier_embed(build_pbar(cam, k_scale, t_scale), spec))



def embed_box(instance, ego, table, mlp_p, mlp_b, spec, box_scale=DEFAULT_BOX_SCALE):

	"""
	Hidden state of one box.

	The 8 corners are expressed in the vehicle frame of the box's frame,
	scaled by box_scale, Fourier embedded and passed through MLP_p. The
	class embedding is concatenated in front and MLP_b gives the final
	vector.

	Parameters
	----------

	instance: Instance

	ego: EgoPose
		Ego pose of the frame the instance belongs to.

	table: ClassEmbeddingTable

	mlp_p, mlp_b: MLP

	spec: FourierSpec

	box_scale: float

	Returns
	-------

	hidden: array, shape (d_model,)
	"""

	c = table[instance.class_label]

	corners = world_to_vehicle(box_corners(instance), ego) * box_scale
	p = mlp_p.transform(fourier_embed(corners, spec))

	return mlp_b.transform(np.concatenate((c, p)))



def embed_frame_boxes(scene, frame, table, mlp_p, mlp_b, spec, box_scale=DEFAULT_BOX_SCALE):

	"""
	h_coor of a frame: one row per instance in track_id order,
	shape (N_t, d_model).
	"""

	current = scene.frames[frame]
	instances = sorted(current.instances, key=lambda i: i.track_id)

	if len(instances) == 0:
		return np.zeros((0, mlp_b.output_dim))

	return np.stack([embed_box(i, current.ego, table, mlp_p, mlp_b, spec, box_scale) for i in instances])



def _mlp_tensors(prefix, mlp):

	tensors = {}
	for layer, (W, b) in enumerate(zip(mlp.weights_, mlp.biases_)):
		tensors["%s/w%d" % (prefix, layer)] = W
		tensors["%s/b%d" % (prefix, layer)] = b

	return tensors



def _mlp_from_tensors(prefix, tensors):

	weights, biases = [], []
	while "%s/w%d" % (prefix, len(weights)) in tensors:
		layer = len(weights)
		weights.append(tensors["%s/w%d" % (prefix, layer)])
		biases.append(tensors["%s/b%d" % (prefix, layer)])

	if not weights:
		raise KeyError("Weights have no '%s' entries" % prefix)

	return MLP.from_arrays(weights, biases)



class ConditionEncoder:

	"""
	ConditionEncoder

	Every parameter used between the rasters and the fused tensors: the
	camera encoder E_cam, the box encoders MLP_p and MLP_b, the class
	table, three linear patch projections (map, boxes, flow) and the two
	attention parameter sets.

	Parameters
	----------

	spec: FourierSpec

	e_cam, mlp_p, mlp_b: MLP

	classes: ClassEmbeddingTable

	proj_map, proj_box, proj_world: MLP
		Single-layer projections from patch features to d_model.

	attn_vehicle, attn_condition: AttentionParams
	"""

	MLP_NAMES = ('e_cam', 'mlp_p', 'mlp_b', 'proj_map', 'proj_box', 'proj_world')
	ATTN_NAMES = ('attn_vehicle', 'attn_condition')


	def __init__(self, spec, e_cam, mlp_p, mlp_b, classes, proj_map, proj_box, proj_world,
				attn_vehicle, attn_condition):

		self.spec = spec
		self.e_cam = e_cam
		self.mlp_p = mlp_p
		self.mlp_b = mlp_b
		self.classes = classes
		self.proj_map = proj_map
		self.proj_box = proj_box
		self.proj_world = proj_world
		self.attn_vehicle = attn_vehicle
		self.attn_condition = attn_condition


	@classmethod
	def seeded(cls, seed, object_classes, d_model=DEFAULT_D_MODEL, num_frequencies=8, patch_size=2):

		spec = FourierSpec(num_frequencies)
		width = 2 * num_frequencies
		patch_dim = patch_size * patch_size * 3

		def mlp(name, dims):
			return MLP(dims=dims, seed=derive_seed(seed, name)).fit()

		encoder = cls(spec,
					e_cam=mlp('e_cam', (21 * width, 4 * d_model, d_model)),
					mlp_p=mlp('mlp_p', (24 * width, 4 * d_model, d_model)),
					mlp_b=mlp('mlp_b', (2 * d_model, 4 * d_model, d_model)),
					classes=ClassEmbeddingTable.seeded(object_classes, d_model, derive_seed(seed, 'classes')),
					proj_map=mlp('proj_map', (patch_dim, d_model)),
					proj_box=mlp('proj_box', (patch_dim, d_model)),
					proj_world=mlp('proj_world', (patch_dim, d_model)),
					attn_vehicle=seeded_attention(derive_seed(seed, 'attn_vehicle'), d_model),
					attn_condition=seeded_attention(derive_seed(seed, 'attn_condition'), d_model))

		log.debug("Seeded condition encoder: d_model=%d, L=%d, %d classes",
				d_model, num_frequencies, len(object_classes))

		return encoder


	@property
	def d_model(self):

		return self.mlp_b.output_dim


	def to_tensors(self):

		"""
		Named float64 arrays of every parameter, for the tensor container.
		"""

		tensors = {"fourier/num_frequencies": np.array([self.spec.num_frequencies], dtype=np.float64)}

		for name in self.MLP_NAMES:
			tensors.update(_mlp_tensors(name, getattr(self, name)))

		for label in self.classes.labels():
			tensors["class/%s" % label] = self.classes[label]

		for name in self.ATTN_NAMES:
			for field, W in zip(AttentionParams._fields, getattr(self, name)):
				tensors["%s/%s" % (name, field)] = W

		return tensors


	@classmethod
	def from_tensors(cls, tensors):

		"""
		Inverse of to_tensors; shapes are checked for consistency.
		"""

		tensors = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
		spec = FourierSpec(int(tensors["fourier/num_frequencies"][0]))

		mlps = {name: _mlp_from_tensors(name, tensors) for name in cls.MLP_NAMES}
		classes = ClassEmbeddingTable({k[len("class/"):]: v for k, v in tensors.items() if k.startswith("class/")})
		attn = {name: AttentionParams(*(tensors["%s/%s" % (name, f)] for f in AttentionParams._fields))
				for name in cls.ATTN_NAMES}

		encoder = cls(spec, classes=classes, **mlps, **attn)

		d = encoder.d_model
		width = 2 * spec.num_frequencies
		if encoder.e_cam.weights_[0].shape[1] != 21 * width:
			raise DimMismatch("e_cam input", 21 * width, encoder.e_cam.weights_[0].shape[1])
		if encoder.mlp_p.weights_[0].shape[1] != 24 * width:
			raise DimMismatch("mlp_p input", 24 * width, encoder.mlp_p.weights_[0].shape[1])
		if encoder.mlp_b.weights_[0].shape[1] != 2 * d:
			raise DimMismatch("mlp_b input", 2 * d, encoder.mlp_b.weights_[0].shape[1])
		for label in classes.labels():
			if classes[label].shape != (d,):
				raise DimMismatch("class/%s" % label, (d,), classes[label].shape)

		return encoder
