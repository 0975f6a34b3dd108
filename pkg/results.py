import hashlib
import json
import os

import pandas as pd

from conditions.instance_flow import flow_text
from conditions.layout_raster import legend_text
from conditions.raster import write_png
from tensorfile import write_tensor_file


MANIFEST_NAME = "manifest.json"
CELLS_NAME = "cells.csv"


class Results:

	"""
	Results

	Class that owns the output folder of a compile run: condition
	PNGs per (frame, camera) cell, tensor files, the cells.csv summary
	and manifest.json.

	Nothing written here depends on time, host or worker count, so two
	runs with the same scene and configuration produce byte-identical
	folders.

	Attributes
	----------

	_output_folder: string
		Path of the condition bundle.

	_written: set of strings
		Files written by this run, listed by the manifest.
	"""


	def __init__(self, output_folder):

		self._output_folder = output_folder
		self._written = set()

		try:
			os.makedirs(output_folder, exist_ok=True)
		except OSError:
			raise OSError("Could not create folder %s to store the condition bundle." % output_folder)

		self._clear_previous_bundle()



	def _clear_previous_bundle(self):

		"""
		Removes the files of an earlier bundle written to the same
		folder, as listed by its manifest. Any other content makes the
		folder unusable.
		"""

		manifest_path = os.path.join(self._output_folder, MANIFEST_NAME)
		if os.path.isfile(manifest_path):
			try:
				previous = load_manifest(manifest_path).get("files", [])
			except ValueError:
				raise OSError("Folder %s holds an unreadable %s." % (self._output_folder, MANIFEST_NAME))

			for name in list(previous) + [MANIFEST_NAME]:
				path = os.path.join(self._output_folder, os.path.basename(str(name)))
				if os.path.isfile(path):
					os.remove(path)

		leftovers = sorted(os.listdir(self._output_folder))
		if leftovers:
			raise OSError("Folder %s is not empty and does not hold a condition bundle (found %s)."
						% (self._output_folder, ", ".join(leftovers[:3])))



	@property
	def output_folder(self):

		return self._output_folder



	def cell_filenames(self, frame, camera):

		return {kind: "%s_%s_%04d.png" % (kind, camera, frame) for kind in ("flow", "boxes", "map")}



	def add_cell(self, flow_rgb, box_raster, map_raster, coverage):

		"""
		Writes the three condition images of one cell.

		Safe to call from several workers at once: every cell owns its
		own files.

		Parameters
		----------

		flow_rgb: FlowRGB

		box_raster: BoxRaster

		map_raster: MapRaster

		coverage: array, shape (H, W)
			Pixels filled by instance flow.

		Returns
		-------

		row: dict
			Summary row for cells.csv.
		"""

		names = self.cell_filenames(flow_rgb.frame, flow_rgb.camera)
		self._written.update(names.values())

		write_png(os.path.join(self._output_folder, names["flow"]), flow_rgb.pixels, flow_text(flow_rgb))
		write_png(os.path.join(self._output_folder, names["boxes"]), box_raster.pixels,
				legend_text(box_raster, "boxes"))
		write_png(os.path.join(self._output_folder, names["map"]), map_raster.pixels,
				legend_text(map_raster, "map"))

		return {"frame": flow_rgb.frame,
				"camera": flow_rgb.camera,
				"flow_pixels": int(coverage.sum()),
				"box_pixels": int(box_raster.pixels.any(axis=2).sum()),
				"map_pixels": int(map_raster.pixels.any(axis=2).sum())}



	def add_tensors(self, filename, tensors):

		self._written.add(filename)
		write_tensor_file(os.path.join(self._output_folder, filename), tensors)



	def save_cells(self, rows, camera_order):

		"""
		Saves the per-cell summary, ordered by frame then camera rig
		order.
		"""

		df = pd.DataFrame(rows, columns=["frame", "camera", "flow_pixels", "box_pixels", "map_pixels"])
		df["camera_index"] = df["camera"].map({name: k for k, name in enumerate(camera_order)})
		df = df.sort_values(["frame", "camera_index"]).drop(columns="camera_index")
		self._written.add(CELLS_NAME)

		df.to_csv(os.path.join(self._output_folder, CELLS_NAME), index=False, lineterminator="\n")

		return df



	def save_manifest(self, manifest):

		"""
		Writes manifest.json, completed with the sorted list of the
		other files this run wrote.
		"""

		manifest = dict(manifest)
		manifest["files"] = sorted(self._written)

		with open(os.path.join(self._output_folder, MANIFEST_NAME), 'w', encoding='utf-8', newline='\n') as f:
			f.write(json.dumps(manifest, sort_keys=True, indent=2, allow_nan=False) + "\n")

		return manifest



def load_manifest(path):

	with open(path, 'r', encoding='utf-8') as f:
		return json.load(f)



def directory_hash(folder):

	"""
	SHA-256 over the sorted relative paths and contents of every file
	below folder.
	"""

	digest = hashlib.sha256()

	paths = []
	for root, _, files in os.walk(folder):
		paths += [os.path.relpath(os.path.join(root, f), folder) for f in files]

	for path in sorted(p.replace(os.sep, "/") for p in paths):
		digest.update(path.encode('utf-8') + b'\0')
		with open(os.path.join(folder, path), 'rb') as f:
			digest.update(hashlib.sha256(f.read()).digest())

	return digest.hexdigest()
