import json
from sys import path as syspath
from os import path as ospath
from os import listdir, makedirs
from shutil import rmtree
from tempfile import mkdtemp
import unittest

import numpy as np
import numpy.testing as npt
import pandas as pd

syspath.append(ospath.join(ospath.dirname(ospath.abspath(__file__)), '..'))

from conditions.instance_flow import compute_offsets, normalize_to_rgb, rasterize_flow
from conditions.layout_raster import render_boxes, render_map
from conditions.raster import read_png
from conditions.scene_model import read_scene
from results import CELLS_NAME, MANIFEST_NAME, Results, directory_hash, load_manifest


DATASETS = ospath.join(ospath.dirname(ospath.abspath(__file__)), "test_datasets")



class TestResults(unittest.TestCase):

	"""
	Class in charge of checking that the methods built inside Results
	class write the condition bundle as expected.

	Results class is built in results.py. File placed at the root of
	this framework.
	"""


	def setUp(self):

		self.folder = mkdtemp()
		self._results = Results(ospath.join(self.folder, "bundle"))


	def tearDown(self):

		rmtree(self.folder)


	def test_creates_folder(self):

		npt.assert_equal(ospath.isdir(self._results.output_folder), True)
		npt.assert_equal(self._results.cell_filenames(3, "CAM_BACK"),
						{"flow": "flow_CAM_BACK_0003.png", "boxes": "boxes_CAM_BACK_0003.png",
						"map": "map_CAM_BACK_0003.png"})


	def test_add_cell(self):

		"""
		One cell of the fixture scene writes three PNGs carrying their
		own metadata, and the summary row counts the filled pixels.
		"""

		scene = read_scene(ospath.join(DATASETS, "fixture_scene.json"))
		cam = scene.cameras[0]

		trajectory_map = rasterize_flow(scene, compute_offsets(scene), 2, cam)
		flow_rgb = normalize_to_rgb(trajectory_map)
		boxes = render_boxes(scene, 2, cam)
		road = render_map(scene, 2, cam)

		row = self._results.add_cell(flow_rgb, boxes, road, trajectory_map.coverage)

		npt.assert_equal((row["frame"], row["camera"]), (2, cam.name))
		npt.assert_equal(row["flow_pixels"], int(trajectory_map.coverage.sum()))
		npt.assert_equal(row["flow_pixels"] > 0, True)
		npt.assert_equal(row["box_pixels"], int(boxes.pixels.any(axis=2).sum()))

		names = self._results.cell_filenames(2, cam.name)
		npt.assert_equal(sorted(listdir(self._results.output_folder)), sorted(names.values()))

		pixels, text = read_png(ospath.join(self._results.output_folder, names["boxes"]))
		npt.assert_array_equal(pixels, boxes.pixels)
		npt.assert_equal(text["condition"], "boxes")

		pixels, _ = read_png(ospath.join(self._results.output_folder, names["flow"]))
		npt.assert_array_equal(pixels, flow_rgb.pixels)


	def test_save_cells_order(self):

		rows = [{"frame": f, "camera": c, "flow_pixels": 1, "box_pixels": 2, "map_pixels": 3}
				for f in (1, 0) for c in ("CAM_B", "CAM_A")]

		df = self._results.save_cells(rows, ["CAM_B", "CAM_A"])

		npt.assert_equal(list(df["frame"]), [0, 0, 1, 1])
		npt.assert_equal(list(df["camera"]), ["CAM_B", "CAM_A", "CAM_B", "CAM_A"])

		loaded = pd.read_csv(ospath.join(self._results.output_folder, CELLS_NAME))
		npt.assert_equal(list(loaded.columns), ["frame", "camera", "flow_pixels", "box_pixels", "map_pixels"])
		npt.assert_equal(list(loaded["camera"]), list(df["camera"]))


	def test_save_manifest(self):

		self._results.add_tensors("embeddings.pct", {"h_c": np.zeros((1, 4))})
		manifest = self._results.save_manifest({"seed": 3, "format": "physica-bundle/1"})

		npt.assert_equal(manifest["files"], ["embeddings.pct"])

		path = ospath.join(self._results.output_folder, MANIFEST_NAME)
		npt.assert_equal(load_manifest(path), manifest)

		with open(path, 'r', encoding='utf-8') as f:
			text = f.read()
		npt.assert_equal(text, json.dumps(manifest, sort_keys=True, indent=2) + "\n")

		npt.assert_raises(ValueError, self._results.save_manifest, {"o_max": float('nan')})


	def test_rewriting_a_bundle(self):

		"""
		A second run into the same folder removes the files of the first
		one, and the manifest only lists what the second run wrote.
		"""

		self._results.add_tensors("embeddings.pct", {"h_c": np.zeros((1, 4))})
		self._results.add_tensors("weights.pct", {"W": np.zeros((2, 2))})
		self._results.save_manifest({"seed": 3})

		second = Results(self._results.output_folder)
		npt.assert_equal(listdir(second.output_folder), [])

		second.add_tensors("embeddings.pct", {"h_c": np.zeros((1, 4))})
		manifest = second.save_manifest({"seed": 3})

		npt.assert_equal(manifest["files"], ["embeddings.pct"])
		npt.assert_equal(sorted(listdir(second.output_folder)), ["embeddings.pct", MANIFEST_NAME])


	def test_foreign_folder_is_refused(self):

		folder = ospath.join(self.folder, "notes")
		makedirs(folder)
		with open(ospath.join(folder, "todo.txt"), 'w') as f:
			f.write("keep me")

		npt.assert_raises(OSError, Results, folder)
		npt.assert_equal(listdir(folder), ["todo.txt"])

		# Files the previous manifest does not list are kept as well
		self._results.add_tensors("embeddings.pct", {"h_c": np.zeros((1, 4))})
		self._results.save_manifest({"seed": 3})
		with open(ospath.join(self._results.output_folder, "todo.txt"), 'w') as f:
			f.write("keep me")

		npt.assert_raises(OSError, Results, self._results.output_folder)
		npt.assert_equal(ospath.isfile(ospath.join(self._results.output_folder, "todo.txt")), True)



class TestDirectoryHash(unittest.TestCase):


	def setUp(self):

		self.folder = mkdtemp()


	def tearDown(self):

		rmtree(self.folder)


	def write(self, root, name, content):

		path = ospath.join(self.folder, root, name)
		makedirs(ospath.dirname(path), exist_ok=True)
		with open(path, 'wb') as f:
			f.write(content)


	def test_hash(self):

		self.write("a", "x.bin", b'1')
		self.write("a", "sub/y.bin", b'2')

		# Same files written in another order
		self.write("b", "sub/y.bin", b'2')
		self.write("b", "x.bin", b'1')

		first = directory_hash(ospath.join(self.folder, "a"))
		npt.assert_equal(first, directory_hash(ospath.join(self.folder, "b")))
		npt.assert_equal(len(first), 64)

		self.write("b", "x.bin", b'3')
		npt.assert_equal(first == directory_hash(ospath.join(self.folder, "b")), False)

		# Renaming changes the hash too
		self.write("c", "x.bin", b'1')
		self.write("c", "sub/z.bin", b'2')
		npt.assert_equal(first == directory_hash(ospath.join(self.folder, "c")), False)



# Running all unittests
if __name__ == "__main__":
	unittest.main()
