# tests/unit/test_data.py

import os

import numpy as np
import pytest
from PIL import Image

from advdenoise.core.tensor import Tensor
from advdenoise.data.datasets import (
    DatasetSpec, check_disjoint, default_splits, list_images, load_dataset,
    load_images, prepare_splits, random_crop, stack_patches, synthetic_textures,
)
from advdenoise.data.images import ImagePatch, load_grayscale, save_pgm, to_uint8
from advdenoise.utils.errors import (
    DatasetError, ImageError, ImageFormatError, ShapeError, UnsupportedBitDepthError,
)

def write_gray(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
    return str(path)

class TestLoadGrayscale:
    def test_eight_bit_values_are_rescaled(self, tmp_path):
        """Test gray level 128 becomes 128/255"""
        path = write_gray(tmp_path / "flat.pgm", np.full((4, 6), 128))
        image = load_grayscale(path)
        assert image.pixels.shape == (1, 4, 6)
        np.testing.assert_allclose(image.pixels.data, 0.50196, atol=1e-5)
        assert image.source_id == "flat.pgm"

    def test_png_and_pgm_agree(self, tmp_path, rng):
        """Test both formats decode to the same pixels"""
        array = rng.integers(0, 256, (5, 7))
        a = load_grayscale(write_gray(tmp_path / "a.pgm", array))
        b = load_grayscale(write_gray(tmp_path / "b.png", array))
        np.testing.assert_array_equal(a.pixels.data, b.pixels.data)

    def test_colour_is_reduced_to_luminance(self, tmp_path):
        """Test RGB input uses the 0.299/0.587/0.114 weights"""
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[..., 0] = 200
        rgb[..., 1] = 100
        rgb[..., 2] = 50
        path = str(tmp_path / "colour.png")
        Image.fromarray(rgb).save(path)
        expected = (0.299 * 200 + 0.587 * 100 + 0.114 * 50) / 255
        np.testing.assert_allclose(load_grayscale(path).pixels.data, expected, rtol=1e-6)

    def test_sixteen_bit_is_rejected(self, tmp_path):
        """Test images deeper than 8 bits are refused"""
        path = str(tmp_path / "deep.png")
        Image.fromarray(np.full((3, 3), 40000, dtype=np.uint16)).save(path)
        with pytest.raises(UnsupportedBitDepthError):
            load_grayscale(path)

    def test_corrupt_file(self, tmp_path):
        """Test undecodable files raise a format error"""
        path = tmp_path / "broken.png"
        path.write_bytes(b"\x89PNG\r\n\x1a\nnot really")
        with pytest.raises(ImageFormatError):
            load_grayscale(str(path))

    def test_missing_file(self, tmp_path):
        """Test a missing path is a format error"""
        with pytest.raises(ImageFormatError):
            load_grayscale(str(tmp_path / "absent.pgm"))

class TestSavePgm:
    def test_quantised_write_reads_back(self, tmp_path, rng):
        """Test a saved image reloads to its 8-bit quantisation"""
        image = Tensor(rng.uniform(-0.2, 1.2, (1, 9, 11)))
        path = str(tmp_path / "out" / "image.pgm")
        save_pgm(image, path)
        with open(path, "rb") as f:
            assert f.read(2) == b"P5"
        np.testing.assert_array_equal(
            np.round(load_grayscale(path).pixels.data[0] * 255).astype(np.uint8),
            to_uint8(image),
        )

    def test_unwritable_path(self, tmp_path):
        """Test a write below a regular file raises an image error"""
        (tmp_path / "blocker").write_text("")
        with pytest.raises(ImageError):
            save_pgm(np.zeros((1, 4, 4)), str(tmp_path / "blocker" / "image.pgm"))

    def test_to_uint8_clamps(self):
        """Test values outside [0, 1] saturate"""
        np.testing.assert_array_equal(to_uint8(np.array([[-0.5, 0.5, 1.5]])), [[0, 128, 255]])

    def test_to_uint8_rejects_multichannel(self):
        """Test only single-channel images can be written"""
        with pytest.raises(ShapeError):
            to_uint8(np.zeros((3, 4, 4)))

class TestCrops:
    def test_crop_size_and_origin(self, rng):
        """Test crops have the requested size and record their origin"""
        data = np.arange(100, dtype=np.float32).reshape(1, 10, 10) / 100
        crop = random_crop(ImagePatch(Tensor(data), "img"), 4, rng)
        row, col = crop.crop_origin
        assert crop.pixels.shape == (1, 4, 4)
        np.testing.assert_array_equal(crop.pixels.data, data[:, row:row + 4, col:col + 4])

    def test_nested_crop_origin_accumulates(self, rng):
        """Test cropping a crop reports the origin in the source image"""
        base = ImagePatch(Tensor(np.zeros((1, 10, 10))), "img", crop_origin=(5, 7))
        crop = random_crop(base, 10, rng)
        assert crop.crop_origin == (5, 7)

    def test_undersized_image(self, rng):
        """Test images smaller than the crop are rejected"""
        with pytest.raises(ShapeError):
            random_crop(ImagePatch(Tensor(np.zeros((1, 3, 8))), "small"), 4, rng)

class TestDatasets:
    def test_directory_listing_is_sorted(self, tmp_path):
        """Test only supported files are listed, in sorted order"""
        for name in ("b.png", "a.pgm", "notes.txt"):
            (tmp_path / name).write_bytes(b"")
        assert [os.path.basename(p) for p in list_images(str(tmp_path))] == ["a.pgm", "b.png"]

    def test_missing_directory(self, tmp_path):
        """Test a missing dataset directory is reported"""
        with pytest.raises(DatasetError):
            list_images(str(tmp_path / "absent"))

    def test_load_dataset_crops(self, tmp_path, rng):
        """Test every image yields crops_per_image patches"""
        for i in range(3):
            write_gray(tmp_path / f"img{i}.png", rng.integers(0, 256, (20, 24)))
        patches = load_dataset(DatasetSpec((str(tmp_path),), patch_size=8, crops_per_image=2, seed=1))
        assert len(patches) == 6
        assert stack_patches(patches).shape == (6, 1, 8, 8)

    def test_empty_directory(self, tmp_path):
        """Test a directory without images cannot form a dataset"""
        with pytest.raises(DatasetError):
            load_dataset(DatasetSpec((str(tmp_path),)))
        with pytest.raises(DatasetError):
            load_images([str(tmp_path)])

    def test_overlapping_splits(self):
        """Test splits sharing a source image are rejected"""
        a = synthetic_textures(2, size=8, seed=0)
        with pytest.raises(DatasetError):
            check_disjoint(a, a[1:])

    def test_overlapping_directories(self, tmp_path, rng):
        """Test the same file under both roots is rejected"""
        write_gray(tmp_path / "shared.png", rng.integers(0, 256, (16, 16)))
        with pytest.raises(DatasetError):
            prepare_splits(str(tmp_path), str(tmp_path), patch_size=8, seed=0)

    def test_stack_rejects_mixed_sizes(self):
        """Test patches of different size cannot be batched"""
        patches = [ImagePatch(Tensor(np.zeros((1, 4, 4))), "a"), ImagePatch(Tensor(np.zeros((1, 5, 4))), "b")]
        with pytest.raises(ShapeError):
            stack_patches(patches)

class TestSyntheticTextures:
    def test_range_and_determinism(self):
        """Test values lie in [0.05, 0.95] and the seed fixes the content"""
        a = synthetic_textures(4, size=32, seed=11)
        b = synthetic_textures(4, size=32, seed=11)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.pixels.data, y.pixels.data)
            assert x.pixels.data.min() >= 0.05 - 1e-6
            assert x.pixels.data.max() <= 0.95 + 1e-6

    def test_default_splits_are_disjoint(self):
        """Test the bundled train and validation sets share no source"""
        train, validation = default_splits(seed=0, size=16)
        assert (len(train), len(validation)) == (16, 7)
        check_disjoint(train, validation)
