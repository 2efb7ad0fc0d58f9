# advdenoise/data/datasets.py
"""Patch datasets: directory ingestion, random crops and synthetic textures."""

import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from advdenoise.core.tensor import Tensor
from advdenoise.data.images import SUPPORTED_EXTENSIONS, ImagePatch, load_grayscale
from advdenoise.utils.errors import DatasetError, ShapeError

logger = logging.getLogger(__name__)

class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"

@dataclass(frozen=True)
class DatasetSpec:
    roots: Tuple[str, ...]
    patch_size: int = 64
    crops_per_image: int = 1
    split: Split = Split.TRAIN
    seed: int = 0

def random_crop(image: ImagePatch, size: int, rng: np.random.Generator) -> ImagePatch:
    """Uniformly positioned size x size crop; the origin is recorded."""
    height, width = image.height, image.width
    if height < size or width < size:
        raise ShapeError(
            f"{image.source_id}: {height}x{width} image is smaller than the {size}x{size} crop"
        )
    row = int(rng.integers(0, height - size + 1))
    col = int(rng.integers(0, width - size + 1))
    pixels = Tensor(image.pixels.data[:, row:row + size, col:col + size])
    origin = (image.crop_origin[0] + row, image.crop_origin[1] + col)
    return ImagePatch(pixels, image.source_id, origin)

def list_images(root: str) -> List[str]:
    """Image files below ``root``, sorted for a stable order."""
    if not os.path.isdir(root):
        raise DatasetError(f"Dataset directory {root} does not exist")
    found = []
    for directory, _, files in os.walk(root):
        for name in files:
            if name.lower().endswith(SUPPORTED_EXTENSIONS):
                found.append(os.path.join(directory, name))
    return sorted(found)

def load_dataset(spec: DatasetSpec) -> List[ImagePatch]:
    """Loads every image under ``spec.roots`` and cuts random crops from each."""
    rng = np.random.default_rng(spec.seed)
    patches = []
    for root in spec.roots:
        for path in list_images(root):
            image = load_grayscale(path, os.path.relpath(path, root))
            for _ in range(spec.crops_per_image):
                patches.append(random_crop(image, spec.patch_size, rng))
    if not patches:
        raise DatasetError(f"No {spec.split.value} images found under {list(spec.roots)}")
    logger.info(
        "Loaded dataset",
        extra={'advdenoise_split': spec.split.value, 'advdenoise_patches': len(patches)}
    )
    return patches

def load_images(roots: Iterable[str]) -> List[ImagePatch]:
    """Whole images, uncropped (evaluation works at any size)."""
    images = [
        load_grayscale(path, os.path.relpath(path, root))
        for root in roots for path in list_images(root)
    ]
    if not images:
        raise DatasetError(f"No images found under {list(roots)}")
    return images

def check_disjoint(a: Sequence[ImagePatch], b: Sequence[ImagePatch]) -> None:
    shared = {p.source_id for p in a} & {p.source_id for p in b}
    if shared:
        raise DatasetError(f"Splits share source images: {sorted(shared)[:5]}")

def stack_patches(patches: Sequence[ImagePatch]) -> np.ndarray:
    """N x 1 x H x W array of equally sized patches."""
    if not patches:
        raise DatasetError("Cannot stack an empty patch list")
    shapes = {p.pixels.shape for p in patches}
    if len(shapes) != 1:
        raise ShapeError(f"Patches differ in shape: {sorted(shapes)}")
    return np.stack([p.pixels.data for p in patches])

def synthetic_textures(count: int, size: int = 64, seed: int = 0,
                       prefix: str = "synthetic") -> List[ImagePatch]:
    """Noise-free texture patches: oriented gratings over a smooth ramp plus a
    few flat-shaded rectangles for edges. Values lie in [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    patches = []
    for i in range(count):
        image = rng.uniform(-0.3, 0.3) * xx + rng.uniform(-0.3, 0.3) * yy
        for _ in range(3):
            fx, fy = rng.uniform(-4.0, 4.0, size=2)
            image += rng.uniform(0.05, 0.25) * np.sin(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 2 * np.pi))
        for _ in range(2):
            r0, c0 = rng.integers(0, size // 2, size=2)
            h, w = rng.integers(size // 8, size // 2, size=2)
            image[r0:r0 + h, c0:c0 + w] += rng.uniform(-0.4, 0.4)
        lo, hi = image.min(), image.max()
        image = 0.05 + 0.9 * (image - lo) / max(hi - lo, 1e-12)
        patches.append(ImagePatch(Tensor(image[None, :, :]), f"{prefix}-{seed}-{i:03d}"))
    return patches

def default_splits(seed: int = 0, size: int = 64,
                   train_count: int = 16, validation_count: int = 7
                   ) -> Tuple[List[ImagePatch], List[ImagePatch]]:
    """Bundled stand-ins used when no image directories are configured."""
    train = synthetic_textures(train_count, size, seed, prefix="train")
    validation = synthetic_textures(validation_count, size, seed + 1, prefix="validation")
    return train, validation

def prepare_splits(train_dir: Optional[str], validation_dir: Optional[str],
                   patch_size: int, seed: int) -> Tuple[List[ImagePatch], List[ImagePatch]]:
    """Training crops and whole validation images, checked for disjoint sources."""
    synthetic_train, synthetic_validation = default_splits(seed, patch_size)
    train = load_dataset(DatasetSpec((train_dir,), patch_size, split=Split.TRAIN, seed=seed)) \
        if train_dir else synthetic_train
    validation = load_images([validation_dir]) if validation_dir else synthetic_validation
    if train_dir and validation_dir:
        shared = {os.path.realpath(p) for p in list_images(train_dir)} & \
            {os.path.realpath(p) for p in list_images(validation_dir)}
        if shared:
            raise DatasetError(f"Validation images also appear in training data: {sorted(shared)[:5]}")
    else:
        check_disjoint(train, validation)
    return train, validation
