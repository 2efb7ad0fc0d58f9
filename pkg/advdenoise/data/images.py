# advdenoise/data/images.py

import logging
import os
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from advdenoise.core.tensor import Tensor
from advdenoise.utils.errors import (
    ImageError, ImageFormatError, ShapeError, UnsupportedBitDepthError,
)

logger = logging.getLogger(__name__)

LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114])
SUPPORTED_EXTENSIONS = (".pgm", ".png")

_EIGHT_BIT_GRAY = {"L"}
_EIGHT_BIT_COLOR = {"RGB", "RGBA", "LA", "P", "1"}

@dataclass
class ImagePatch:
    """A grayscale image or crop with values in [0, 1], shape 1 x H x W."""
    pixels: Tensor
    source_id: str
    crop_origin: Tuple[int, int] = (0, 0)

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

def load_grayscale(path: str, source_id: str = None) -> ImagePatch:
    """Reads an 8-bit PGM (P5) or PNG and rescales it to [0, 1].

    Colour images are reduced to luminance with the 0.299/0.587/0.114
    weights; images with more than 8 bits per channel are rejected.
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in _EIGHT_BIT_GRAY:
                values = np.asarray(img, dtype=np.float64)
            elif mode in _EIGHT_BIT_COLOR:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
                values = rgb @ LUMINANCE_WEIGHTS
            else:
                raise UnsupportedBitDepthError(
                    f"{path}: unsupported pixel format {mode!r}; only 8-bit images are accepted"
                )
    except (UnidentifiedImageError, SyntaxError) as e:
        raise ImageFormatError(f"{path}: not a readable PGM/PNG image ({e})") from e
    except OSError as e:
        raise ImageFormatError(f"{path}: cannot decode image ({e})") from e

    pixels = Tensor((values / 255.0)[None, :, :])
    logger.debug(
        "Loaded image",
        extra={'advdenoise_path': str(path), 'advdenoise_shape': list(pixels.shape)}
    )
    return ImagePatch(pixels, source_id or os.path.basename(path))

def to_uint8(image: Union[Tensor, np.ndarray]) -> np.ndarray:
    """Clamps to [0, 1] and quantises to 8 bits, dropping the channel axis."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim == 3:
        if data.shape[0] != 1:
            raise ShapeError(f"Expected a 1 x H x W image, got {data.shape}")
        data = data[0]
    if data.ndim != 2:
        raise ShapeError(f"Expected a 2-D or 1 x H x W image, got {data.shape}")
    return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)

def save_pgm(image: Union[Tensor, np.ndarray], path: str) -> None:
    """Writes a binary (P5) 8-bit PGM."""
    pixels = to_uint8(image)
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        Image.fromarray(pixels).save(path, format="PPM")
    except OSError as e:
        raise ImageError(f"Cannot write image {path}: {e}")
