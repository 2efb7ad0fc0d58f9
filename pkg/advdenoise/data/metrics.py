# advdenoise/data/metrics.py

import csv
import logging
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Callable, Dict, List, Sequence, Union

import numpy as np
from skimage.metrics import mean_squared_error, peak_signal_noise_ratio

from advdenoise.core.tensor import Tensor, no_grad
from advdenoise.data.images import ImagePatch
from advdenoise.training.noise import TEST_SIGMAS, add_gaussian_noise
from advdenoise.utils.errors import DatasetError, ShapeError, StorageError

logger = logging.getLogger(__name__)

PIXEL_RANGE = 255.0
PSNR_INFINITE = math.inf

ArrayLike = Union[Tensor, np.ndarray]

def _on_pixel_scale(a: ArrayLike, b: ArrayLike):
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Images differ in shape: {a.shape} vs {b.shape}")
    return a * PIXEL_RANGE, b * PIXEL_RANGE

def mse(a: ArrayLike, b: ArrayLike) -> float:
    """Mean squared error of two [0, 1] images measured on the 0-255 scale."""
    a, b = _on_pixel_scale(a, b)
    return float(mean_squared_error(a, b))

def psnr(clean: ArrayLike, denoised: ArrayLike) -> float:
    """PSNR in dB on the 0-255 scale; identical images give ``PSNR_INFINITE``.

    Values are not re-quantised to 8 bits before measurement.
    """
    a, b = _on_pixel_scale(clean, denoised)
    if not np.any(a != b):
        return PSNR_INFINITE
    return float(peak_signal_noise_ratio(a, b, data_range=PIXEL_RANGE))

@dataclass(frozen=True)
class EvaluationRow:
    image_id: str
    sigma: int
    psnr_noisy: float
    psnr_denoised: float

EVALUATION_COLUMNS = tuple(f.name for f in fields(EvaluationRow))

def noise_seed(seed: int, sigma: float, image_id: str) -> List[int]:
    """Per-image noise seed, independent of the order of the set."""
    return [seed, int(round(sigma * 1000)), zlib.crc32(image_id.encode("utf-8"))]

def _evaluate_one(denoise: Callable[[Tensor], Tensor], patch: ImagePatch,
                  sigma: float, seed: int) -> EvaluationRow:
    rng = np.random.default_rng(noise_seed(seed, sigma, patch.source_id))
    with no_grad():
        noisy = add_gaussian_noise(patch.pixels, sigma, rng)
        denoised = denoise(noisy)
    return EvaluationRow(
        image_id=patch.source_id,
        sigma=sigma,
        psnr_noisy=psnr(patch.pixels, noisy),
        psnr_denoised=psnr(patch.pixels, denoised),
    )

def evaluate_images(
    model: Callable[[Tensor], Tensor],
    images: Sequence[ImagePatch],
    sigmas: Sequence[float] = TEST_SIGMAS,
    seed: int = 0,
    threads: int = 1,
) -> List[EvaluationRow]:
    """Corrupts, denoises and scores every image at every sigma.

    ``model`` is called in evaluation mode only. Rows come back in input
    order (images outer, sigmas inner) whatever the thread count.
    """
    if not images:
        raise DatasetError("Validation set is empty")
    denoise = model.clone() if hasattr(model, "clone") and threads > 1 else model
    jobs = [(patch, sigma) for patch in images for sigma in sigmas]
    if threads <= 1:
        return [_evaluate_one(denoise, patch, sigma, seed) for patch, sigma in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_evaluate_one, denoise, patch, sigma, seed) for patch, sigma in jobs]
        return [f.result() for f in futures]

def mean_psnr(rows: Sequence[EvaluationRow], sigmas: Sequence[float] = TEST_SIGMAS,
              column: str = "psnr_denoised") -> Dict[float, float]:
    """Per-sigma mean, excluding infinite entries; exact summation."""
    means = {}
    for sigma in sigmas:
        values = [getattr(r, column) for r in rows if r.sigma == sigma]
        finite = [v for v in values if math.isfinite(v)]
        if finite:
            means[sigma] = math.fsum(finite) / len(finite)
        else:
            means[sigma] = PSNR_INFINITE if values else math.nan
    return means

def evaluate_validation(
    model: Callable[[Tensor], Tensor],
    validation_set: Sequence[ImagePatch],
    sigmas: Sequence[float] = TEST_SIGMAS,
    seed: int = 0,
    threads: int = 1,
) -> Dict[float, float]:
    """Mean denoised PSNR per sigma over the validation set."""
    rows = evaluate_images(model, validation_set, sigmas, seed, threads)
    means = mean_psnr(rows, sigmas)
    logger.debug(
        "Validation PSNR",
        extra={'advdenoise_psnr': {str(k): round(v, 4) for k, v in means.items()}}
    )
    return means

def write_evaluation_csv(rows: Sequence[EvaluationRow], path: str) -> None:
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(EVALUATION_COLUMNS)
            for row in rows:
                writer.writerow(astuple(row))
    except OSError as e:
        raise StorageError(f"Cannot write evaluation results {path}: {e}")
