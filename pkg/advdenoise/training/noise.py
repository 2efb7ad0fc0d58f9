# advdenoise/training/noise.py

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from advdenoise.core.tensor import Tensor
from advdenoise.utils.errors import ValidationError
from advdenoise.utils.validation import validate_sigma

TEST_SIGMAS: Tuple[int, ...] = (10, 15, 20, 25)

def add_gaussian_noise(image: Union[Tensor, np.ndarray], sigma255: float,
                       rng: np.random.Generator) -> Tensor:
    """Adds i.i.d. N(0, (sigma255/255)^2) noise. The result is not clipped."""
    validate_sigma(sigma255)
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if sigma255 == 0:
        return Tensor(data, dtype=data.dtype)
    noise = rng.standard_normal(data.shape) * (sigma255 / 255.0)
    return Tensor(data + noise, dtype=data.dtype)

@dataclass(frozen=True)
class NoiseSpec:
    """Blind training noise: one sigma per sample, drawn uniformly on the 0-255 scale."""
    sigma_range: Tuple[float, float] = (5.0, 30.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.sigma_range
        if lo < 0 or hi < lo:
            raise ValidationError(f"Invalid sigma range {self.sigma_range}")

    def draw_sigma(self, rng: np.random.Generator) -> float:
        lo, hi = self.sigma_range
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)

    def corrupt(self, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Noisy copy of an N x C x H x W batch; the drawn sigmas are not returned."""
        batch = np.asarray(batch)
        noisy = np.empty_like(batch)
        for i in range(batch.shape[0]):
            noisy[i] = add_gaussian_noise(batch[i], self.draw_sigma(rng), rng).data
        return noisy
