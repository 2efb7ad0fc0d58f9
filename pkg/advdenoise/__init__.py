"""advdenoise - blind Gaussian image denoising with adversarial training."""

__version__ = "0.1.0"

from .models.denoiser import DenoiserModel, MultiScaleConfig, build_denoiser
from .models.discriminator import Discriminator, build_discriminator
from .storage.checkpoints import load_checkpoint, save_checkpoint
from .training.pipeline import TrainingPipeline
from .utils.config import RunConfig

__all__ = [
    "DenoiserModel",
    "MultiScaleConfig",
    "build_denoiser",
    "Discriminator",
    "build_discriminator",
    "load_checkpoint",
    "save_checkpoint",
    "TrainingPipeline",
    "RunConfig",
]
