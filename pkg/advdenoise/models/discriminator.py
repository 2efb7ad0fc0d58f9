# advdenoise/models/discriminator.py
"""Clean-versus-denoised classifier used for adversarial training.

A compact strided convolution stack with global average pooling and a
two-way softmax head stands in for a large pretrained feature extractor.
The feature stack can be frozen so only the head trains.
"""

import copy
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional, Tuple, Union

import numpy as np

from advdenoise.core.optim import Adam
from advdenoise.core.tensor import (
    Parameter, Tensor, as_tensor, bce_loss, clamp, concat, global_avg_pool,
    linear, no_grad, relu, reshape, softmax, take,
)
from advdenoise.models.denoiser import Conv2d
from advdenoise.training.noise import NoiseSpec
from advdenoise.utils.errors import DatasetError, ShapeError

logger = logging.getLogger(__name__)

CLEAN = 1
DENOISED = 0

@dataclass(frozen=True)
class DiscriminatorConfig:
    """(kernel, stride, out_channels) per conv stage, then a hidden FC layer."""
    stages: Tuple[Tuple[int, int, int], ...] = ((3, 2, 16), (3, 2, 32), (3, 2, 64), (3, 2, 64))
    hidden: int = 256
    input_channels: int = 1
    min_size: int = 16

    def to_dict(self) -> Dict:
        return {
            "stages": [list(s) for s in self.stages],
            "hidden": self.hidden,
            "input_channels": self.input_channels,
            "min_size": self.min_size,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DiscriminatorConfig":
        return cls(
            stages=tuple(tuple(s) for s in data["stages"]),
            hidden=data["hidden"],
            input_channels=data["input_channels"],
            min_size=data["min_size"],
        )

class Linear:
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 name: str, zero_init: bool = False):
        bound = math.sqrt(6.0 / in_features)
        weight = np.zeros((out_features, in_features)) if zero_init else \
            rng.uniform(-bound, bound, (out_features, in_features))
        self.weight = Parameter(weight, name=f"{name}.weight")
        self.bias = Parameter(np.zeros(out_features), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

class Discriminator:
    """D(x): probability that an image is clean rather than denoised."""

    def __init__(self, config: DiscriminatorConfig, rng: np.random.Generator):
        self.config = config
        self.stages: List[Conv2d] = []
        channels = config.input_channels
        for i, (kernel, stride, out_channels) in enumerate(config.stages):
            self.stages.append(Conv2d(channels, out_channels, kernel, rng, f"disc.features.{i}", stride=stride))
            channels = out_channels
        self.hidden = Linear(channels, config.hidden, rng, "disc.head.0")
        # Zero output layer: both classes start equally likely.
        self.output = Linear(config.hidden, 2, rng, "disc.head.1", zero_init=True)
        self.metadata: Dict = {}

    def forward(self, images: Tensor) -> Tensor:
        """Probabilities of the clean class, shape (N,) for an N x 1 x H x W batch."""
        x = as_tensor(images)
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeError(f"Discriminator expects N x 1 x H x W input, got {x.shape}")
        if min(x.shape[2:]) < self.config.min_size:
            raise ShapeError(
                f"Discriminator input {x.shape[2]}x{x.shape[3]} is smaller than "
                f"{self.config.min_size}x{self.config.min_size}"
            )
        h = x
        for stage in self.stages:
            h = relu(stage(h))
        h = relu(self.hidden(global_avg_pool(h)))
        return take(softmax(self.output(h)), (slice(None), CLEAN))

    __call__ = forward

    def parameter_groups(self) -> Dict[str, List[Parameter]]:
        return {
            "features": [p for stage in self.stages for p in stage.parameters()],
            "head": self.hidden.parameters() + self.output.parameters(),
        }

    def named_parameters(self) -> Dict[str, Parameter]:
        groups = self.parameter_groups()
        return {p.name: p for group in ("features", "head") for p in groups[group]}

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def clone(self) -> "Discriminator":
        copied = copy.deepcopy(self)
        copied.zero_grad()
        return copied

def build_discriminator(cfg: Optional[DiscriminatorConfig] = None, seed: int = 0) -> Discriminator:
    return Discriminator(cfg or DiscriminatorConfig(), np.random.default_rng(seed))

def disc_forward(d: Discriminator, image: Union[Tensor, np.ndarray]) -> Tensor:
    """Clean-class probability for a 1 x H x W image (scalar) or a batch (N,)."""
    x = as_tensor(image)
    if x.ndim == 3:
        return reshape(d.forward(reshape(x, (1,) + x.shape)), ())
    return d.forward(x)

def _batch_with_labels(clean, denoised) -> Tuple[Tensor, np.ndarray]:
    clean, denoised = as_tensor(clean), as_tensor(denoised)
    if clean.shape[0] == 0 or denoised.shape[0] == 0:
        raise ShapeError("Discriminator batches must not be empty")
    labels = np.concatenate([
        np.full(clean.shape[0], CLEAN, dtype=clean.dtype),
        np.full(denoised.shape[0], DENOISED, dtype=clean.dtype),
    ])
    return concat([clean, denoised], axis=0), labels

def disc_loss(d: Discriminator, clean, denoised) -> Tensor:
    """Mean BCE with clean labelled 1 and denoised labelled 0.

    Minimising this maximises log D(clean) + log(1 - D(denoised)).
    """
    batch, labels = _batch_with_labels(clean, denoised)
    return bce_loss(d.forward(batch), labels)

@dataclass
class AccuracyMeter:
    """Accuracy over the most recent ``window`` predictions."""
    window: int = 64
    threshold: float = 0.5
    _pairs: Deque[Tuple[float, int]] = field(default_factory=deque, repr=False)

    def __post_init__(self):
        self._pairs = deque(self._pairs, maxlen=self.window)

    def update(self, probs, labels) -> None:
        for prob, label in zip(np.ravel(probs), np.ravel(labels)):
            self._pairs.append((float(prob), int(label)))

    @property
    def accuracy(self) -> float:
        if not self._pairs:
            return 0.0
        correct = sum(int(prob >= self.threshold) == label for prob, label in self._pairs)
        return correct / len(self._pairs)

    def __len__(self) -> int:
        return len(self._pairs)

def discriminator_step(d: Discriminator, optimizer: Adam, clean, denoised,
                       meter: Optional[AccuracyMeter] = None) -> float:
    """One discriminator update; predictions before the update feed ``meter``."""
    batch, labels = _batch_with_labels(clean, denoised)
    optimizer.zero_grad()
    probs = d.forward(batch)
    loss = bce_loss(probs, labels)
    loss.backward()
    optimizer.step()
    if meter is not None:
        meter.update(probs.data, labels)
    return float(loss.data)

def pretrain_discriminator(
    d: Discriminator,
    denoiser: Callable[[Tensor], Tensor],
    dataset: np.ndarray,
    epochs: int = 10,
    noise_spec: Optional[NoiseSpec] = None,
    optimizer: Optional[Adam] = None,
    rng: Optional[np.random.Generator] = None,
    batch_size: int = 8,
    meter: Optional[AccuracyMeter] = None,
) -> AccuracyMeter:
    """Trains D on clean patches versus denoiser outputs of their noisy copies.

    One epoch is one pass over ``dataset`` (N x 1 x H x W clean patches) in
    balanced mini-batches.
    """
    dataset = np.asarray(dataset)
    if dataset.shape[0] == 0:
        raise DatasetError("Cannot pretrain the discriminator on an empty dataset")
    noise_spec = noise_spec or NoiseSpec()
    rng = rng or np.random.default_rng(noise_spec.seed)
    optimizer = optimizer or Adam(d.named_parameters(), lr=1e-4)
    if meter is None:
        meter = AccuracyMeter()

    for epoch in range(epochs):
        order = rng.permutation(dataset.shape[0])
        for start in range(0, len(order), batch_size):
            clean = dataset[order[start:start + batch_size]]
            noisy = noise_spec.corrupt(clean, rng)
            with no_grad():
                denoised = clamp(denoiser(Tensor(noisy, dtype=clean.dtype)), 0.0, 1.0).data
            discriminator_step(d, optimizer, clean, denoised, meter)
        logger.info(
            "Discriminator pretraining epoch finished",
            extra={'advdenoise_epoch': epoch + 1, 'advdenoise_accuracy': meter.accuracy}
        )
    return meter
