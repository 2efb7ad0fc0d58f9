# advdenoise/models/denoiser.py

import copy
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from advdenoise.core.tensor import (
    Parameter, Tensor, as_tensor, concat, conv2d, dropout, hadamard, relu,
    reshape, sigmoid, smoothed_power_sum,
)
from advdenoise.utils.errors import ConfigError, ShapeError, ValidationError
from advdenoise.utils.validation import validate_branches, validate_lp_exponent

logger = logging.getLogger(__name__)

DEFAULT_BRANCHES: Tuple[Tuple[int, int], ...] = ((3, 32), (5, 40), (7, 48), (9, 56), (11, 64))
PARAMETER_GROUPS = ("features", "gating", "reconstruction")

class SkipMode(str, Enum):
    """How the gating block takes part in the forward pass."""
    SHORT_CIRCUIT = "short_circuit"
    GATED = "gated"

@dataclass(frozen=True)
class MultiScaleConfig:
    """Architecture of the denoiser.

    ``branches`` lists (kernel_size, out_channels) of the multi-scale feature
    layer; their channel sum must equal ``feature_width``, the width of the
    gating block.
    """
    branches: Tuple[Tuple[int, int], ...] = DEFAULT_BRANCHES
    input_channels: int = 1
    feature_width: int = 240
    recon_width: int = 128

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(tuple(b) for b in self.branches))

    def validate(self) -> None:
        validate_branches(self.branches)
        if self.input_channels != 1:
            raise ConfigError("Only single-channel (grayscale) images are supported")
        if self.width != self.feature_width:
            raise ConfigError(
                f"Feature branches produce {self.width} channels, "
                f"gating block expects {self.feature_width}"
            )
        if self.recon_width <= 0:
            raise ConfigError(f"recon_width must be positive, got {self.recon_width}")

    @property
    def width(self) -> int:
        return sum(c for _, c in self.branches)

    @property
    def max_kernel(self) -> int:
        return max(k for k, _ in self.branches)

    def to_dict(self) -> Dict:
        return {
            "branches": [list(b) for b in self.branches],
            "input_channels": self.input_channels,
            "feature_width": self.feature_width,
            "recon_width": self.recon_width,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MultiScaleConfig":
        return cls(
            branches=tuple(tuple(b) for b in data["branches"]),
            input_channels=data["input_channels"],
            feature_width=data["feature_width"],
            recon_width=data["recon_width"],
        )

@dataclass
class LpRegularizer:
    """Smoothed l_p sparsity penalty settings for layers 5 and 6."""
    lam: float = 1e-4
    p: float = 0.1
    eps: float = 1e-6

class Conv2d:
    """Convolution with fan-in scaled uniform (He) initialisation."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, name: str, stride: int = 1):
        fan_in = in_channels * kernel_size * kernel_size
        bound = math.sqrt(6.0 / fan_in)
        self.stride = stride
        self.weight = Parameter(
            rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size, kernel_size)),
            name=f"{name}.weight",
        )
        self.bias = Parameter(np.zeros(out_channels), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride)

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

class GatingBlock:
    """Three 1x1 convolutions producing per-pixel, per-channel gates in (0, 1).

    Gates saturate to exactly 1 (or 0) for large pre-activations; see ``sigmoid``.
    """

    def __init__(self, width: int, rng: np.random.Generator):
        self.layers = [Conv2d(width, width, 1, rng, f"gating.{i}") for i in range(3)]

    def __call__(self, features: Tensor) -> Tensor:
        h = relu(self.layers[0](features))
        h = relu(self.layers[1](h))
        return sigmoid(self.layers[2](h))

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

class ReconstructionStack:
    """Layers 5-7: 1x1 convolutions down to a single output channel."""

    def __init__(self, width: int, recon_width: int, rng: np.random.Generator):
        self.layer5 = Conv2d(width, recon_width, 1, rng, "reconstruction.5")
        self.layer6 = Conv2d(recon_width, recon_width, 1, rng, "reconstruction.6")
        self.layer7 = Conv2d(recon_width, 1, 1, rng, "reconstruction.7")

    def __call__(self, h: Tensor) -> Tensor:
        h = relu(self.layer5(h))
        h = relu(self.layer6(h))
        return self.layer7(h)

    def parameters(self) -> List[Parameter]:
        return self.layer5.parameters() + self.layer6.parameters() + self.layer7.parameters()

class DenoiserModel:
    """Multi-scale feature layer, gating block and 1x1 reconstruction stack."""

    def __init__(
        self,
        config: MultiScaleConfig,
        feature_layer: List[Conv2d],
        gating: GatingBlock,
        reconstruction: ReconstructionStack,
        skip_mode: SkipMode = SkipMode.SHORT_CIRCUIT,
        dropout_after_features: Optional[float] = None,
        regularizer: Optional[LpRegularizer] = None,
    ):
        self.config = config
        self.feature_layer = feature_layer
        self.gating = gating
        self.reconstruction = reconstruction
        self.skip_mode = SkipMode(skip_mode)
        self.dropout_after_features = dropout_after_features
        self.regularizer = regularizer or LpRegularizer()
        self.metadata: Dict = {}

    def features(self, image: Tensor) -> Tensor:
        """Stacked multi-scale activations, N x feature_width x H x W."""
        x = as_tensor(image)
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeError(
                f"Denoiser expects N x {self.config.input_channels} x H x W input, got {x.shape}"
            )
        return relu(concat([branch(x) for branch in self.feature_layer], axis=1))

    def gates(self, features: Tensor) -> Tensor:
        return self.gating(features)

    def forward(self, image: Tensor, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """Denoises a 1 x H x W image or an N x 1 x H x W batch.

        The noise level is never an input: the model is blind.
        """
        x = as_tensor(image)
        single = x.ndim == 3
        if single:
            x = reshape(x, (1,) + x.shape)

        features = self.features(x)
        if self.dropout_after_features:
            features = dropout(features, self.dropout_after_features, training, rng)
        if self.skip_mode is SkipMode.GATED:
            features = hadamard(features, self.gates(features))
        out = self.reconstruction(features)

        if single:
            out = reshape(out, out.shape[1:])
        return out

    def __call__(self, image: Tensor) -> Tensor:
        return self.forward(image, training=False)

    def parameter_groups(self) -> Dict[str, List[Parameter]]:
        return {
            "features": [p for branch in self.feature_layer for p in branch.parameters()],
            "gating": self.gating.parameters(),
            "reconstruction": self.reconstruction.parameters(),
        }

    def named_parameters(self) -> Dict[str, Parameter]:
        """Parameters in declaration order (features, gating, reconstruction)."""
        return {
            p.name: p
            for group in PARAMETER_GROUPS
            for p in self.parameter_groups()[group]
        }

    def parameter_count(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def clone(self) -> "DenoiserModel":
        """Independent copy, e.g. for read-only validation on another thread."""
        copied = copy.deepcopy(self)
        copied.zero_grad()
        return copied

def closed_form_parameter_count(cfg: MultiScaleConfig) -> int:
    width, recon = cfg.feature_width, cfg.recon_width
    features = sum(k * k * cfg.input_channels * c + c for k, c in cfg.branches)
    gating = 3 * (width * width + width)
    reconstruction = (width * recon + recon) + (recon * recon + recon) + (recon + 1)
    return features + gating + reconstruction

def build_denoiser(cfg: Optional[MultiScaleConfig] = None, seed: int = 0,
                   regularizer: Optional[LpRegularizer] = None) -> DenoiserModel:
    """Builds a freshly initialised denoiser; identical seeds give identical weights."""
    cfg = cfg or MultiScaleConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)

    feature_layer = [
        Conv2d(cfg.input_channels, channels, kernel, rng, f"features.k{kernel}")
        for kernel, channels in cfg.branches
    ]
    gating = GatingBlock(cfg.feature_width, rng)
    reconstruction = ReconstructionStack(cfg.feature_width, cfg.recon_width, rng)
    model = DenoiserModel(cfg, feature_layer, gating, reconstruction, regularizer=regularizer)

    logger.info(
        "Built denoiser",
        extra={
            'advdenoise_parameters': model.parameter_count(),
            'advdenoise_branches': [list(b) for b in cfg.branches],
        }
    )
    return model

def lp_penalty(model: DenoiserModel, p: Optional[float] = None,
               eps: Optional[float] = None) -> Tensor:
    """Smoothed, zero-anchored l_p penalty on the weights of layers 5 and 6."""
    p = model.regularizer.p if p is None else p
    eps = model.regularizer.eps if eps is None else eps
    validate_lp_exponent(p)
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    stack = model.reconstruction
    return (
        smoothed_power_sum(stack.layer5.weight, p, eps)
        + smoothed_power_sum(stack.layer6.weight, p, eps)
    )

def set_trainable(model, groups: Iterable[str], trainable: bool) -> None:
    """Freezes or unfreezes parameter groups.

    Frozen parameters still pass gradients through; the optimizer just
    leaves them alone. Works for any model exposing ``parameter_groups()``.
    """
    available = model.parameter_groups()
    for group in groups:
        if group not in available:
            raise ValidationError(f"Unknown parameter group {group!r}; expected one of {sorted(available)}")
        for param in available[group]:
            param.trainable = trainable
