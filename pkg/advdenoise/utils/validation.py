from typing import Sequence, Tuple
from .errors import ConfigError, ValidationError

def validate_drop_probability(drop_prob: float) -> None:
    """Validates a dropout probability."""
    if not 0.0 <= drop_prob < 1.0:
        raise ValidationError(f"drop_prob must be in [0, 1), got {drop_prob}")

def validate_lp_exponent(p: float) -> None:
    """Validates the exponent of the sparsity penalty."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"p must lie strictly between 0 and 1, got {p}")

def validate_sigma(sigma255: float) -> None:
    if sigma255 < 0:
        raise ValidationError(f"Noise level must be non-negative, got {sigma255}")

def validate_positive_int(name: str, value: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")

def validate_branches(branches: Sequence[Tuple[int, int]]) -> None:
    """Validates a multi-scale branch list of (kernel_size, out_channels)."""
    if not branches:
        raise ConfigError("At least one feature branch is required")

    ordered = sorted(branches)
    for kernel, channels in ordered:
        if kernel <= 0 or kernel % 2 == 0:
            raise ConfigError(f"Branch kernel sizes must be odd and positive, got {kernel}")
        if channels <= 0:
            raise ConfigError(f"Branch channel counts must be positive, got {channels}")

    kernels = [k for k, _ in ordered]
    if len(set(kernels)) != len(kernels):
        raise ConfigError(f"Branch kernel sizes must be distinct, got {kernels}")

    channels = [c for _, c in ordered]
    if any(b <= a for a, b in zip(channels, channels[1:])):
        raise ConfigError(
            f"Branch output channels must grow with kernel size, got {list(ordered)}"
        )
