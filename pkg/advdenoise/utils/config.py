import os
import hashlib
from typing import Any, Dict, Mapping, Optional, Tuple
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .validation import validate_positive_int

@dataclass(frozen=True)
class RunConfig:
    """Every knob of a training run. Defaults reproduce the published settings
    where they exist and desk-scale values elsewhere."""
    # Phase lengths
    phase1_iterations: int = 5000
    phase2_iterations: int = 5000
    phase3_iterations: int = 2000
    batch_size: int = 8
    log_interval: int = 10
    checkpoint_every: int = 500

    # Optimisation
    lr_pretrain: float = 1e-3
    lr_denoiser: float = 1e-5
    lr_discriminator: float = 1e-6
    lr_disc_pretrain: float = 1e-4
    disc_pretrain_epochs: int = 10

    # Losses
    lambda_lp: float = 1e-4
    lp_p: float = 0.1
    lp_eps: float = 1e-6
    dropout: float = 0.7
    damping: float = 0.99
    generator_loss: str = "non_saturating"
    lp_in_phase3: bool = True
    freeze_features_in_phase3: bool = True
    disc_train_features: bool = True
    accuracy_window: int = 64

    # Data
    sigma_lo: float = 5.0
    sigma_hi: float = 30.0
    patch_size: int = 64
    seed: int = 0

    # Architecture
    branches: str = "3:32,5:40,7:48,9:56,11:64"
    feature_width: int = 240
    gating_width: int = 240
    recon_width: int = 128

    # Paths and resources, not part of the provenance hash
    train_dir: Optional[str] = None
    validation_dir: Optional[str] = None
    out_dir: str = "runs"
    threads: int = 1

    def validate(self) -> None:
        for name in ("phase1_iterations", "phase2_iterations", "phase3_iterations",
                     "batch_size", "log_interval", "patch_size", "accuracy_window", "threads",
                     "disc_pretrain_epochs"):
            validate_positive_int(name, getattr(self, name))
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0 (0 disables periodic checkpoints)")
        for name in ("lr_pretrain", "lr_denoiser", "lr_discriminator", "lr_disc_pretrain", "lp_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.lp_p < 1.0:
            raise ConfigError(f"lp_p must lie strictly between 0 and 1, got {self.lp_p}")
        if not 0.0 < self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in (0, 1), got {self.dropout}")
        if self.lambda_lp < 0:
            raise ConfigError(f"lambda_lp must be >= 0, got {self.lambda_lp}")
        if self.sigma_lo < 0 or self.sigma_hi < self.sigma_lo:
            raise ConfigError(f"Invalid sigma range [{self.sigma_lo}, {self.sigma_hi}]")
        if self.generator_loss not in GENERATOR_LOSSES:
            raise ConfigError(f"generator_loss must be one of {GENERATOR_LOSSES}, got {self.generator_loss!r}")
        if self.gating_width != self.feature_width:
            raise ConfigError(
                f"gating_width ({self.gating_width}) must equal feature_width ({self.feature_width})"
            )
        self.branch_list()

    def branch_list(self) -> Tuple[Tuple[int, int], ...]:
        """Parses ``branches`` ("k:c,k:c,...") into (kernel, channels) pairs."""
        try:
            pairs = []
            for item in self.branches.split(","):
                kernel, channels = item.split(":")
                pairs.append((int(kernel), int(channels)))
            return tuple(pairs)
        except ValueError as e:
            raise ConfigError(f"Malformed branches value {self.branches!r}") from e

    def to_text(self, provenance_only: bool = False) -> str:
        """Canonical key=value rendering, sorted by key."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if provenance_only and f.name in NON_PROVENANCE_KEYS:
                continue
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text(provenance_only=True).encode()).hexdigest()

GENERATOR_LOSSES = ("non_saturating", "saturating")
NON_PROVENANCE_KEYS = frozenset({"train_dir", "validation_dir", "out_dir", "threads"})
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)

def _parse_value(key: str, raw: str, source: str) -> Any:
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind in (bool, "bool"):
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind in (Optional[str], "Optional[str]"):
            return raw or None
        return raw
    except ValueError:
        raise ConfigError(f"{source}: invalid value {raw!r} for {key}")

def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parses key=value lines; '#' starts a comment, unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key {key!r}")
        values[key] = _parse_value(key, raw, f"{source}:{lineno}")
    return values

class Config:
    """Configuration manager for advdenoise.

    Precedence: defaults < config file < ADVDENOISE_<KEY> environment
    variables < explicit overrides (CLI flags).
    """

    def __init__(
        self,
        config_path: Optional[str] = None,
        env_prefix: str = "ADVDENOISE_",
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ):
        self.config_path = config_path
        self.env_prefix = env_prefix
        self.overrides = dict(overrides or {})
        self.environ = os.environ if environ is None else environ
        self.config = self._load_config()

    def _load_config(self) -> RunConfig:
        values: Dict[str, Any] = {}

        if self.config_path:
            try:
                with open(self.config_path) as f:
                    text = f.read()
            except OSError as e:
                raise ConfigError(f"Cannot read config file {self.config_path}: {e}")
            values.update(parse_config_text(text, self.config_path))

        values.update(self._load_env_vars())

        for key, value in self.overrides.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"Unknown configuration key {key!r}")
            values[key] = _parse_value(key, value, "override") if isinstance(value, str) else value

        config = RunConfig(**values)
        config.validate()
        return config

    def _load_env_vars(self) -> Dict[str, Any]:
        """Reads ADVDENOISE_<KEY> variables for known keys only."""
        values = {}
        for key in _FIELD_TYPES:
            env_key = self.env_prefix + key.upper()
            if env_key in self.environ:
                values[key] = _parse_value(key, self.environ[env_key], env_key)
        return values

    def save(self, path: str) -> None:
        """Writes the full configuration as a key=value file."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w') as f:
            f.write(self.config.to_text())

    def get(self, key: str, default: Any = None) -> Any:
        return getattr(self.config, key, default)

    def set(self, key: str, value: Any) -> None:
        if key not in _FIELD_TYPES:
            raise ConfigError(f"Unknown configuration key {key!r}")
        self.config = replace(self.config, **{key: value})
        self.config.validate()

def load_config(config_path: Optional[str] = None,
                overrides: Optional[Mapping[str, Any]] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    return Config(config_path, overrides=overrides, environ=environ).config
