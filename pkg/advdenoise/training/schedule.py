# advdenoise/training/schedule.py
"""Phase plans and the damped adversarial loss schedule."""

from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, Optional

from advdenoise.models.denoiser import PARAMETER_GROUPS, SkipMode
from advdenoise.training.noise import NoiseSpec
from advdenoise.utils.config import GENERATOR_LOSSES, RunConfig
from advdenoise.utils.errors import ConfigError, ValidationError

class Phase(str, Enum):
    CLEAN_TO_CLEAN = "clean_to_clean"
    NOISY_TO_CLEAN = "noisy_to_clean"
    ADVERSARIAL = "adversarial"

    @property
    def number(self) -> int:
        return _PHASE_NUMBERS[self]

    @classmethod
    def from_number(cls, number: int) -> "Phase":
        for phase, n in _PHASE_NUMBERS.items():
            if n == number:
                return phase
        raise ValidationError(f"Unknown phase number {number}; expected 1, 2 or 3")

_PHASE_NUMBERS = {
    Phase.CLEAN_TO_CLEAN: 1,
    Phase.NOISY_TO_CLEAN: 2,
    Phase.ADVERSARIAL: 3,
}

class LossTerm(str, Enum):
    MSE = "mse"
    LP = "lp"
    ADVERSARIAL = "adversarial"

@dataclass(frozen=True)
class LossSchedule:
    """Weight of the adversarial term at iteration ``t`` of ``T``."""
    s: float = 0.99
    T: int = 1
    t: int = 0

    def validate(self) -> None:
        if self.T <= 0:
            raise ValidationError(f"Schedule length T must be positive, got {self.T}")
        if not 0 <= self.t <= self.T:
            raise ValidationError(f"Schedule position t={self.t} outside [0, {self.T}]")

    def at(self, t: int) -> "LossSchedule":
        return LossSchedule(self.s, self.T, t)

def adversarial_weight(sched: LossSchedule) -> float:
    """(1 + s*t) / T."""
    sched.validate()
    return (1.0 + sched.s * sched.t) / sched.T

@dataclass(frozen=True)
class PhasePlan:
    phase: Phase
    iterations: int
    batch_size: int
    skip_mode: SkipMode
    dropout: Optional[float]
    frozen_groups: FrozenSet[str]
    loss_terms: FrozenSet[LossTerm]
    seed: int = 0
    learning_rate: float = 1e-3
    lambda_lp: float = 1e-4
    lp_p: float = 0.1
    lp_eps: float = 1e-6
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    damping: float = 0.99
    generator_loss: str = "non_saturating"
    lr_discriminator: float = 1e-6
    disc_train_features: bool = True
    accuracy_window: int = 64
    log_interval: int = 10
    checkpoint_every: int = 0

    def validate(self) -> None:
        """Rejects plans whose settings contradict their phase."""
        if self.iterations <= 0 or self.batch_size <= 0:
            raise ConfigError(f"{self.phase.value}: iterations and batch_size must be positive")
        unknown = set(self.frozen_groups) - set(PARAMETER_GROUPS)
        if unknown:
            raise ConfigError(f"{self.phase.value}: unknown parameter groups {sorted(unknown)}")
        if self.generator_loss not in GENERATOR_LOSSES:
            raise ConfigError(f"Unknown generator loss {self.generator_loss!r}")
        if self.log_interval <= 0:
            raise ConfigError("log_interval must be positive")

        if self.phase is Phase.CLEAN_TO_CLEAN:
            if self.skip_mode is not SkipMode.SHORT_CIRCUIT:
                raise ConfigError("clean_to_clean runs with the gating block short-circuited")
            if not self.dropout:
                raise ConfigError("clean_to_clean needs dropout after the feature layer")
            if self.loss_terms != {LossTerm.MSE}:
                raise ConfigError(
                    f"clean_to_clean trains on mse only, got {sorted(t.value for t in self.loss_terms)}"
                )
        elif self.phase is Phase.NOISY_TO_CLEAN:
            if self.skip_mode is not SkipMode.GATED:
                raise ConfigError("noisy_to_clean runs with the gating block active")
            if self.dropout:
                raise ConfigError("noisy_to_clean runs without dropout")
            if "features" not in self.frozen_groups:
                raise ConfigError("noisy_to_clean keeps the feature layer frozen")
            if self.loss_terms != {LossTerm.MSE, LossTerm.LP}:
                raise ConfigError("noisy_to_clean trains on mse plus the lp penalty")
        else:
            if self.skip_mode is not SkipMode.GATED:
                raise ConfigError("adversarial runs with the gating block active")
            if self.dropout:
                raise ConfigError("adversarial runs without dropout")
            if not {LossTerm.MSE, LossTerm.ADVERSARIAL} <= self.loss_terms:
                raise ConfigError("adversarial trains on mse plus the scheduled adversarial term")

    def schedule(self, t: int) -> LossSchedule:
        return LossSchedule(self.damping, self.iterations, t)

    @property
    def uses_lp(self) -> bool:
        return LossTerm.LP in self.loss_terms

    @property
    def is_adversarial(self) -> bool:
        return LossTerm.ADVERSARIAL in self.loss_terms

    @classmethod
    def for_phase(cls, phase: Phase, config: RunConfig) -> "PhasePlan":
        """Builds the plan for ``phase`` from a run configuration."""
        phase = Phase(phase)
        noise = NoiseSpec((config.sigma_lo, config.sigma_hi), config.seed)
        common = dict(
            batch_size=config.batch_size,
            seed=config.seed + phase.number,
            lambda_lp=config.lambda_lp,
            lp_p=config.lp_p,
            lp_eps=config.lp_eps,
            noise=noise,
            damping=config.damping,
            generator_loss=config.generator_loss,
            lr_discriminator=config.lr_discriminator,
            disc_train_features=config.disc_train_features,
            accuracy_window=config.accuracy_window,
            log_interval=config.log_interval,
            checkpoint_every=config.checkpoint_every,
        )
        if phase is Phase.CLEAN_TO_CLEAN:
            plan = cls(
                phase=phase,
                iterations=config.phase1_iterations,
                skip_mode=SkipMode.SHORT_CIRCUIT,
                dropout=config.dropout,
                frozen_groups=frozenset({"gating"}),
                loss_terms=frozenset({LossTerm.MSE}),
                learning_rate=config.lr_pretrain,
                **common,
            )
        elif phase is Phase.NOISY_TO_CLEAN:
            plan = cls(
                phase=phase,
                iterations=config.phase2_iterations,
                skip_mode=SkipMode.GATED,
                dropout=None,
                frozen_groups=frozenset({"features"}),
                loss_terms=frozenset({LossTerm.MSE, LossTerm.LP}),
                learning_rate=config.lr_pretrain,
                **common,
            )
        else:
            terms = {LossTerm.MSE, LossTerm.ADVERSARIAL}
            if config.lp_in_phase3:
                terms.add(LossTerm.LP)
            plan = cls(
                phase=phase,
                iterations=config.phase3_iterations,
                skip_mode=SkipMode.GATED,
                dropout=None,
                frozen_groups=frozenset({"features"}) if config.freeze_features_in_phase3 else frozenset(),
                loss_terms=frozenset(terms),
                learning_rate=config.lr_denoiser,
                **common,
            )
        plan.validate()
        return plan
