# advdenoise/training/trainer.py
"""Phase steps and the phase driver.

Phase 1 reconstructs clean patches with the gating block short-circuited,
phase 2 learns to remove noise with the feature layer frozen, and phase 3
adds the damped adversarial term, updating the discriminator twice for
every denoiser update.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, fields
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from advdenoise.core.optim import Adam
from advdenoise.core.tensor import Tensor, bce_loss, clamp, mse_loss, no_grad
from advdenoise.data.images import ImagePatch
from advdenoise.data.metrics import evaluate_validation
from advdenoise.models.denoiser import PARAMETER_GROUPS, DenoiserModel, SkipMode, lp_penalty, set_trainable
from advdenoise.models.discriminator import (
    CLEAN, DENOISED, AccuracyMeter, Discriminator, discriminator_step,
)
from advdenoise.training.noise import TEST_SIGMAS, NoiseSpec
from advdenoise.training.schedule import LossSchedule, Phase, PhasePlan, adversarial_weight
from advdenoise.utils.errors import (
    ConfigError, NonFiniteLossError, ReportError, StorageError, ValidationError,
)
from advdenoise.utils.logging import LogContext

logger = logging.getLogger(__name__)

ACCURACY_FLOOR = 0.95

@dataclass(frozen=True)
class MetricsRecord:
    iter: int
    phase: int
    l_deno: float
    l_adv: float
    weight: float
    total_loss: float
    disc_accuracy: float
    psnr_s10: float = math.nan
    psnr_s15: float = math.nan
    psnr_s20: float = math.nan
    psnr_s25: float = math.nan

    def to_row(self) -> List[str]:
        return [_format_number(getattr(self, name)) for name in CSV_COLUMNS]

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "MetricsRecord":
        values = {}
        for f in fields(cls):
            raw = row[f.name]
            values[f.name] = int(raw) if f.type in (int, "int") else float(raw)
        return cls(**values)

CSV_COLUMNS = tuple(f.name for f in fields(MetricsRecord))
PSNR_COLUMNS = {sigma: f"psnr_s{sigma}" for sigma in TEST_SIGMAS}

def _format_number(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))

@dataclass(frozen=True)
class LossTerms:
    """Loss values of one denoiser update.

    ``total`` is the damped loss l_deno + weight * l_adv; ``objective`` is
    what was actually minimised, which also includes lambda * lp.
    """
    l_deno: float
    l_adv: float
    l_lp: float
    weight: float
    total: float
    objective: float

@dataclass(frozen=True)
class DenoiserObjective:
    lambda_lp: float = 0.0
    lp_p: float = 0.1
    lp_eps: float = 1e-6
    weight: float = 0.0
    generator_loss: str = "non_saturating"

    @classmethod
    def from_plan(cls, plan: PhasePlan, weight: float = 0.0) -> "DenoiserObjective":
        return cls(
            lambda_lp=plan.lambda_lp if plan.uses_lp else 0.0,
            lp_p=plan.lp_p,
            lp_eps=plan.lp_eps,
            weight=weight,
            generator_loss=plan.generator_loss,
        )

class BatchSampler:
    """Draws mini-batches of clean patches uniformly without replacement
    inside each pass over the dataset."""

    def __init__(self, patches: np.ndarray, batch_size: int, rng: np.random.Generator):
        if patches.shape[0] == 0:
            raise ValidationError("Cannot sample batches from an empty dataset")
        self.patches = patches
        self.batch_size = min(batch_size, patches.shape[0])
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)

    def next(self) -> np.ndarray:
        if self._order.size < self.batch_size:
            self._order = np.concatenate([self._order, self.rng.permutation(self.patches.shape[0])])
        chosen, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return self.patches[chosen]

def _check_batch(batch) -> np.ndarray:
    batch = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ValidationError(f"Expected a non-empty N x 1 x H x W batch, got shape {batch.shape}")
    return batch

def _check_finite(phase: Phase, iteration: int, **losses: float) -> None:
    if not all(math.isfinite(v) for v in losses.values()):
        logger.error(
            "Non-finite loss",
            extra={'advdenoise_iteration': iteration, 'advdenoise_losses': losses}
        )
        raise NonFiniteLossError(phase.value, iteration, losses)

def phase1_step(model: DenoiserModel, clean_batch, opt: Adam,
                rng: np.random.Generator, iteration: int = 0) -> float:
    """One reconstruction step: mse(forward(x), x) with dropout active."""
    clean = _check_batch(clean_batch)
    if model.skip_mode is not SkipMode.SHORT_CIRCUIT or not model.dropout_after_features:
        raise ValidationError("phase 1 needs a short-circuited model with dropout")
    opt.zero_grad()
    loss = mse_loss(model.forward(Tensor(clean), training=True, rng=rng), clean)
    _check_finite(Phase.CLEAN_TO_CLEAN, iteration, l_deno=loss.item())
    loss.backward()
    opt.step()
    return loss.item()

def denoiser_update(
    model: DenoiserModel,
    clean_batch,
    noisy_batch,
    opt: Adam,
    objective: DenoiserObjective,
    disc: Optional[Discriminator] = None,
    phase: Phase = Phase.NOISY_TO_CLEAN,
    iteration: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> LossTerms:
    """One denoiser step on mse + lambda*lp (+ weight * generator term).

    The generator term is evaluated on the output clamped to [0, 1]. In
    ``non_saturating`` form it is -log D(G(x)); in ``saturating`` form
    log(1 - D(G(x))). Gradients reaching the discriminator are discarded.
    """
    clean = _check_batch(clean_batch)
    noisy = _check_batch(noisy_batch)
    opt.zero_grad()

    output = model.forward(Tensor(noisy), training=rng is not None, rng=rng)
    l_deno = mse_loss(output, clean)
    loss = l_deno
    l_lp = None
    if objective.lambda_lp:
        l_lp = lp_penalty(model, objective.lp_p, objective.lp_eps)
        loss = loss + l_lp * objective.lambda_lp
    l_adv = None
    if disc is not None:
        probs = disc.forward(clamp(output, 0.0, 1.0))
        if objective.generator_loss == "saturating":
            l_adv = -bce_loss(probs, DENOISED)
        else:
            l_adv = bce_loss(probs, CLEAN)
        loss = loss + l_adv * objective.weight

    deno_value = l_deno.item()
    adv_value = l_adv.item() if l_adv is not None else 0.0
    lp_value = l_lp.item() if l_lp is not None else 0.0
    _check_finite(phase, iteration, l_deno=deno_value, l_adv=adv_value, l_lp=lp_value)

    loss.backward()
    opt.step()
    if disc is not None:
        disc.zero_grad()

    weight = objective.weight if disc is not None else 0.0
    return LossTerms(
        l_deno=deno_value,
        l_adv=adv_value,
        l_lp=lp_value,
        weight=weight,
        total=deno_value + weight * adv_value,
        objective=loss.item(),
    )

def phase2_step(model: DenoiserModel, clean_batch, noise_spec: NoiseSpec, opt: Adam,
                lambda_lp: float, rng: np.random.Generator, lp_p: float = 0.1,
                lp_eps: float = 1e-6, iteration: int = 0) -> float:
    """One denoising step on mse(forward(noisy), clean) + lambda * lp."""
    clean = _check_batch(clean_batch)
    if model.skip_mode is not SkipMode.GATED or model.dropout_after_features:
        raise ValidationError("phase 2 needs a gated model without dropout")
    noisy = noise_spec.corrupt(clean, rng)
    objective = DenoiserObjective(lambda_lp=lambda_lp, lp_p=lp_p, lp_eps=lp_eps)
    terms = denoiser_update(model, clean, noisy, opt, objective,
                            phase=Phase.NOISY_TO_CLEAN, iteration=iteration)
    return terms.objective

@dataclass
class Phase3Optimizers:
    denoiser: Adam
    discriminator: Adam

def _denoise_for_discriminator(model: DenoiserModel, noisy: np.ndarray) -> np.ndarray:
    with no_grad():
        return clamp(model(Tensor(noisy)), 0.0, 1.0).data

def phase3_iteration(
    model: DenoiserModel,
    disc: Discriminator,
    clean_batch,
    noise_spec: NoiseSpec,
    sched: LossSchedule,
    opts: Phase3Optimizers,
    rng: np.random.Generator,
    second_batch=None,
    objective: Optional[DenoiserObjective] = None,
    meter: Optional[AccuracyMeter] = None,
) -> Tuple[LossTerms, float]:
    """One adversarial iteration: two discriminator updates, one denoiser update.

    The first discriminator update sees ``clean_batch`` against the
    denoised ``x_hat``; the second sees ``second_batch`` (an independently
    drawn batch) against its own denoised copy. The denoiser is then
    updated on ``x_hat``.
    """
    clean = _check_batch(clean_batch)
    objective = objective or DenoiserObjective()
    meter = meter if meter is not None else AccuracyMeter()
    weight = adversarial_weight(sched)

    noisy = noise_spec.corrupt(clean, rng)
    discriminator_step(disc, opts.discriminator, clean, _denoise_for_discriminator(model, noisy), meter)

    second = clean if second_batch is None else _check_batch(second_batch)
    second_noisy = noise_spec.corrupt(second, rng)
    discriminator_step(disc, opts.discriminator, second,
                       _denoise_for_discriminator(model, second_noisy), meter)

    terms = denoiser_update(
        model, clean, noisy, opts.denoiser,
        DenoiserObjective(objective.lambda_lp, objective.lp_p, objective.lp_eps, weight,
                          objective.generator_loss),
        disc=disc, phase=Phase.ADVERSARIAL, iteration=sched.t,
    )
    return terms, meter.accuracy

def configure_model(plan: PhasePlan, model: DenoiserModel,
                    disc: Optional[Discriminator] = None) -> None:
    """Applies the plan's skip mode, dropout and parameter freezes."""
    model.skip_mode = plan.skip_mode
    model.dropout_after_features = plan.dropout
    set_trainable(model, PARAMETER_GROUPS, True)
    set_trainable(model, plan.frozen_groups, False)
    if disc is not None:
        set_trainable(disc, ["head"], True)
        set_trainable(disc, ["features"], plan.disc_train_features)

def run_phase(
    plan: PhasePlan,
    model: DenoiserModel,
    dataset: np.ndarray,
    disc: Optional[Discriminator] = None,
    validation: Optional[Sequence[ImagePatch]] = None,
    on_checkpoint: Optional[Callable[[int], None]] = None,
    disc_optimizer: Optional[Adam] = None,
    threads: int = 1,
) -> Iterator[MetricsRecord]:
    """Runs ``plan.iterations`` steps, yielding one record per logging interval.

    Records are emitted at iterations 0, log_interval, 2*log_interval, ...
    When ``validation`` is given each record carries the mean validation
    PSNR per test sigma. ``on_checkpoint(k)`` fires after every
    ``plan.checkpoint_every`` completed iterations.
    """
    plan.validate()
    if plan.is_adversarial and disc is None:
        raise ConfigError(f"{plan.phase.value} phase needs a discriminator")
    dataset = _check_batch(dataset)

    configure_model(plan, model, disc)
    rng = np.random.default_rng(plan.seed)
    sampler = BatchSampler(dataset, plan.batch_size, rng)
    opt = Adam(model.named_parameters(), lr=plan.learning_rate)
    objective = DenoiserObjective.from_plan(plan)
    if plan.is_adversarial:
        opts = Phase3Optimizers(
            opt, disc_optimizer or Adam(disc.named_parameters(), lr=plan.lr_discriminator)
        )
        meter = AccuracyMeter(plan.accuracy_window)

    with LogContext(logger, phase=plan.phase.value):
        logger.info(
            "Starting phase",
            extra={'advdenoise_iterations': plan.iterations, 'advdenoise_batch_size': plan.batch_size}
        )
        for t in range(plan.iterations):
            accuracy = math.nan
            if plan.phase is Phase.CLEAN_TO_CLEAN:
                l_deno = phase1_step(model, sampler.next(), opt, rng, iteration=t)
                terms = LossTerms(l_deno, 0.0, 0.0, 0.0, l_deno, l_deno)
            elif plan.phase is Phase.NOISY_TO_CLEAN:
                clean = sampler.next()
                terms = denoiser_update(
                    model, clean, plan.noise.corrupt(clean, rng), opt, objective,
                    phase=plan.phase, iteration=t,
                )
            else:
                clean, second = sampler.next(), sampler.next()
                terms, accuracy = phase3_iteration(
                    model, disc, clean, plan.noise, plan.schedule(t), opts, rng,
                    second_batch=second, objective=objective, meter=meter,
                )

            if t % plan.log_interval == 0:
                record = _record(plan, t, terms, accuracy, model, validation, threads)
                logger.info(
                    "Training progress",
                    extra={
                        'advdenoise_iteration': t,
                        'advdenoise_l_deno': terms.l_deno,
                        'advdenoise_l_adv': terms.l_adv,
                        'advdenoise_weight': terms.weight,
                        'advdenoise_disc_accuracy': accuracy,
                    }
                )
                if plan.is_adversarial and accuracy < ACCURACY_FLOOR:
                    logger.warning(
                        "Discriminator accuracy below target",
                        extra={'advdenoise_iteration': t, 'advdenoise_disc_accuracy': accuracy}
                    )
                yield record

            if on_checkpoint and plan.checkpoint_every and (t + 1) % plan.checkpoint_every == 0:
                on_checkpoint(t + 1)

        logger.info("Finished phase", extra={'advdenoise_iterations': plan.iterations})

def _record(plan: PhasePlan, t: int, terms: LossTerms, accuracy: float,
            model: DenoiserModel, validation, threads: int) -> MetricsRecord:
    psnr_values: Dict[str, float] = {}
    if validation:
        means = evaluate_validation(model, validation, TEST_SIGMAS, seed=plan.noise.seed, threads=threads)
        psnr_values = {PSNR_COLUMNS[sigma]: value for sigma, value in means.items()}
    return MetricsRecord(
        iter=t,
        phase=plan.phase.number,
        l_deno=terms.l_deno,
        l_adv=terms.l_adv,
        weight=terms.weight,
        total_loss=terms.total,
        disc_accuracy=accuracy,
        **psnr_values,
    )

class MetricsWriter:
    """Appends metrics records to a CSV file.

    The file opens with ``# key=value`` comment lines carrying the run
    configuration and its hash, followed by the column header.
    """

    def __init__(self, path: str, config_text: str = "", config_hash: str = "", append: bool = False):
        self.path = path
        if append:
            return
        directory = os.path.dirname(path)
        try:
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(path, "w", newline="") as f:
                if config_hash:
                    f.write(f"# config_hash={config_hash}\n")
                for line in config_text.splitlines():
                    f.write(f"# {line}\n")
                csv.writer(f).writerow(CSV_COLUMNS)
        except OSError as e:
            raise StorageError(f"Cannot create metrics file {path}: {e}")

    def write(self, record: MetricsRecord) -> None:
        try:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow(record.to_row())
        except OSError as e:
            raise StorageError(f"Cannot append to metrics file {self.path}: {e}")

    def write_all(self, records) -> List[MetricsRecord]:
        written = []
        for record in records:
            self.write(record)
            written.append(record)
        return written

def read_metrics_header(path: str) -> Dict[str, str]:
    """The ``# key=value`` provenance lines of a metrics CSV."""
    header = {}
    try:
        with open(path, newline="") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition("=")
                header[key] = value
    except OSError as e:
        raise ReportError(f"Cannot read metrics file {path}: {e}")
    return header

def read_metrics(path: str) -> List[MetricsRecord]:
    """Parses a metrics CSV; malformed rows are reported with their line number."""
    try:
        with open(path, newline="") as f:
            lines = f.readlines()
    except OSError as e:
        raise ReportError(f"Cannot read metrics file {path}: {e}")

    body_start = 0
    while body_start < len(lines) and lines[body_start].startswith("#"):
        body_start += 1
    if body_start >= len(lines):
        raise ReportError(f"{path}: no column header")

    reader = csv.reader(lines[body_start:])
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ReportError(f"{path}:{body_start + 1}: unexpected columns {header}")

    records = []
    for offset, row in enumerate(reader, start=body_start + 2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise ReportError(f"{path}:{offset}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            records.append(MetricsRecord.from_row(dict(zip(CSV_COLUMNS, row))))
        except ValueError as e:
            raise ReportError(f"{path}:{offset}: {e}")
    if not records:
        raise ReportError(f"{path}: no metrics rows")
    return records
