# advdenoise/training/pipeline.py

import logging
import os
from typing import Iterable, List, Optional, Tuple

import numpy as np

from advdenoise.core.optim import Adam
from advdenoise.data.datasets import prepare_splits, stack_patches
from advdenoise.models.denoiser import DenoiserModel, LpRegularizer, MultiScaleConfig, build_denoiser
from advdenoise.models.discriminator import (
    AccuracyMeter, Discriminator, build_discriminator, pretrain_discriminator,
)
from advdenoise.storage.checkpoints import CheckpointStore, load_checkpoint
from advdenoise.training.noise import NoiseSpec
from advdenoise.training.schedule import Phase, PhasePlan
from advdenoise.training.trainer import (
    ACCURACY_FLOOR, MetricsRecord, MetricsWriter, read_metrics_header, run_phase,
)
from advdenoise.utils.config import RunConfig
from advdenoise.utils.errors import (
    ConfigMismatchError, NumericalError, PrerequisiteError, ValidationError,
)

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
DISCRIMINATOR_NAME = "discriminator"

def denoiser_config(config: RunConfig) -> MultiScaleConfig:
    return MultiScaleConfig(
        branches=config.branch_list(),
        feature_width=config.feature_width,
        recon_width=config.recon_width,
    )

def check_provenance(artifact_hash: Optional[str], config_hash: str, source: str) -> None:
    if artifact_hash != config_hash:
        raise ConfigMismatchError(
            f"{source} was produced with configuration {artifact_hash}, current run uses {config_hash}"
        )

class TrainingPipeline:
    """Runs training phases in order, writing checkpoints and metrics under
    ``config.out_dir``.

    Phase n > 1 starts from ``phase{n-1}.advd`` in the output directory or
    from an explicit resume checkpoint; either must carry the run's config
    hash.
    """

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.config_text = config.to_text(provenance_only=True)
        self.config_hash = config.config_hash
        self.store = CheckpointStore(config.out_dir)
        self.metrics_path = os.path.join(config.out_dir, METRICS_FILE)
        self._train: Optional[np.ndarray] = None
        self._validation = None

    def load_data(self) -> Tuple[np.ndarray, list]:
        if self._train is None:
            train, validation = prepare_splits(
                self.config.train_dir, self.config.validation_dir,
                self.config.patch_size, self.config.seed,
            )
            self._train = stack_patches(train)
            self._validation = validation
        return self._train, self._validation

    def _metadata(self, phase: int) -> dict:
        return {"config": self.config_text, "config_hash": self.config_hash, "phase": phase}

    def initial_model(self, phase: int, resume: Optional[str] = None) -> DenoiserModel:
        """A fresh model for phase 1, otherwise the predecessor checkpoint."""
        if phase == 1 and resume is None:
            regularizer = LpRegularizer(self.config.lambda_lp, self.config.lp_p, self.config.lp_eps)
            model = build_denoiser(denoiser_config(self.config), self.config.seed, regularizer)
            model.metadata = self._metadata(0)
            return model

        source = resume or str(self.store.path_for(f"phase{phase - 1}"))
        if not os.path.isfile(source):
            raise PrerequisiteError(
                f"Phase {phase} needs a phase {phase - 1} checkpoint; {source} does not exist "
                f"(run the previous phase first or pass --resume)"
            )
        model = load_checkpoint(source)
        check_provenance(model.metadata.get("config_hash"), self.config_hash, source)
        logger.info(
            "Resuming from checkpoint",
            extra={'advdenoise_path': source, 'advdenoise_checkpoint_phase': model.metadata.get("phase")}
        )
        return model

    def discriminator(self, model: DenoiserModel, train: np.ndarray) -> Discriminator:
        """Reuses a matching pretrained discriminator or pretrains a new one."""
        if self.store.exists(DISCRIMINATOR_NAME):
            d = self.store.retrieve_discriminator(DISCRIMINATOR_NAME)
            if d.metadata.get("config_hash") == self.config_hash:
                logger.info("Reusing pretrained discriminator")
                return d
            logger.warning("Ignoring discriminator checkpoint from another configuration")

        d = build_discriminator(seed=self.config.seed)
        meter = pretrain_discriminator(
            d, model, train,
            epochs=self.config.disc_pretrain_epochs,
            noise_spec=NoiseSpec((self.config.sigma_lo, self.config.sigma_hi), self.config.seed),
            optimizer=Adam(d.named_parameters(), lr=self.config.lr_disc_pretrain),
            rng=np.random.default_rng([self.config.seed, 4]),
            batch_size=self.config.batch_size,
            meter=AccuracyMeter(self.config.accuracy_window),
        )
        if meter.accuracy < ACCURACY_FLOOR:
            logger.warning(
                "Pretrained discriminator is below the target accuracy",
                extra={'advdenoise_accuracy': meter.accuracy}
            )
        d.metadata = dict(self._metadata(3), pretrain_accuracy=meter.accuracy)
        self.store.store(DISCRIMINATOR_NAME, d)
        return d

    def _writer(self, first_phase: int) -> MetricsWriter:
        if first_phase > 1 and os.path.isfile(self.metrics_path):
            if read_metrics_header(self.metrics_path).get("config_hash") == self.config_hash:
                return MetricsWriter(self.metrics_path, append=True)
        return MetricsWriter(self.metrics_path, self.config_text, self.config_hash)

    def run(self, phases: Iterable[int], resume: Optional[str] = None) -> List[MetricsRecord]:
        phases = sorted(set(phases))
        if not phases or any(p not in (1, 2, 3) for p in phases):
            raise ValidationError(f"Phases must be drawn from 1, 2, 3; got {phases}")
        if phases != list(range(phases[0], phases[-1] + 1)):
            raise ValidationError(f"Phases must be consecutive, got {phases}")

        train, validation = self.load_data()
        model = self.initial_model(phases[0], resume)
        writer = self._writer(phases[0])
        records: List[MetricsRecord] = []

        for number in phases:
            phase = Phase.from_number(number)
            plan = PhasePlan.for_phase(phase, self.config)

            def checkpoint(k: int, number=number) -> None:
                self.store.store(f"phase{number}_iter{k}", model)

            try:
                disc = self.discriminator(model, train) if plan.is_adversarial else None
                for record in run_phase(plan, model, train, disc=disc, validation=validation,
                                        on_checkpoint=checkpoint, threads=self.config.threads):
                    writer.write(record)
                    records.append(record)
            except NumericalError:
                path = self.store.store(f"phase{number}_abort", model)
                logger.error("Phase aborted", extra={'advdenoise_checkpoint': str(path)})
                raise

            model.metadata = self._metadata(number)
            self.store.store(f"phase{number}", model)
        return records
