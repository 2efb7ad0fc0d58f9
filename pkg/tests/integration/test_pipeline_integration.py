import dataclasses
import math

import numpy as np
import pytest

from advdenoise.core.tensor import no_grad
from advdenoise.data.datasets import synthetic_textures
from advdenoise.data.metrics import evaluate_images, mean_psnr
from advdenoise.models.denoiser import SkipMode
from advdenoise.reporting.charts import render_report
from advdenoise.storage.checkpoints import load_checkpoint
from advdenoise.training.pipeline import TrainingPipeline
from advdenoise.training.trainer import read_metrics
from advdenoise.utils.config import RunConfig

# Mark all tests in this file as integration tests
pytestmark = pytest.mark.integration

def rows_of(path):
    return [r.to_row() for r in read_metrics(path)]

class TestDeskScaleRun:
    def test_three_phases_end_to_end(self, tiny_run_config, tmp_path):
        """Test a full run produces checkpoints, metrics and a report"""
        pipeline = TrainingPipeline(tiny_run_config)
        records = pipeline.run([1, 2, 3])

        assert [(r.phase, r.iter) for r in records] == [(1, 0), (1, 10), (2, 0), (2, 10), (3, 0)]
        for name in ("phase1", "phase2", "phase3", "discriminator"):
            assert pipeline.store.exists(name)
        assert all(math.isfinite(r.psnr_s25) for r in records)
        assert math.isfinite(records[-1].disc_accuracy)

        model = load_checkpoint(pipeline.store.path_for("phase3"))
        assert model.skip_mode is SkipMode.GATED
        image = synthetic_textures(1, size=24, seed=99)[0]
        with no_grad():
            assert model(image.pixels).shape == (1, 24, 24)

        charts = render_report(pipeline.metrics_path, str(tmp_path / "report"))
        assert all(path.endswith(".svg") for path in charts)

    def test_same_seed_same_artifacts(self, tiny_run_config, tmp_path):
        """Test two runs with one seed agree bit for bit"""
        first = TrainingPipeline(tiny_run_config)
        first.run([1, 2, 3])
        second = TrainingPipeline(dataclasses.replace(tiny_run_config, out_dir=str(tmp_path / "again")))
        second.run([1, 2, 3])

        assert rows_of(first.metrics_path) == rows_of(second.metrics_path)
        for name in ("phase1", "phase2", "phase3"):
            assert first.store.path_for(name).read_bytes() == second.store.path_for(name).read_bytes()

    def test_phase_by_phase_equals_single_run(self, tiny_run_config, tmp_path):
        """Test resuming at phase boundaries reproduces an uninterrupted run"""
        whole = TrainingPipeline(tiny_run_config)
        whole.run([1, 2, 3])

        split_config = dataclasses.replace(tiny_run_config, out_dir=str(tmp_path / "split"))
        for phase in (1, 2, 3):
            TrainingPipeline(split_config).run([phase])
        split = TrainingPipeline(split_config)

        assert rows_of(whole.metrics_path) == rows_of(split.metrics_path)
        np.testing.assert_array_equal(
            load_checkpoint(whole.store.path_for("phase3")).reconstruction.layer7.weight.data,
            load_checkpoint(split.store.path_for("phase3")).reconstruction.layer7.weight.data,
        )

class TestLearningSignal:
    def test_phases_one_and_two_beat_the_noisy_input(self, tmp_path):
        """Test the bundled textures train to a clear PSNR gain on held-out patches"""
        config = RunConfig(
            phase1_iterations=300,
            phase2_iterations=700,
            patch_size=32,
            log_interval=100,
            checkpoint_every=0,
            out_dir=str(tmp_path / "signal"),
        )
        pipeline = TrainingPipeline(config)
        pipeline.run([1, 2])
        _, validation = pipeline.load_data()

        model = load_checkpoint(pipeline.store.path_for("phase2"))
        rows = evaluate_images(model, validation, (10, 25), seed=11)
        noisy = mean_psnr(rows, (10, 25), "psnr_noisy")
        denoised = mean_psnr(rows, (10, 25))

        assert len(validation) == 7
        assert denoised[25] - noisy[25] >= 1.0
        assert denoised[10] - noisy[10] >= 0.5
