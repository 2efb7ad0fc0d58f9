# tests/unit/test_cli.py

import csv
import logging

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from advdenoise.cli.commands import cli, parse_overrides
from advdenoise.models.denoiser import build_denoiser
from advdenoise.storage.checkpoints import save_checkpoint
from advdenoise.training.trainer import MetricsRecord, MetricsWriter
from advdenoise.utils.errors import ConfigError

@pytest.fixture
def runner():
    yield CliRunner()
    logging.getLogger('advdenoise').handlers = []

@pytest.fixture
def checkpoint(tmp_path, tiny_config):
    path = str(tmp_path / "phase2.advd")
    save_checkpoint(build_denoiser(tiny_config, seed=1), path)
    return path

def write_image(path, rng, shape=(10, 13)):
    Image.fromarray(rng.integers(0, 256, shape).astype(np.uint8)).save(path)
    return str(path)

class TestParseOverrides:
    def test_pairs(self):
        """Test KEY=VALUE pairs become a mapping"""
        assert parse_overrides(("seed=3", "branches=3:4,5:6")) == {"seed": "3", "branches": "3:4,5:6"}

    def test_malformed(self):
        """Test a pair without '=' is rejected"""
        with pytest.raises(ConfigError):
            parse_overrides(("seed",))

class TestTrain:
    def test_help_lists_defaults(self, runner):
        """Test the help text shows every configuration default"""
        result = runner.invoke(cli, ['train', '--help'])
        assert result.exit_code == 0
        assert "lr_denoiser=1e-05" in result.output
        assert "branches=3:32,5:40,7:48,9:56,11:64" in result.output

    def test_missing_predecessor_exits_4(self, runner, tmp_path):
        """Test phase 2 without a phase 1 checkpoint fails with exit code 4"""
        result = runner.invoke(cli, ['train', '--phase', '2', '--out', str(tmp_path / "run"),
                                     '--set', 'patch_size=16'])
        assert result.exit_code == 4
        assert "phase 1 checkpoint" in result.output

    def test_bad_setting_exits_3(self, runner, tmp_path):
        """Test an invalid configuration fails with exit code 3"""
        result = runner.invoke(cli, ['train', '--out', str(tmp_path), '--set', 'lp_p=2'])
        assert result.exit_code == 3

class TestDenoise:
    def test_output_keeps_input_size(self, runner, checkpoint, tmp_path, rng):
        """Test the denoised image has the input's dimensions"""
        source = write_image(tmp_path / "noisy.pgm", rng)
        out = str(tmp_path / "out" / "clean.pgm")
        result = runner.invoke(cli, ['denoise', '--checkpoint', checkpoint, '--input', source,
                                     '--out', out, '--reference', source])
        assert result.exit_code == 0, result.output
        with Image.open(out) as img:
            assert img.size == (13, 10)
            assert img.mode == "L"
        assert "PSNR denoised" in result.output

    def test_reference_size_mismatch(self, runner, checkpoint, tmp_path, rng):
        """Test a reference of another size is rejected"""
        source = write_image(tmp_path / "noisy.pgm", rng)
        reference = write_image(tmp_path / "ref.png", rng, shape=(8, 8))
        result = runner.invoke(cli, ['denoise', '--checkpoint', checkpoint, '--input', source,
                                     '--out', str(tmp_path / "o.pgm"), '--reference', reference])
        assert result.exit_code == 3

    def test_corrupt_checkpoint_exits_6(self, runner, tmp_path, rng):
        """Test an unreadable checkpoint fails with a storage exit code"""
        bogus = tmp_path / "bogus.advd"
        bogus.write_bytes(b"ADVD")
        result = runner.invoke(cli, ['denoise', '--checkpoint', str(bogus),
                                     '--input', write_image(tmp_path / "a.pgm", rng),
                                     '--out', str(tmp_path / "o.pgm")])
        assert result.exit_code == 6

    def test_unwritable_output_exits_6(self, runner, checkpoint, tmp_path, rng):
        """Test an output path below a regular file fails with a storage exit code"""
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        result = runner.invoke(cli, ['denoise', '--checkpoint', checkpoint,
                                     '--input', write_image(tmp_path / "a.pgm", rng),
                                     '--out', str(blocker / "out.pgm")])
        assert result.exit_code == 6
        assert "Cannot write image" in result.output

    def test_unwritable_eval_csv_exits_6(self, runner, checkpoint, tmp_path, rng):
        """Test eval reports an unwritable CSV path with exit code 6"""
        data = tmp_path / "data"
        data.mkdir()
        write_image(data / "a.png", rng, shape=(12, 12))
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        result = runner.invoke(cli, ['eval', '--checkpoint', checkpoint, '--data', str(data),
                                     '--out', str(blocker / "eval.csv")])
        assert result.exit_code == 6

class TestEval:
    def test_writes_one_row_per_image_and_sigma(self, runner, checkpoint, tmp_path, rng):
        """Test the evaluation CSV covers every image at every sigma"""
        data = tmp_path / "data"
        data.mkdir()
        for name in ("a.png", "b.pgm"):
            write_image(data / name, rng, shape=(12, 12))
        out = tmp_path / "eval.csv"
        result = runner.invoke(cli, ['eval', '--checkpoint', checkpoint, '--data', str(data),
                                     '--out', str(out), '--threads', '2'])
        assert result.exit_code == 0, result.output
        with open(out, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 8
        assert {r["sigma"] for r in rows} == {"10", "15", "20", "25"}

    def test_empty_directory_exits_6(self, runner, checkpoint, tmp_path):
        """Test an empty data directory is reported"""
        (tmp_path / "empty").mkdir()
        result = runner.invoke(cli, ['eval', '--checkpoint', checkpoint, '--data', str(tmp_path / "empty"),
                                     '--out', str(tmp_path / "e.csv")])
        assert result.exit_code == 6

class TestReport:
    def test_renders_charts(self, runner, tmp_path):
        """Test report writes both SVG files"""
        metrics = str(tmp_path / "metrics.csv")
        MetricsWriter(metrics, "seed=0", "abc").write_all(
            [MetricsRecord(i * 10, 3, 0.01, 0.69, 0.001, 0.0107, 0.5, 28.0, 26.0, 25.0, 24.0) for i in range(4)]
        )
        result = runner.invoke(cli, ['report', metrics, '--out', str(tmp_path / "report")])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "report" / "validation_psnr.svg").is_file()
        assert (tmp_path / "report" / "adversarial_loss.svg").is_file()

    def test_malformed_csv_exits_6(self, runner, tmp_path):
        """Test an unusable metrics file fails with a storage exit code"""
        bad = tmp_path / "metrics.csv"
        bad.write_text("nothing useful\n")
        result = runner.invoke(cli, ['report', str(bad), '--out', str(tmp_path / "report")])
        assert result.exit_code == 6
        assert not (tmp_path / "report").exists()
