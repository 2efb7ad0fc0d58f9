# tests/unit/test_charts.py

import math

import pytest

from advdenoise.reporting.charts import (
    ADVERSARIAL_CHART, PSNR_CHART, render_report, select_records, tick_spacing,
)
from advdenoise.training.trainer import MetricsRecord, MetricsWriter
from advdenoise.utils.errors import ReportError

def records_for(phase, count, interval=10):
    return [
        MetricsRecord(
            iter=i * interval, phase=phase, l_deno=0.01 / (i + 1), l_adv=0.7 - 0.01 * i,
            weight=(1 + 0.99 * i * interval) / (count * interval), total_loss=0.02,
            disc_accuracy=math.nan if phase < 3 else 0.9,
            psnr_s10=30.0 + 0.1 * i, psnr_s15=28.0 + 0.1 * i,
            psnr_s20=26.5 + 0.1 * i, psnr_s25=25.0 + 0.1 * i,
        )
        for i in range(count)
    ]

@pytest.fixture
def metrics_csv(tmp_path):
    path = str(tmp_path / "metrics.csv")
    MetricsWriter(path, "seed=0", "feedface").write_all(records_for(2, 5) + records_for(3, 8))
    return path

class TestSelectRecords:
    def test_prefers_adversarial_phase(self):
        """Test phase 3 rows are plotted when present"""
        selected = select_records(records_for(1, 3) + records_for(3, 2))
        assert {r.phase for r in selected} == {3}

    def test_falls_back_to_last_phase(self):
        """Test the last logged phase is used without phase 3"""
        selected = select_records(records_for(1, 3) + records_for(2, 4))
        assert [r.phase for r in selected] == [2] * 4

class TestTickSpacing:
    @pytest.mark.parametrize("iterations,expected", [
        (list(range(0, 50, 10)), 10),
        (list(range(0, 1000, 10)), 100),
        (list(range(0, 2000, 10)), 200),
        (list(range(0, 30, 5)), 5),
        ([0], 10),
    ])
    def test_multiple_of_interval(self, iterations, expected):
        """Test ticks stay on logged iterations and never exceed ten"""
        assert tick_spacing(iterations) == expected

class TestRenderReport:
    def test_writes_both_charts(self, metrics_csv, tmp_path):
        """Test both SVGs carry their series ids and the config hash"""
        out = tmp_path / "report"
        psnr_path, adv_path = render_report(metrics_csv, str(out))
        psnr_svg = (out / PSNR_CHART).read_text()
        adv_svg = (out / ADVERSARIAL_CHART).read_text()
        for sigma in (10, 15, 20, 25):
            assert f'id="psnr-sigma-{sigma}"' in psnr_svg
        assert 'id="adversarial-loss"' in adv_svg
        assert "config_hash=feedface" in psnr_svg
        assert psnr_path.endswith(PSNR_CHART) and adv_path.endswith(ADVERSARIAL_CHART)

    def test_output_is_reproducible(self, metrics_csv, tmp_path):
        """Test rendering the same CSV twice gives identical files"""
        render_report(metrics_csv, str(tmp_path / "a"))
        render_report(metrics_csv, str(tmp_path / "b"))
        for name in (PSNR_CHART, ADVERSARIAL_CHART):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_invalid_csv_writes_nothing(self, tmp_path):
        """Test a malformed CSV fails before any chart is written"""
        bad = tmp_path / "bad.csv"
        bad.write_text("iter,phase\n0,1\n")
        out = tmp_path / "report"
        with pytest.raises(ReportError):
            render_report(str(bad), str(out))
        assert not out.exists()

    def test_unwritable_directory(self, metrics_csv, tmp_path):
        """Test a report directory that is a regular file raises a report error"""
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        with pytest.raises(ReportError):
            render_report(metrics_csv, str(blocker))
