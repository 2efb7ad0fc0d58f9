# advdenoise/reporting/charts.py

import logging
import math
import os
from typing import List, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.ticker import MultipleLocator

from advdenoise.training.noise import TEST_SIGMAS
from advdenoise.training.trainer import PSNR_COLUMNS, MetricsRecord, read_metrics, read_metrics_header
from advdenoise.utils.errors import ReportError

logger = logging.getLogger(__name__)

PSNR_CHART = "validation_psnr.svg"
ADVERSARIAL_CHART = "adversarial_loss.svg"
MAX_TICKS = 10

plt.rcParams.update({
    "svg.fonttype": "none",
    "svg.hashsalt": "advdenoise",
})

def select_records(records: Sequence[MetricsRecord]) -> List[MetricsRecord]:
    """Records of the adversarial phase when present, else of the last phase logged."""
    phase = 3 if any(r.phase == 3 for r in records) else records[-1].phase
    return [r for r in records if r.phase == phase]

def tick_spacing(iterations: Sequence[int]) -> int:
    """A multiple of the logging interval giving at most ``MAX_TICKS`` ticks."""
    steps = sorted({b - a for a, b in zip(iterations, iterations[1:]) if b > a})
    interval = steps[0] if steps else 10
    span = max(iterations) - min(iterations) if iterations else 0
    return interval * max(1, math.ceil(span / (interval * MAX_TICKS)))

def _save(fig, path: str, config_hash: str) -> None:
    try:
        fig.savefig(path, format="svg", metadata={
            "Date": None,
            "Description": f"config_hash={config_hash}",
        })
    except OSError as e:
        raise ReportError(f"Cannot write chart {path}: {e}")
    finally:
        plt.close(fig)

def _axes(title: str, ylabel: str, iterations: Sequence[int]):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.set_title(title)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.xaxis.set_major_locator(MultipleLocator(tick_spacing(iterations)))
    ax.grid(True, alpha=0.3)
    return fig, ax

def plot_validation_psnr(records: Sequence[MetricsRecord], path: str, config_hash: str = "") -> None:
    iterations = [r.iter for r in records]
    fig, ax = _axes("Validation PSNR", "PSNR (dB)", iterations)
    for sigma in TEST_SIGMAS:
        values = [getattr(r, PSNR_COLUMNS[sigma]) for r in records]
        (line,) = ax.plot(iterations, values, marker=".", label=f"sigma = {sigma}")
        line.set_gid(f"psnr-sigma-{sigma}")
    ax.legend()
    _save(fig, path, config_hash)

def plot_adversarial_loss(records: Sequence[MetricsRecord], path: str, config_hash: str = "") -> None:
    iterations = [r.iter for r in records]
    fig, ax = _axes("Adversarial loss", "l_adv", iterations)
    (line,) = ax.plot(iterations, [r.l_adv for r in records], color="tab:red")
    line.set_gid("adversarial-loss")
    _save(fig, path, config_hash)

def render_report(metrics_csv: str, out_dir: str) -> Tuple[str, str]:
    """Draws both charts from a metrics CSV; nothing is written if the CSV is invalid."""
    records = read_metrics(metrics_csv)
    config_hash = read_metrics_header(metrics_csv).get("config_hash", "")
    selected = select_records(records)

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ReportError(f"Cannot create report directory {out_dir}: {e}")
    psnr_path = os.path.join(out_dir, PSNR_CHART)
    adv_path = os.path.join(out_dir, ADVERSARIAL_CHART)
    plot_validation_psnr(selected, psnr_path, config_hash)
    plot_adversarial_loss(selected, adv_path, config_hash)

    logger.info(
        "Rendered report",
        extra={'advdenoise_records': len(selected), 'advdenoise_out_dir': out_dir}
    )
    return psnr_path, adv_path
