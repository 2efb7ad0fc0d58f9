# advdenoise/cli/commands.py

import functools
import logging
import sys
from typing import Dict, Optional, Tuple

import click
import numpy as np

from advdenoise.core.tensor import no_grad
from advdenoise.data.datasets import load_images
from advdenoise.data.images import load_grayscale, save_pgm
from advdenoise.data.metrics import evaluate_images, mean_psnr, psnr, write_evaluation_csv
from advdenoise.reporting.charts import render_report
from advdenoise.storage.checkpoints import load_checkpoint
from advdenoise.training.noise import TEST_SIGMAS, add_gaussian_noise
from advdenoise.training.pipeline import TrainingPipeline
from advdenoise.utils.config import Config, RunConfig
from advdenoise.utils.errors import AdvDenoiseError, ConfigError, ShapeError
from advdenoise.utils.logging import setup_logging

logger = logging.getLogger(__name__)

PHASES = {'1': (1,), '2': (2,), '3': (3,), 'all': (1, 2, 3)}

def _defaults_epilog() -> str:
    lines = RunConfig().to_text().splitlines()
    return "\b\nConfiguration defaults (override with --config, ADVDENOISE_<KEY> or --set):\n" + \
        "\n".join(f"  {line}" for line in lines)

def handle_errors(func):
    """Reports library errors on stderr and exits with their exit code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except AdvDenoiseError as e:
            logger.error(str(e), extra={'advdenoise_error': type(e).__name__})
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper

def parse_overrides(pairs: Tuple[str, ...]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        overrides[key.strip()] = value
    return overrides

@click.group()
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']),
              default='WARNING', help='Logging verbosity')
@click.option('--log-dir', type=click.Path(file_okay=False), help='Directory for rotating log files')
def cli(log_level: str, log_dir: Optional[str]):
    """advdenoise - blind image denoising with adversarial training"""
    setup_logging(log_dir, getattr(logging, log_level))

@cli.command(epilog=_defaults_epilog())
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='key=value configuration file')
@click.option('--phase', type=click.Choice(list(PHASES)), default='all', help='Phase to run')
@click.option('--seed', type=int, help='Random seed')
@click.option('--resume', type=click.Path(dir_okay=False), help='Checkpoint to start from')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Output directory')
@click.option('--set', 'settings', multiple=True, metavar='KEY=VALUE', help='Override one configuration key')
@handle_errors
def train(config_path: Optional[str], phase: str, seed: Optional[int], resume: Optional[str],
          out_dir: Optional[str], settings: Tuple[str, ...]):
    """Trains the denoiser (phase 1, 2, 3 or all three in order)."""
    overrides: Dict[str, object] = dict(parse_overrides(settings))
    if seed is not None:
        overrides['seed'] = seed
    if out_dir is not None:
        overrides['out_dir'] = out_dir
    config = Config(config_path, overrides=overrides).config

    pipeline = TrainingPipeline(config)
    records = pipeline.run(PHASES[phase], resume=resume)

    click.echo(f"Config hash: {config.config_hash}")
    click.echo(f"Wrote {len(records)} metrics rows to {pipeline.metrics_path}")
    for number in PHASES[phase]:
        click.echo(f"Checkpoint: {pipeline.store.path_for(f'phase{number}')}")

@cli.command()
@click.option('--checkpoint', required=True, type=click.Path(dir_okay=False), help='Denoiser checkpoint')
@click.option('--input', 'input_path', required=True, type=click.Path(dir_okay=False), help='Noisy image (PGM/PNG)')
@click.option('--out', 'output_path', required=True, type=click.Path(dir_okay=False), help='Output PGM')
@click.option('--reference', type=click.Path(dir_okay=False), help='Clean reference image for PSNR')
@click.option('--sigma', type=float, help='Corrupt the input with this noise level (0-255 scale) first')
@click.option('--seed', type=int, default=0, show_default=True, help='Seed for --sigma noise')
@handle_errors
def denoise(checkpoint: str, input_path: str, output_path: str, reference: Optional[str],
            sigma: Optional[float], seed: int):
    """Denoises one image in a single forward pass, at its original size."""
    model = load_checkpoint(checkpoint)
    image = load_grayscale(input_path)
    noisy = image.pixels
    if sigma is not None:
        noisy = add_gaussian_noise(noisy, sigma, np.random.default_rng(seed))

    with no_grad():
        denoised = model(noisy)
    save_pgm(denoised, output_path)
    click.echo(f"Denoised {image.height}x{image.width} image written to {output_path}")

    if reference:
        clean = load_grayscale(reference)
        if clean.pixels.shape != denoised.shape:
            raise ShapeError(f"Reference {clean.pixels.shape} does not match output {denoised.shape}")
        click.echo(f"PSNR input:    {psnr(clean.pixels, noisy):.2f} dB")
        click.echo(f"PSNR denoised: {psnr(clean.pixels, denoised):.2f} dB")

@cli.command(name='eval')
@click.option('--checkpoint', required=True, type=click.Path(dir_okay=False), help='Denoiser checkpoint')
@click.option('--data', 'data_dir', required=True, type=click.Path(file_okay=False), help='Directory of clean images')
@click.option('--out', 'output_path', required=True, type=click.Path(dir_okay=False), help='Evaluation CSV')
@click.option('--sigma', 'sigmas', type=float, multiple=True, help='Noise levels (default 10 15 20 25)')
@click.option('--seed', type=int, default=0, show_default=True, help='Noise seed')
@click.option('--threads', type=int, default=1, envvar='ADVDENOISE_THREADS', show_default=True,
              help='Worker threads')
@handle_errors
def evaluate(checkpoint: str, data_dir: str, output_path: str, sigmas: Tuple[float, ...],
             seed: int, threads: int):
    """Scores a checkpoint on clean images corrupted at each noise level."""
    model = load_checkpoint(checkpoint)
    images = load_images([data_dir])
    levels = tuple(int(s) if float(s).is_integer() else s for s in (sigmas or TEST_SIGMAS))
    rows = evaluate_images(model, images, levels, seed=seed, threads=max(1, threads))
    write_evaluation_csv(rows, output_path)

    noisy, denoised = mean_psnr(rows, levels, "psnr_noisy"), mean_psnr(rows, levels)
    click.echo(f"{'sigma':>6} {'noisy':>8} {'denoised':>9}")
    for level in levels:
        click.echo(f"{level:>6} {noisy[level]:>8.2f} {denoised[level]:>9.2f}")
    click.echo(f"Per-image results written to {output_path}")

@cli.command()
@click.argument('metrics_csv', type=click.Path(dir_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Directory for the SVG charts')
@handle_errors
def report(metrics_csv: str, out_dir: str):
    """Plots validation PSNR and adversarial loss from a metrics CSV."""
    for path in render_report(metrics_csv, out_dir):
        click.echo(f"Wrote {path}")

if __name__ == '__main__':
    cli()
