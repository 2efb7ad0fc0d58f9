import pytest
import numpy as np

from advdenoise.core.tensor import precision
from advdenoise.data.datasets import synthetic_textures
from advdenoise.models.denoiser import MultiScaleConfig
from advdenoise.models.discriminator import DiscriminatorConfig
from advdenoise.utils.config import RunConfig

def pytest_addoption(parser):
    parser.addoption(
        "--integration",
        action="store_true",
        default=False,
        help="run integration tests (desk-scale training runs)"
    )

def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "integration: mark test as integration test"
    )

def pytest_collection_modifyitems(config, items):
    if not config.getoption("--integration"):
        skip_integration = pytest.mark.skip(reason="need --integration option to run")
        for item in items:
            if "integration" in item.keywords:
                item.add_marker(skip_integration)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture
def float64():
    """64-bit tensors for gradient checks."""
    with precision(np.float64):
        yield

@pytest.fixture
def tiny_config():
    """Two branches, five feature channels: small enough for exhaustive checks."""
    return MultiScaleConfig(branches=((1, 2), (3, 3)), feature_width=5, recon_width=4)

@pytest.fixture
def tiny_disc_config():
    return DiscriminatorConfig(stages=((3, 2, 4), (3, 2, 4)), hidden=8, min_size=8)

@pytest.fixture
def patches():
    return synthetic_textures(6, size=16, seed=3)

@pytest.fixture
def clean_batch(patches):
    return np.stack([p.pixels.data for p in patches[:4]])

@pytest.fixture
def tiny_run_config(tmp_path):
    """A complete run that finishes in seconds."""
    return RunConfig(
        phase1_iterations=20,
        phase2_iterations=20,
        phase3_iterations=10,
        batch_size=2,
        patch_size=16,
        branches="1:2,3:3",
        feature_width=5,
        gating_width=5,
        recon_width=4,
        disc_pretrain_epochs=1,
        checkpoint_every=0,
        out_dir=str(tmp_path / "run"),
    )
