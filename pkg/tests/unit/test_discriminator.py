# tests/unit/test_discriminator.py

import math

import numpy as np
import pytest

from advdenoise.core.optim import Adam
from advdenoise.core.tensor import Tensor
from advdenoise.models.denoiser import set_trainable
from advdenoise.models.discriminator import (
    AccuracyMeter, DiscriminatorConfig, build_discriminator, disc_forward,
    disc_loss, discriminator_step, pretrain_discriminator,
)
from advdenoise.training.noise import NoiseSpec
from advdenoise.utils.errors import DatasetError, ShapeError

def smooth_patches(count, size, rng):
    """Random linear ramps inside [0.05, 0.95]."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    slopes = rng.uniform(-0.3, 0.3, (count, 2))
    offsets = rng.uniform(0.35, 0.65, count)
    ramps = (offsets[:, None, None]
             + slopes[:, 0, None, None] * (xx - 0.5)
             + slopes[:, 1, None, None] * (yy - 0.5))
    return ramps[:, None, :, :].astype(np.float32)

class TestForward:
    def test_untrained_output_is_one_half(self, tiny_disc_config, rng):
        """Test the zero-initialised head gives p = 0.5"""
        d = build_discriminator(tiny_disc_config, seed=0)
        probs = d(Tensor(rng.uniform(0, 1, (3, 1, 16, 16))))
        assert probs.shape == (3,)
        np.testing.assert_allclose(probs.data, 0.5)

    def test_single_image_gives_scalar(self, tiny_disc_config, rng):
        """Test a 1 x H x W image maps to one probability"""
        d = build_discriminator(tiny_disc_config)
        p = disc_forward(d, rng.uniform(0, 1, (1, 20, 24)))
        assert p.shape == ()
        assert 0.0 <= p.item() <= 1.0

    def test_probabilities_stay_in_unit_interval(self, tiny_disc_config, rng):
        """Test probabilities remain in [0, 1] with a trained head"""
        d = build_discriminator(tiny_disc_config, seed=1)
        d.output.weight.data[:] = rng.normal(scale=50.0, size=d.output.weight.shape)
        probs = d(Tensor(rng.uniform(0, 1, (8, 1, 16, 16)))).data
        assert np.all((probs >= 0.0) & (probs <= 1.0))

    def test_rejects_small_inputs(self, tiny_disc_config, rng):
        """Test inputs below the minimum size are rejected"""
        d = build_discriminator(tiny_disc_config)
        with pytest.raises(ShapeError):
            d(Tensor(rng.uniform(0, 1, (1, 1, 4, 4))))

    def test_default_architecture(self):
        """Test the default stack of four strided convolutions"""
        cfg = DiscriminatorConfig()
        d = build_discriminator(cfg)
        assert [s[2] for s in cfg.stages] == [16, 32, 64, 64]
        assert d.hidden.weight.shape == (256, 64)
        assert d.output.weight.shape == (2, 256)

class TestLoss:
    def test_untrained_loss_is_ln2(self, tiny_disc_config, rng):
        """Test the loss at p = 0.5 is ln 2"""
        d = build_discriminator(tiny_disc_config)
        clean = rng.uniform(0, 1, (2, 1, 16, 16))
        denoised = rng.uniform(0, 1, (2, 1, 16, 16))
        assert disc_loss(d, clean, denoised).item() == pytest.approx(math.log(2.0), rel=1e-5)

    def test_rejects_empty_batches(self, tiny_disc_config):
        """Test both sides of the batch must be non-empty"""
        d = build_discriminator(tiny_disc_config)
        with pytest.raises(ShapeError):
            disc_loss(d, np.zeros((0, 1, 16, 16)), np.zeros((2, 1, 16, 16)))

class TestClone:
    def test_clone_keeps_source_gradients(self, tiny_disc_config, rng):
        """Test cloning leaves the original's gradients alone"""
        d = build_discriminator(tiny_disc_config)
        disc_loss(d, rng.uniform(0, 1, (2, 1, 16, 16)), rng.uniform(0, 1, (2, 1, 16, 16))).backward()
        copied = d.clone()
        assert d.output.weight.grad is not None
        assert copied.output.weight.grad is None

class TestAccuracyMeter:
    def test_counts_threshold_decisions(self):
        """Test p >= 0.5 counts as a clean prediction"""
        meter = AccuracyMeter(window=8)
        meter.update([0.9, 0.5, 0.2, 0.4], [1, 1, 0, 1])
        assert meter.accuracy == pytest.approx(0.75)

    def test_window_keeps_recent_predictions(self):
        """Test old predictions drop out of the window"""
        meter = AccuracyMeter(window=4)
        meter.update([0.1] * 4, [1] * 4)
        meter.update([0.9] * 4, [1] * 4)
        assert len(meter) == 4
        assert meter.accuracy == 1.0

    def test_empty_meter(self):
        """Test an empty meter reports zero"""
        assert AccuracyMeter().accuracy == 0.0

class TestTraining:
    def test_step_updates_parameters_and_meter(self, tiny_disc_config, rng):
        """Test one step moves the head and records 2N predictions"""
        d = build_discriminator(tiny_disc_config)
        before = d.output.weight.data.copy()
        meter = AccuracyMeter()
        opt = Adam(d.named_parameters(), lr=1e-3)
        loss = discriminator_step(d, opt, rng.uniform(0, 1, (3, 1, 16, 16)),
                                  rng.uniform(0, 1, (3, 1, 16, 16)), meter)
        assert loss == pytest.approx(math.log(2.0), rel=1e-5)
        assert len(meter) == 6
        assert not np.array_equal(d.output.weight.data, before)

    def test_frozen_features_unchanged(self, tiny_disc_config, rng):
        """Test freezing the feature stack trains only the head"""
        d = build_discriminator(tiny_disc_config)
        set_trainable(d, ["features"], False)
        before = {p.name: p.data.copy() for p in d.parameter_groups()["features"]}
        opt = Adam(d.named_parameters(), lr=1e-2)
        for _ in range(5):
            discriminator_step(d, opt, rng.uniform(0.5, 1, (2, 1, 16, 16)), np.zeros((2, 1, 16, 16)))
        for p in d.parameter_groups()["features"]:
            np.testing.assert_array_equal(p.data, before[p.name])

    def test_pretraining_separates_smooth_from_noisy(self, rng):
        """Test smooth patches are told apart from noisy outputs within 10 epochs"""
        d = build_discriminator(seed=2)
        identity = lambda x: x
        meter = pretrain_discriminator(
            d, identity, smooth_patches(128, 16, rng), epochs=10,
            noise_spec=NoiseSpec((50.0, 50.0)),
            optimizer=Adam(d.named_parameters(), lr=1e-2),
            rng=np.random.default_rng(0),
        )
        assert meter.accuracy >= 0.95

    def test_pretraining_fills_given_meter(self, tiny_disc_config, clean_batch):
        """Test an empty meter passed in is the one that gets filled"""
        d = build_discriminator(tiny_disc_config)
        mine = AccuracyMeter(window=8)
        out = pretrain_discriminator(d, lambda x: x, clean_batch, epochs=1, meter=mine)
        assert out is mine
        assert len(mine) == 8

    def test_pretraining_rejects_empty_dataset(self, tiny_disc_config):
        """Test an empty dataset cannot be used"""
        d = build_discriminator(tiny_disc_config)
        with pytest.raises(DatasetError):
            pretrain_discriminator(d, lambda x: x, np.zeros((0, 1, 16, 16)))
