"""Beta RBM pretraining and the joint foreground trainer."""

import json
import logging
import os

import numpy as np
import pytest

import src.training.trainer as trainer_module
from conftest import random_beta_params
from src.data.container import read_model
from src.model.masked import gibbs_sweep
from src.rbm.params import EPS_X, BetaRbmParams, MixedRbmParams, init_mixed_params
from src.training.trainer import (
    BetaRbmTrainer,
    ForegroundTrainer,
    init_latent_store,
    pretrain_background,
    train_foreground,
)
from src.utils.config import TrainConfig
from src.utils.errors import ConfigError, DimensionError, DivergenceError, DomainError, NumericalError
from src.utils.rng import PURPOSE_INIT, RowStreams


def quick_config(**overrides):
    values = dict(
        epochs=2,
        minibatch_size=10,
        n_hidden=3,
        n_persistent_chains=8,
        checkpoint_every=1,
        seed=17,
    )
    values.update(overrides)
    return TrainConfig(**values)


def same_params(a, b):
    return all(np.array_equal(a.blocks()[name], b.blocks()[name]) for name in a.blocks())


@pytest.fixture
def patches(rng):
    return rng.uniform(0.05, 0.95, (40, 6))


@pytest.fixture
def background(rng):
    return random_beta_params(rng, 6, 2, scale=0.3)


class TestBetaRbmTrainer:
    def test_needs_a_seed(self):
        with pytest.raises(ConfigError):
            BetaRbmTrainer(quick_config(seed=None))

    def test_deterministic(self, patches):
        first = pretrain_background(patches, quick_config())
        second = pretrain_background(patches, quick_config())
        assert same_params(first, second)

    def test_zero_learning_rates_return_the_initialization(self, patches):
        frozen = quick_config(lr_appearance=0.0, lr_shape=0.0, lr_bias=0.0)
        trained = pretrain_background(patches, frozen)
        initial = pretrain_background(patches, quick_config(epochs=0))
        assert same_params(trained, initial)

    def test_checkpoints_and_log(self, patches, tmp_path):
        trainer = BetaRbmTrainer(quick_config(), "background", str(tmp_path))
        params = trainer.train(patches)
        stored, header = read_model(os.path.join(tmp_path, "background-epoch00002.mrbm"))
        for name, value in params.blocks().items():
            assert np.array_equal(stored.blocks()[name], value.astype(np.float32))
        assert header["metadata"]["epoch"] == 2
        assert "workers" not in header["metadata"]["config"]
        with open(os.path.join(tmp_path, "background-log.json"), encoding="utf-8") as f:
            log = json.load(f)
        assert [entry["epoch"] for entry in log] == [0, 1, 2]
        assert {"recon_error_train", "recon_error_holdout", "free_energy_gap"} <= set(log[-1])
        assert trainer.get_status()["epoch"] == 2

    def test_divergence_keeps_the_last_good_parameters(self, patches, monkeypatch):
        def diverge(params, *args, **kwargs):
            raise DivergenceError("w_logv", last_good=params)

        initial = pretrain_background(patches, quick_config(epochs=0))
        monkeypatch.setattr(trainer_module, "sml_update", diverge)
        with pytest.raises(DivergenceError) as info:
            pretrain_background(patches, quick_config())
        assert info.value.block == "w_logv"
        assert same_params(info.value.last_good, initial)

    def test_training_lowers_the_holdout_reconstruction_error(self, rng, tmp_path):
        # Two-component Beta mixture: every pixel of a patch is bright or every pixel is dark
        bright = rng.random(400) < 0.5
        data = np.where(bright[:, None], rng.beta(8.0, 2.0, (400, 16)), rng.beta(2.0, 8.0, (400, 16)))
        data = np.clip(data, EPS_X, 1.0 - EPS_X)
        cfg = quick_config(epochs=60, minibatch_size=20, n_hidden=4, n_persistent_chains=50, lr_appearance=0.02, checkpoint_every=0)
        pretrain_background(data, cfg, checkpoint_dir=str(tmp_path))
        with open(os.path.join(tmp_path, "background-log.json"), encoding="utf-8") as f:
            log = json.load(f)
        assert log[0]["epoch"] == 0 and log[-1]["epoch"] == 60
        assert log[-1]["recon_error_holdout"] < log[0]["recon_error_holdout"]

    def test_empty_data(self):
        with pytest.raises(DomainError):
            pretrain_background(np.zeros((0, 6)), quick_config())


class TestForegroundTrainer:
    def test_background_stays_frozen(self, patches, background):
        before = {name: value.copy() for name, value in background.blocks().items()}
        train_foreground(patches, background, None, quick_config())
        for name, value in background.blocks().items():
            assert np.array_equal(value, before[name])

    def test_zero_learning_rates_return_the_initialization(self, patches, background, rng):
        init = init_mixed_params(6, 3, rng, data=patches)
        cfg = quick_config(lr_appearance=0.0, lr_shape=0.0, lr_bias=0.0, weight_decay=0.0)
        params, _ = train_foreground(patches, background, init, cfg)
        assert same_params(params, init)

    def test_zero_epochs_return_the_initialization(self, patches, background, rng):
        init = init_mixed_params(6, 3, rng, data=patches)
        params, store = train_foreground(patches, background, init, quick_config(epochs=0))
        assert params is init
        assert len(store) == len(patches)

    def test_latents_satisfy_the_constraints(self, patches, background):
        _, store = train_foreground(patches, background, None, quick_config())
        assert store.constraints_hold(patches)

    def test_no_outliers_before_the_fine_tuning_epoch(self, patches, background):
        trainer = ForegroundTrainer(background, quick_config(outlier_from_epoch=2, outlier_p=0.9))
        _, store = trainer.train(patches)
        assert not np.any(store.state.outlier)
        assert not any(entry["outliers"] for entry in trainer.log)

    def test_outliers_from_the_start(self, patches, background):
        trainer = ForegroundTrainer(background, quick_config(outlier_from_epoch=0, outlier_p=0.9))
        _, store = trainer.train(patches)
        assert np.any(store.state.outlier)
        assert not np.any(store.state.outlier[store.state.mask == 1])
        assert trainer.log[-1]["outliers"]

    def test_worker_count_does_not_change_results(self, background, rng):
        images = rng.uniform(0.05, 0.95, (70, 6))
        one, store_one = train_foreground(images, background, None, quick_config(minibatch_size=70, workers=1))
        three, store_three = train_foreground(images, background, None, quick_config(minibatch_size=70, workers=3))
        assert same_params(one, three)
        assert np.array_equal(store_one.state.mask, store_three.state.mask)

    def test_image_size_must_match_the_background(self, background, rng):
        with pytest.raises(DimensionError):
            train_foreground(rng.uniform(0.1, 0.9, (5, 4)), background, None, quick_config())

    def test_ground_truth_masks_are_logged(self, patches, background, rng, tmp_path):
        gt = (rng.random(patches.shape) < 0.5).astype(float)
        trainer = ForegroundTrainer(background, quick_config(), str(tmp_path))
        trainer.train(patches, gt_masks=gt)
        assert 0.0 <= trainer.log[-1]["mask_iou"] <= 1.0
        assert os.path.exists(os.path.join(tmp_path, "foreground-epoch00002.mrbm"))
        assert trainer.get_status() == {"model": "foreground", "epoch": 2, "epochs": 2, "images": 40}

    def test_failing_image_is_reinitialized(self, patches, background, monkeypatch, caplog):
        patches = patches.copy()
        patches[3] = 0.5

        def fragile_sweep(state, x, fg, bg, out, rng):
            if np.any(np.all(np.atleast_2d(x) == 0.5, axis=-1)):
                raise NumericalError("Non-finite foreground log-density", pixel=0)
            return gibbs_sweep(state, x, fg, bg, out, rng)

        monkeypatch.setattr(trainer_module, "gibbs_sweep", fragile_sweep)
        with caplog.at_level(logging.WARNING):
            _, store = train_foreground(patches, background, None, quick_config(epochs=1))
        assert "image 3" in caplog.text
        assert store.constraints_hold(patches)


def test_init_latent_store_rows(patches, background, rng):
    fg = init_mixed_params(6, 3, rng, data=patches)
    store = init_latent_store(patches, fg, background, RowStreams.for_items(5, PURPOSE_INIT, range(len(patches))))
    assert len(store) == 40
    assert store.constraints_hold(patches)
    assert store.entry(2).mask.shape == (6,)


def test_uninformative_models_start_from_even_masks(rng):
    images = rng.uniform(0.05, 0.95, (200, 16))
    fg, bg = MixedRbmParams.zeros(16, 3), BetaRbmParams.zeros(16, 2)
    store = init_latent_store(images, fg, bg, RowStreams.for_items(3, PURPOSE_INIT, range(len(images))))
    assert abs(store.state.mask.mean() - 0.5) < 0.05
    assert not store.state.outlier.any()
    assert store.constraints_hold(images)
