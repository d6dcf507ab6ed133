#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Trainer Module for the Masked RBM toolkit
This module handles weakly supervised training: SML pretraining of Beta
RBMs (background, foreground appearance) and the EM-like joint loop that
alternates Gibbs inference of the latents with foreground SML updates.

The background model is frozen during joint training. Foreground and
background persistent chains never share state; the background has no
chains at all once pretraining is over.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from src.data.container import write_model
from src.eval.metrics import mask_iou
from src.model.inference import CHUNK_SIZE, init_latent_state
from src.model.masked import LatentState, OutlierConfig, gibbs_sweep
from src.rbm.params import init_beta_params, init_mixed_params
from src.rbm.sml import PersistentChains, SmlHyper, free_energy_beta, reconstruction_error, sml_update
from src.utils.errors import ConfigError, DimensionError, DivergenceError, DomainError, NumericalError
from src.utils.rng import PURPOSE_ESTEP, PURPOSE_INIT, PURPOSE_MODEL, RowStreams, make_rng

# Configure logging
logger = logging.getLogger(__name__)

# Model-stream tags for the three training runs
TAG_BACKGROUND = 1
TAG_APPEARANCE = 2
TAG_FOREGROUND = 3


class LatentStore:
    """Per-image latent states persisted across epochs.

    Row i of every array belongs to training image i.
    """

    def __init__(self, state):
        self.state = LatentState(
            v_fg=np.array(state.v_fg, dtype=np.float64),
            v_bg=np.array(state.v_bg, dtype=np.float64),
            mask=np.array(state.mask, dtype=np.float64),
            outlier=np.array(state.outlier, dtype=np.float64),
        )

    def __len__(self):
        return self.state.mask.shape[0]

    def entry(self, index):
        """The LatentState of one image."""
        return self.state.take(index)

    def get(self, indices):
        return self.state.take(np.asarray(indices))

    def put(self, indices, state):
        indices = np.asarray(indices)
        self.state.v_fg[indices] = state.v_fg
        self.state.v_bg[indices] = state.v_bg
        self.state.mask[indices] = state.mask
        self.state.outlier[indices] = state.outlier

    def constraints_hold(self, images):
        return self.state.constraints_hold(images)


def init_latent_store(images, fg, bg, rng):
    """Initialize one latent state per training image.

    Args:
        images (ndarray): [n, n_pix] training images.
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        rng: RowStreams with one stream per image, or a single Generator.

    Returns:
        LatentStore: States satisfying the delta constraints.
    """
    return LatentStore(init_latent_state(np.atleast_2d(images), fg, bg, rng))


def _batches(order, size):
    return [order[start : start + size] for start in range(0, len(order), size)]


def _provenance(cfg):
    # The worker count never changes results, so it stays out of artifacts
    return {k: v for k, v in cfg.to_dict().items() if k != "workers"}


def _write_log(path, entries):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(entries, f, indent=2, sort_keys=True)
        f.write("\n")


class BetaRbmTrainer:
    """SML trainer for a stand-alone Beta RBM (background or appearance)."""

    def __init__(self, cfg, name="background", checkpoint_dir=None):
        """Initialize the trainer.

        Args:
            cfg (TrainConfig): Hyperparameters; cfg.seed is required.
            name (str): "background" or "appearance"; selects the model stream.
            checkpoint_dir (str, optional): Where checkpoints and the log go.
        """
        cfg.validate()
        if cfg.seed is None:
            raise ConfigError("Training needs a seed")
        self.cfg = cfg
        self.name = name
        self.tag = TAG_APPEARANCE if name == "appearance" else TAG_BACKGROUND
        self.checkpoint_dir = checkpoint_dir
        self.hyper = SmlHyper.from_config(cfg)
        self.log = []
        self.epoch = 0
        logger.info(f"Initializing {name} Beta RBM trainer...")

    def _split(self, data, rng):
        order = rng.permutation(len(data))
        n_holdout = int(round(self.cfg.holdout_fraction * len(data)))
        n_holdout = min(n_holdout, len(data) - 1)
        return data[order[n_holdout:]], data[order[:n_holdout]]

    def _record(self, params, train, holdout):
        entry = {"epoch": self.epoch, "model": self.name, "recon_error_train": reconstruction_error(params, train)}
        if len(holdout):
            entry["recon_error_holdout"] = reconstruction_error(params, holdout)
            gap = float(np.mean(free_energy_beta(params, holdout)) - np.mean(free_energy_beta(params, train)))
            entry["free_energy_gap"] = gap
        self.log.append(entry)
        logger.info(f"[{self.name}] epoch {self.epoch}: " + ", ".join(f"{k}={v:.5g}" for k, v in entry.items() if isinstance(v, float)))

    def _checkpoint(self, params, final=False):
        if self.checkpoint_dir is None:
            return
        metadata = {"model": self.name, "epoch": self.epoch, "config": _provenance(self.cfg)}
        if final or (self.cfg.checkpoint_every and self.epoch % self.cfg.checkpoint_every == 0):
            write_model(os.path.join(self.checkpoint_dir, f"{self.name}-epoch{self.epoch:05d}.mrbm"), params, metadata)
        _write_log(os.path.join(self.checkpoint_dir, f"{self.name}-log.json"), self.log)

    def train(self, data):
        """Train on data with SML.

        Args:
            data (ndarray): [n, n_vis] pixels in [1/512, 1 - 1/512].

        Returns:
            BetaRbmParams: The trained parameters.

        Raises:
            DivergenceError: With the parameters of the last finite epoch.
        """
        data = np.asarray(data, dtype=np.float64)
        if len(data) == 0:
            raise DomainError(f"No training data for the {self.name} model")
        data = data.reshape(len(data), -1)
        rng = make_rng(self.cfg.seed, PURPOSE_MODEL, self.tag)
        train, holdout = self._split(data, rng)
        params = init_beta_params(train, self.cfg.n_hidden, rng)
        chains = PersistentChains.from_data(train, self.cfg.n_persistent_chains, params.n_hid, rng)
        logger.info(f"Training {self.name} Beta RBM on {len(train)} examples ({len(holdout)} held out)...")
        self._record(params, train, holdout)

        for epoch in range(1, self.cfg.epochs + 1):
            self.epoch = epoch
            last_good = params
            try:
                for batch in _batches(rng.permutation(len(train)), self.cfg.minibatch_size):
                    params, chains = sml_update(params, train[batch], chains, self.hyper, rng)
            except DivergenceError as e:
                logger.error(f"[{self.name}] diverged in epoch {epoch} (block '{e.block}')")
                raise DivergenceError(e.block, last_good=last_good) from e
            self._record(params, train, holdout)
            self._checkpoint(params)

        self._checkpoint(params, final=True)
        logger.info(f"{self.name.capitalize()} Beta RBM training finished.")
        return params

    def get_status(self):
        return {"model": self.name, "epoch": self.epoch, "epochs": self.cfg.epochs, "log_entries": len(self.log)}


def pretrain_background(patches, cfg, checkpoint_dir=None):
    """Train the background Beta RBM on natural image patches."""
    return BetaRbmTrainer(cfg, "background", checkpoint_dir).train(patches)


def pretrain_foreground_appearance(images, cfg, checkpoint_dir=None):
    """Train a Beta RBM on full training images to initialize the foreground appearance."""
    return BetaRbmTrainer(cfg, "appearance", checkpoint_dir).train(images)


class ForegroundTrainer:
    """EM-like joint trainer of the foreground mixed RBM."""

    def __init__(self, bg, cfg, checkpoint_dir=None):
        """Initialize the trainer.

        Args:
            bg (BetaRbmParams): Pretrained background model (kept frozen).
            cfg (TrainConfig): Hyperparameters; cfg.seed is required.
            checkpoint_dir (str, optional): Where checkpoints and the log go.
        """
        cfg.validate()
        if cfg.seed is None:
            raise ConfigError("Training needs a seed")
        self.bg = bg
        self.cfg = cfg
        self.checkpoint_dir = checkpoint_dir
        self.hyper = SmlHyper.from_config(cfg)
        self.log = []
        self.epoch = 0
        self.store = None
        logger.info("Initializing foreground trainer...")

    def _sweep_rows(self, images, rows, params, out, epoch):
        streams = RowStreams.for_items(self.cfg.seed, PURPOSE_ESTEP, rows, epoch)
        return gibbs_sweep(self.store.get(rows), images[rows], params, self.bg, out, streams)

    def _estep(self, pool, images, indices, params, out, epoch):
        """One Gibbs sweep for each image in indices, one stream per image.

        A chunk that hits a non-finite density is retried image by image;
        images that still fail get a freshly initialized latent state.
        """
        chunks = [indices[s : s + CHUNK_SIZE] for s in range(0, len(indices), CHUNK_SIZE)]

        def sweep(chunk):
            try:
                return chunk, self._sweep_rows(images, chunk, params, out, epoch)
            except (NumericalError, DomainError):
                pass
            states = []
            for row in chunk:
                try:
                    states.append(self._sweep_rows(images, [row], params, out, epoch))
                except (NumericalError, DomainError) as e:
                    logger.warning(f"Rejected latent state of image {row} ({e}); resampling")
                    fresh_streams = RowStreams.for_items(self.cfg.seed, PURPOSE_INIT, [row], epoch)
                    states.append(init_latent_state(images[[row]], params, self.bg, fresh_streams))
            return chunk, _concatenate(states)

        for chunk, state in pool.map(sweep, chunks):
            self.store.put(chunk, state)

    def _record(self, params, images, gt_masks, out):
        state = self.store.state
        entry = {
            "epoch": self.epoch,
            "model": "foreground",
            "outliers": bool(out.enabled),
            "mean_mask": float(state.mask.mean()),
            "outlier_rate": float(state.outlier.mean()),
            "recon_error": reconstruction_error(params, state.v_fg),
        }
        if gt_masks is not None:
            entry["mask_iou"] = mask_iou(state.mask, gt_masks)
        self.log.append(entry)
        logger.info(f"[foreground] epoch {self.epoch}: " + ", ".join(f"{k}={v:.5g}" for k, v in entry.items() if isinstance(v, float)))

    def _checkpoint(self, params, final=False):
        if self.checkpoint_dir is None:
            return
        metadata = {"model": "foreground", "epoch": self.epoch, "config": _provenance(self.cfg)}
        if final or (self.cfg.checkpoint_every and self.epoch % self.cfg.checkpoint_every == 0):
            write_model(os.path.join(self.checkpoint_dir, f"foreground-epoch{self.epoch:05d}.mrbm"), params, metadata)
        _write_log(os.path.join(self.checkpoint_dir, "foreground-log.json"), self.log)

    def train(self, images, init=None, gt_masks=None):
        """Jointly infer latents and train the foreground model.

        Args:
            images (ndarray): [n, n_pix] training images.
            init (MixedRbmParams, optional): Initial foreground parameters;
                a fresh moment-matched model when omitted.
            gt_masks (ndarray, optional): [n, n_pix] masks, used only for logging.

        Returns:
            tuple: (MixedRbmParams, LatentStore).
        """
        images = np.asarray(images, dtype=np.float64)
        if len(images) == 0:
            raise DomainError("No training images for the foreground model")
        images = images.reshape(len(images), -1)
        if images.shape[1] != self.bg.n_vis:
            raise DimensionError("training images", (self.bg.n_vis,), images.shape[1:])
        rng = make_rng(self.cfg.seed, PURPOSE_MODEL, TAG_FOREGROUND)
        params = init if init is not None else init_mixed_params(images.shape[1], self.cfg.n_hidden, rng, data=images)
        if params.n_vis != self.bg.n_vis:
            raise DimensionError("foreground model", (self.bg.n_vis,), (params.n_vis,))
        if gt_masks is not None:
            gt_masks = np.asarray(gt_masks, dtype=np.float64).reshape(images.shape)

        self.store = init_latent_store(images, params, self.bg, RowStreams.for_items(self.cfg.seed, PURPOSE_INIT, range(len(images))))
        chains = PersistentChains.from_noise(self.cfg.n_persistent_chains, params.n_vis, params.n_hid, rng, with_masks=True)
        out = OutlierConfig(p=self.cfg.outlier_p, enabled=self.cfg.outliers_enabled(0))
        self._record(params, images, gt_masks, out)
        logger.info(f"Training foreground model on {len(images)} images for {self.cfg.epochs} epochs...")

        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            for epoch in range(1, self.cfg.epochs + 1):
                self.epoch = epoch
                out = OutlierConfig(p=self.cfg.outlier_p, enabled=self.cfg.outliers_enabled(epoch - 1))
                last_good = params
                try:
                    for batch in _batches(rng.permutation(len(images)), self.cfg.minibatch_size):
                        self._estep(pool, images, batch, params, out, epoch)
                        positive = self.store.get(batch)
                        params, chains = sml_update(params, (positive.v_fg, positive.mask), chains, self.hyper, rng)
                except DivergenceError as e:
                    logger.error(f"[foreground] diverged in epoch {epoch} (block '{e.block}')")
                    raise DivergenceError(e.block, last_good=last_good) from e
                self._record(params, images, gt_masks, out)
                self._checkpoint(params)

        self._checkpoint(params, final=True)
        logger.info("Foreground training finished.")
        return params, self.store

    def get_status(self):
        return {
            "model": "foreground",
            "epoch": self.epoch,
            "epochs": self.cfg.epochs,
            "images": 0 if self.store is None else len(self.store),
        }


def _concatenate(states):
    return LatentState(*(np.concatenate([getattr(s, name) for s in states]) for name in ("v_fg", "v_bg", "mask", "outlier")))


def train_foreground(images, bg, init, cfg, gt_masks=None, checkpoint_dir=None):
    """Train the foreground model against a frozen background.

    Returns:
        tuple: (MixedRbmParams, LatentStore).
    """
    return ForegroundTrainer(bg, cfg, checkpoint_dir).train(images, init=init, gt_masks=gt_masks)
