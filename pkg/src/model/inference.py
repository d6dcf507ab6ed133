#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Inference Module for the Masked RBM toolkit
This module handles latent-state initialization, Gibbs segmentation of
images and fantasy sampling from the foreground model.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from src.model.masked import OUTLIERS_OFF, LatentState, gibbs_step, mask_posterior, resample_latent_images
from src.rbm.conditionals import (
    beta_visible_conditional,
    beta_visible_means,
    binary_mask_conditional,
    check_pixels,
    mixed_hidden_conditional,
    sample_bernoulli,
    sample_beta,
)
from src.rbm.params import EPS_X, HiddenState
from src.utils.config import GibbsConfig
from src.utils.errors import ConfigError
from src.utils.rng import PURPOSE_SEGMENT, RowStreams, make_rng

# Configure logging
logger = logging.getLogger(__name__)

# Images per vectorized chunk; fixed so results do not depend on the worker count
CHUNK_SIZE = 64


@dataclass(frozen=True)
class SegmentResult:
    """Output of segment().

    Attributes:
        mask_probabilities (ndarray): Averaged mask samples (or the final sample).
        hard_mask (ndarray): mask_probabilities thresholded at 0.5.
        hf_means (ndarray): Mean h^F Bernoulli means, the recognition features.
    """

    mask_probabilities: np.ndarray
    hard_mask: np.ndarray
    hf_means: np.ndarray


@dataclass(frozen=True)
class FantasySample:
    """Conditional-mean rendering of a foreground fantasy sample.

    Attributes:
        appearance_means (ndarray): Beta means of v given the final h.
        mask_means (ndarray): Sigmoid means of m given the final h.
        composite (ndarray): Appearance where mask_means >= 0.5, NaN where
            the object is invisible.
    """

    appearance_means: np.ndarray
    mask_means: np.ndarray
    composite: np.ndarray


def _hidden_prior_sample(b_hid, batch_shape, rng):
    means = np.broadcast_to(expit(b_hid), tuple(batch_shape) + b_hid.shape)
    return HiddenState(h=sample_bernoulli(means, rng), q=np.array(means))


def init_latent_state(x, fg, bg, rng):
    """Initialize latents for image(s) x.

    Hidden states are drawn from their bias-only priors, the mask is drawn
    from one mask posterior evaluation (outliers off) and the latent images
    are resampled so the delta constraints hold.

    Args:
        x (ndarray): Image(s), shape (..., n_pix).
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        rng: numpy Generator or RowStreams.

    Returns:
        LatentState: A state consistent with x.
    """
    x = check_pixels(x)
    batch_shape = x.shape[:-1]
    hf = _hidden_prior_sample(fg.appearance.b_hid, batch_shape, rng)
    hb = _hidden_prior_sample(bg.b_hid, batch_shape, rng)
    probabilities = mask_posterior(hf, hb, x, fg, bg, OUTLIERS_OFF)
    mask = sample_bernoulli(probabilities, rng)
    outlier = np.zeros_like(mask)
    v_fg, v_bg = resample_latent_images(mask, outlier, hf, hb, x, fg, bg, rng)
    return LatentState(v_fg=v_fg, v_bg=v_bg, mask=mask, outlier=outlier)


def segment(x, fg, bg, out, cfg, rng=None):
    """Segment image(s) by Gibbs sampling.

    Args:
        x (ndarray): Image(s), shape (..., n_pix).
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        out (OutlierConfig): Outlier component.
        cfg (GibbsConfig): Sweep counts and mask estimator.
        rng (optional): Generator or RowStreams; defaults to a stream
            derived from cfg.seed.

    Returns:
        SegmentResult: Mask probabilities, hard mask and h^F features.
    """
    if not isinstance(cfg, GibbsConfig):
        raise ConfigError("segment needs a GibbsConfig")
    cfg.validate()
    if rng is None:
        if cfg.seed is None:
            raise ConfigError("segment needs a seed or an explicit random stream")
        rng = make_rng(cfg.seed, PURPOSE_SEGMENT)
    x = check_pixels(x)

    state = init_latent_state(x, fg, bg, rng)
    mask_sum = np.zeros_like(x)
    hf_sum = np.zeros(x.shape[:-1] + (fg.n_hid,))
    kept = 0
    for sweep in range(cfg.n_sweeps):
        result = gibbs_step(state, x, fg, bg, out, rng)
        state = result.state
        if sweep >= cfg.burn_in:
            mask_sum += state.mask
            hf_sum += result.hf.q
            kept += 1

    if cfg.mask_estimator == "final":
        probabilities = state.mask.copy()
    else:
        probabilities = mask_sum / kept
    return SegmentResult(
        mask_probabilities=probabilities,
        hard_mask=(probabilities > 0.5).astype(np.float64),
        hf_means=hf_sum / kept,
    )


def segment_batch(images, fg, bg, out, cfg, workers=1):
    """Segment a batch of images with one random stream per image.

    Args:
        images (ndarray): [n_images, n_pix] images.
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        out (OutlierConfig): Outlier component.
        cfg (GibbsConfig): Sweep settings; cfg.seed is required.
        workers (int): Number of worker threads.

    Returns:
        SegmentResult: Batched results, row i for image i.
    """
    cfg.validate()
    if cfg.seed is None:
        raise ConfigError("segment_batch needs cfg.seed")
    images = np.atleast_2d(images)
    n_images = images.shape[0]
    chunks = [np.arange(start, min(start + CHUNK_SIZE, n_images)) for start in range(0, n_images, CHUNK_SIZE)]
    logger.info(f"Segmenting {n_images} images ({cfg.n_sweeps} sweeps, {workers} workers)")

    def run_chunk(indices):
        streams = RowStreams.for_items(cfg.seed, PURPOSE_SEGMENT, indices)
        return segment(images[indices], fg, bg, out, cfg, rng=streams)

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        results = list(pool.map(run_chunk, chunks))

    if not results:
        empty = np.zeros((0, fg.n_vis))
        return SegmentResult(empty, empty, np.zeros((0, fg.n_hid)))
    return SegmentResult(
        mask_probabilities=np.concatenate([r.mask_probabilities for r in results]),
        hard_mask=np.concatenate([r.hard_mask for r in results]),
        hf_means=np.concatenate([r.hf_means for r in results]),
    )


def sample_foreground(fg, steps, rng, n_samples=1):
    """Run Gibbs chains on the foreground mixed RBM alone.

    Chains start from uniform noise and fair-coin masks; the result is the
    conditional mean of the visibles given the hidden units of the final step.

    Args:
        fg (MixedRbmParams): Foreground model.
        steps (int): Number of Gibbs steps (>= 1).
        rng (numpy.random.Generator): Random stream.
        n_samples (int): Number of independent chains.

    Returns:
        FantasySample: Arrays of shape [n_samples, n_pix].
    """
    if steps < 1:
        raise ConfigError(f"steps must be at least 1, got {steps}")
    v = rng.uniform(EPS_X, 1.0 - EPS_X, size=(n_samples, fg.n_vis))
    m = (rng.random((n_samples, fg.n_vis)) < 0.5).astype(np.float64)
    for step in range(steps):
        h = sample_bernoulli(mixed_hidden_conditional(fg, v, m), rng)
        if step == steps - 1:
            break
        alpha, beta = beta_visible_conditional(fg.appearance, h)
        v = sample_beta(alpha, beta, rng)
        m = sample_bernoulli(binary_mask_conditional(fg.shape, h), rng)

    appearance = beta_visible_means(fg.appearance, h)
    mask_means = binary_mask_conditional(fg.shape, h)
    composite = np.where(mask_means >= 0.5, appearance, np.nan)
    return FantasySample(appearance_means=appearance, mask_means=mask_means, composite=composite)
