#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Masked Model Module for the Masked RBM toolkit
This module composes the foreground mixed RBM and the background Beta RBM
into the pixel-wise masked mixture and implements its block Gibbs sweep.

Given the hidden states, every pixel chooses between three explanations of
the observation x_i:
    foreground:  Beta(x_i; h^F) * p(m_i = 1 | h^F)
    background:  (1 - p) * Beta(x_i; h^B) * p(m_i = 0 | h^F)
    outlier:     p * U(x_i) * p(m_i = 0 | h^F),  U = 1 on [0, 1]
The outlier term is absent when the outlier component is disabled.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, logsumexp

from src.rbm.conditionals import (
    beta_hidden_conditional,
    beta_log_density,
    beta_visible_conditional,
    check_binary,
    check_pixels,
    mixed_hidden_conditional,
    sample_bernoulli,
    sample_beta,
)
from src.rbm.params import HiddenState
from src.utils.errors import DimensionError, DomainError, NumericalError

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OutlierConfig:
    """Uniform outlier component of the background model.

    Attributes:
        p (float): Prior probability that a background pixel is an outlier.
        enabled (bool): When False the component behaves as p = 0.
    """

    p: float = 0.3
    enabled: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"Outlier probability must lie in [0, 1], got {self.p}")

    @property
    def effective_p(self):
        return self.p if self.enabled else 0.0


OUTLIERS_OFF = OutlierConfig(enabled=False)


@dataclass(frozen=True)
class LatentState:
    """Latent variables of one image (or a batch, along the leading axis).

    Attributes:
        v_fg (ndarray): Foreground appearance image v^F.
        v_bg (ndarray): Background image v^B.
        mask (ndarray): Binary mask m (1 = foreground).
        outlier (ndarray): Binary outlier indicators o, zero where m = 1.
    """

    v_fg: np.ndarray
    v_bg: np.ndarray
    mask: np.ndarray
    outlier: np.ndarray

    def constraints_hold(self, x):
        """Whether the delta constraints tie the latents to the observation x."""
        x = np.asarray(x, dtype=np.float64)
        fg = self.mask == 1.0
        bg = (self.mask == 0.0) & (self.outlier == 0.0)
        return bool(
            np.array_equal(self.v_fg[fg], x[fg])
            and np.array_equal(self.v_bg[bg], x[bg])
            and not np.any(self.outlier[fg] == 1.0)
        )

    def take(self, rows):
        """Select rows of a batched state."""
        return LatentState(self.v_fg[rows], self.v_bg[rows], self.mask[rows], self.outlier[rows])


@dataclass(frozen=True)
class SweepResult:
    """A Gibbs sweep's new state plus the hidden samples it drew."""

    state: LatentState
    hf: HiddenState
    hb: HiddenState
    mask_probabilities: np.ndarray


def _check_image(x, fg, bg):
    x = check_pixels(x)
    if fg.n_vis != bg.n_vis:
        raise DimensionError("foreground/background pixel count", (bg.n_vis,), (fg.n_vis,))
    if x.shape[-1] != fg.n_vis:
        raise DimensionError("image", (fg.n_vis,), x.shape)
    return x


def _check_finite(values, what):
    bad = ~np.isfinite(values)
    if np.any(bad):
        pixel = int(np.flatnonzero(bad)[0] % values.shape[-1])
        raise NumericalError(f"Non-finite {what}", pixel=pixel)


def pixel_log_terms(hf, hb, x, fg, bg, out):
    """Log weights of the foreground, background and outlier explanations.

    Args:
        hf (HiddenState): Foreground hidden state.
        hb (HiddenState): Background hidden state.
        x (ndarray): Observed image(s), shape (..., n_pix).
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        out (OutlierConfig): Outlier component.

    Returns:
        tuple: (log_fg, log_bg, log_outlier); log_outlier is None when the
        outlier component is disabled.
    """
    x = _check_image(x, fg, bg)
    alpha_f, beta_f = beta_visible_conditional(fg.appearance, hf.h)
    alpha_b, beta_b = beta_visible_conditional(bg, hb.h)
    log_density_f = beta_log_density(alpha_f, beta_f, x)
    log_density_b = beta_log_density(alpha_b, beta_b, x)
    _check_finite(log_density_f, "foreground log-density")
    _check_finite(log_density_b, "background log-density")

    shape_input = fg.shape.b_shape + np.asarray(hf.h, dtype=np.float64) @ fg.shape.w_shape.T
    return combine_log_terms(log_density_f, log_density_b, log_expit(shape_input), log_expit(-shape_input), out)


def combine_log_terms(log_density_f, log_density_b, log_prior_on, log_prior_off, out):
    """Combine per-pixel log densities and mask priors into mixture log weights."""
    p = out.effective_p
    log_fg = log_density_f + log_prior_on
    if not out.enabled:
        return log_fg, log_density_b + log_prior_off, None
    with np.errstate(divide="ignore"):
        log_keep, log_p = np.log1p(-p), np.log(p)
    log_bg = log_keep + log_density_b + log_prior_off
    log_outlier = log_p + np.zeros_like(log_density_b) + log_prior_off
    return log_fg, log_bg, log_outlier


def _normalizer(log_fg, log_bg, log_outlier):
    terms = [log_fg, log_bg] if log_outlier is None else [log_fg, log_bg, log_outlier]
    return logsumexp(np.stack(terms), axis=0)


def mask_posterior_from_terms(log_fg, log_bg, log_outlier=None):
    """p(m_i = 1 | ...) = exp(log_fg - logsumexp(all terms))."""
    return np.exp(log_fg - _normalizer(log_fg, log_bg, log_outlier))


def mask_posterior(hf, hb, x, fg, bg, out):
    """Per-pixel posterior probability that the foreground is visible.

    Args:
        hf (HiddenState): Foreground hidden state.
        hb (HiddenState): Background hidden state.
        x (ndarray): Observed image(s) in (0, 1).
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        out (OutlierConfig): Outlier component.

    Returns:
        ndarray: Bernoulli means, same shape as x.
    """
    return mask_posterior_from_terms(*pixel_log_terms(hf, hb, x, fg, bg, out))


def outlier_posterior(hb, x, mask, bg, out):
    """Per-pixel posterior probability that a background pixel is an outlier.

    Pixels with mask 1 are not explained by the background and get the
    prior p.

    Returns:
        ndarray: Bernoulli means, same shape as x.
    """
    x = check_pixels(x)
    mask = check_binary(mask)
    if x.shape[-1] != bg.n_vis or mask.shape != x.shape:
        raise DimensionError("outlier_posterior image/mask", x.shape, mask.shape)
    p = out.effective_p
    if p == 0.0:
        return np.zeros_like(x)
    alpha, beta = beta_visible_conditional(bg, hb.h)
    log_density = beta_log_density(alpha, beta, x)
    _check_finite(log_density, "background log-density")
    with np.errstate(divide="ignore"):
        log_outlier = np.log(p) + np.zeros_like(x)
        log_background = np.log1p(-p) + log_density
    posterior = np.exp(log_outlier - np.logaddexp(log_outlier, log_background))
    return np.where(mask == 1.0, p, posterior)


def resample_latent_images(mask, outlier, hf, hb, x, fg, bg, rng):
    """Resample the latent images given mask, outliers and hidden states.

    Where the foreground is visible v^F = x and v^B is drawn from the
    background RBM; otherwise v^B = x (unless the pixel is an outlier) and
    v^F is drawn from the foreground RBM. Every pixel draws both samples so
    the random stream consumption does not depend on the mask.

    Returns:
        tuple: (v_fg, v_bg).
    """
    x = _check_image(x, fg, bg)
    mask = np.asarray(mask, dtype=np.float64)
    outlier = np.asarray(outlier, dtype=np.float64)
    if mask.shape != x.shape or outlier.shape != x.shape:
        raise DimensionError("resample_latent_images mask", x.shape, mask.shape)
    alpha_f, beta_f = beta_visible_conditional(fg.appearance, hf.h)
    alpha_b, beta_b = beta_visible_conditional(bg, hb.h)
    sample_f = sample_beta(alpha_f, beta_f, rng)
    sample_b = sample_beta(alpha_b, beta_b, rng)
    v_fg = np.where(mask == 1.0, x, sample_f)
    v_bg = np.where((mask == 0.0) & (outlier == 0.0), x, sample_b)
    return v_fg, v_bg


def sample_mask_and_outliers(log_fg, log_bg, log_outlier, rng):
    """Jointly sample (m_i, o_i) from the collapsed three-state categorical.

    Returns:
        tuple: (mask, outlier, mask_probabilities).
    """
    log_norm = _normalizer(log_fg, log_bg, log_outlier)
    p_fg = np.exp(log_fg - log_norm)
    u = rng.random(p_fg.shape)
    mask = (u < p_fg).astype(np.float64)
    if log_outlier is None:
        return mask, np.zeros_like(mask), p_fg
    p_outlier = np.exp(log_outlier - log_norm)
    outlier = ((u >= p_fg) & (u < p_fg + p_outlier)).astype(np.float64)
    return mask, outlier, p_fg


def gibbs_step(state, x, fg, bg, out, rng):
    """One sweep in the order h -> (m, o) -> (v^F, v^B), with diagnostics.

    h^F is drawn given (v^F, m) from the mixed RBM and h^B given v^B from
    the background RBM.

    Returns:
        SweepResult: New state and the hidden samples of this sweep.
    """
    x = _check_image(x, fg, bg)
    qf = mixed_hidden_conditional(fg, state.v_fg, state.mask)
    qb = beta_hidden_conditional(bg, state.v_bg)
    hf = HiddenState(h=sample_bernoulli(qf, rng), q=qf)
    hb = HiddenState(h=sample_bernoulli(qb, rng), q=qb)

    log_fg, log_bg, log_outlier = pixel_log_terms(hf, hb, x, fg, bg, out)
    mask, outlier, p_fg = sample_mask_and_outliers(log_fg, log_bg, log_outlier, rng)

    v_fg, v_bg = resample_latent_images(mask, outlier, hf, hb, x, fg, bg, rng)
    new_state = LatentState(v_fg=v_fg, v_bg=v_bg, mask=mask, outlier=outlier)
    return SweepResult(state=new_state, hf=hf, hb=hb, mask_probabilities=p_fg)


def gibbs_sweep(state, x, fg, bg, out, rng):
    """One full block Gibbs sweep of the masked model.

    Args:
        state (LatentState): Current latents, consistent with x.
        x (ndarray): Observed image(s).
        fg (MixedRbmParams): Foreground model.
        bg (BetaRbmParams): Background model.
        out (OutlierConfig): Outlier component.
        rng: numpy Generator or RowStreams.

    Returns:
        LatentState: The updated latents.
    """
    return gibbs_step(state, x, fg, bg, out, rng).state
