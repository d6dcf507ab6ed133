#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
RBM Conditionals Module for the Masked RBM toolkit
This module implements the energy functions, the exact unit-wise
conditionals and the samplers of the Beta, binary and mixed RBMs.

All functions accept a leading batch axis: visible arrays have shape
(..., n_vis) and hidden arrays (..., n_hid). Energies use a leading minus
with p proportional to exp(-E).
"""

import logging

import numpy as np
from scipy.special import expit, gammaln

from src.rbm.params import EPS_BETA, EPS_X
from src.utils.errors import DimensionError, DomainError

# Configure logging
logger = logging.getLogger(__name__)


def _check_last(what, array, n):
    if array.ndim == 0 or array.shape[-1] != n:
        raise DimensionError(what, (n,), array.shape)


def check_pixels(v):
    """Validate that pixel values lie strictly inside (0, 1).

    Args:
        v (array_like): Pixel values.

    Returns:
        ndarray: The values as float64.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all((v > 0.0) & (v < 1.0)):
        bad = np.flatnonzero(~((v > 0.0) & (v < 1.0)))[0]
        raise DomainError(f"Pixel values must lie strictly inside (0, 1); index {bad} is {v.flat[bad]}")
    return v


def check_binary(m, what="mask"):
    m = np.asarray(m, dtype=np.float64)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise DomainError(f"{what} must be binary")
    return m


def _log_pixels(v):
    v = check_pixels(v)
    return np.log(v), np.log1p(-v)


def energy_beta(params, v, h):
    """Energy of a Beta RBM.

    Args:
        params (BetaRbmParams): Model parameters.
        v (array_like): Pixels in (0, 1), shape (..., n_vis).
        h (array_like): Binary hidden units, shape (..., n_hid).

    Returns:
        float or ndarray: E_Beta(v, h).
    """
    h = np.asarray(h, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_last("energy_beta visibles", v, params.n_vis)
    _check_last("energy_beta hiddens", h, params.n_hid)
    log_v, log_1mv = _log_pixels(v)
    coef_v = params.a_vis + h @ params.w_logv.T
    coef_1mv = params.c_vis + h @ params.w_log1mv.T
    return -np.sum(coef_v * log_v + coef_1mv * log_1mv, axis=-1) - h @ params.b_hid


def energy_bin(shape, m, h):
    """Energy of the binary mask block, E_Bin(m, h) = -(m^T W h + b^T m)."""
    m = np.asarray(m, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    _check_last("energy_bin mask", m, shape.n_pix)
    _check_last("energy_bin hiddens", h, shape.n_hid)
    return -np.sum(m * (h @ shape.w_shape.T), axis=-1) - m @ shape.b_shape


def energy_mixed(params, v, m, h):
    """Energy of the mixed RBM; exactly E_Bin(m, h) + E_Beta(v, h)."""
    return energy_bin(params.shape, m, h) + energy_beta(params.appearance, v, h)


def beta_visible_conditional(params, h):
    """Per-pixel Beta shape parameters of p(v | h).

    Args:
        params (BetaRbmParams): Model parameters.
        h (array_like): Binary hidden units, shape (..., n_hid).

    Returns:
        tuple: (alpha, beta), each of shape (..., n_vis) and at least EPS_BETA.
    """
    h = np.asarray(h, dtype=np.float64)
    _check_last("beta_visible_conditional hiddens", h, params.n_hid)
    alpha = np.maximum(1.0 + params.a_vis + h @ params.w_logv.T, EPS_BETA)
    beta = np.maximum(1.0 + params.c_vis + h @ params.w_log1mv.T, EPS_BETA)
    return alpha, beta


def beta_visible_means(params, h):
    """Conditional means alpha / (alpha + beta) of the visibles given h."""
    alpha, beta = beta_visible_conditional(params, h)
    return alpha / (alpha + beta)


def beta_hidden_input(params, v):
    """Total input to each hidden unit from the Beta visibles, bias included."""
    v = np.asarray(v, dtype=np.float64)
    _check_last("beta_hidden_conditional visibles", v, params.n_vis)
    log_v, log_1mv = _log_pixels(v)
    return params.b_hid + log_v @ params.w_logv + log_1mv @ params.w_log1mv


def beta_hidden_conditional(params, v):
    """Bernoulli means p(h_j = 1 | v) of a Beta RBM."""
    return expit(beta_hidden_input(params, v))


def binary_mask_conditional(shape, h):
    """Bernoulli means p(m_i = 1 | h) of the shape block."""
    h = np.asarray(h, dtype=np.float64)
    _check_last("binary_mask_conditional hiddens", h, shape.n_hid)
    return expit(shape.b_shape + h @ shape.w_shape.T)


def mixed_hidden_conditional(params, v, m):
    """Bernoulli means p(h_j = 1 | v, m) of the mixed RBM.

    Args:
        params (MixedRbmParams): Model parameters.
        v (array_like): Appearance pixels in (0, 1), shape (..., n_vis).
        m (array_like): Binary mask, shape (..., n_vis).

    Returns:
        ndarray: Hidden means, shape (..., n_hid).
    """
    m = check_binary(m)
    _check_last("mixed_hidden_conditional mask", m, params.shape.n_pix)
    return expit(beta_hidden_input(params.appearance, v) + m @ params.shape.w_shape)


def beta_log_density(alpha, beta, x):
    """Log of the Beta(alpha, beta) density at x, via log-gamma.

    Args:
        alpha (array_like): First shape parameter, at least EPS_BETA.
        beta (array_like): Second shape parameter, at least EPS_BETA.
        x (array_like): Points in (0, 1).

    Returns:
        ndarray: log Beta(x; alpha, beta).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(~(alpha >= EPS_BETA)) or np.any(~(beta >= EPS_BETA)):
        raise DomainError(f"Beta shape parameters must be at least {EPS_BETA}")
    log_x, log_1mx = _log_pixels(x)
    return (
        gammaln(alpha + beta)
        - gammaln(alpha)
        - gammaln(beta)
        + (alpha - 1.0) * log_x
        + (beta - 1.0) * log_1mx
    )


def sample_beta(alpha, beta, rng):
    """Draw Beta samples clamped into [EPS_X, 1 - EPS_X].

    Args:
        alpha (array_like): First shape parameters (> 0).
        beta (array_like): Second shape parameters (> 0).
        rng: numpy Generator or RowStreams.

    Returns:
        ndarray: Samples with the broadcast shape of alpha and beta.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(~(alpha > 0)) or np.any(~(beta > 0)):
        raise DomainError("Beta shape parameters must be positive and finite")
    return np.clip(rng.beta(alpha, beta), EPS_X, 1.0 - EPS_X)


def sample_bernoulli(p, rng):
    """Draw binary samples with success probabilities p.

    Args:
        p (array_like): Probabilities in [0, 1].
        rng: numpy Generator or RowStreams.

    Returns:
        ndarray: float64 array of zeros and ones.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise DomainError("Bernoulli probabilities must lie in [0, 1]")
    return (rng.random(p.shape) < p).astype(np.float64)
