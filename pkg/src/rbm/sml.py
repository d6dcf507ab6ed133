#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Stochastic Maximum Likelihood Module for the Masked RBM toolkit
This module handles persistent chains, SML gradient estimation and
parameter updates for the Beta RBM and the mixed shape+appearance RBM.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.rbm.conditionals import (
    beta_hidden_conditional,
    beta_hidden_input,
    beta_visible_conditional,
    beta_visible_means,
    binary_mask_conditional,
    check_binary,
    check_pixels,
    mixed_hidden_conditional,
    sample_bernoulli,
    sample_beta,
)
from src.rbm.params import EPS_X, BetaRbmParams, GradientEstimate, MixedRbmParams
from src.utils.errors import DimensionError, DivergenceError, DomainError

# Configure logging
logger = logging.getLogger(__name__)

WEIGHT_BLOCKS = ("w_logv", "w_log1mv", "w_shape")


@dataclass(frozen=True)
class PersistentChains:
    """Fantasy particles for the SML negative phase of one RBM.

    Attributes:
        visibles (ndarray): [n_chains, n_vis] continuous visibles.
        hidden (ndarray): [n_chains, n_hid] last binary hidden sample.
        masks (ndarray, optional): [n_chains, n_vis] binary masks (mixed RBM only).
    """

    visibles: np.ndarray
    hidden: np.ndarray
    masks: Optional[np.ndarray] = None

    @property
    def n_chains(self):
        return self.visibles.shape[0]

    @classmethod
    def from_noise(cls, n_chains, n_vis, n_hid, rng, with_masks=False):
        """Start chains from uniform noise (and fair-coin masks)."""
        if n_chains < 1:
            raise DomainError(f"Need at least one persistent chain, got {n_chains}")
        visibles = rng.uniform(EPS_X, 1.0 - EPS_X, size=(n_chains, n_vis))
        masks = (rng.random((n_chains, n_vis)) < 0.5).astype(np.float64) if with_masks else None
        return cls(visibles=visibles, hidden=np.zeros((n_chains, n_hid)), masks=masks)

    @classmethod
    def from_data(cls, data, n_chains, n_hid, rng, masks=None):
        """Start chains from randomly chosen training examples."""
        if n_chains < 1:
            raise DomainError(f"Need at least one persistent chain, got {n_chains}")
        rows = rng.integers(0, len(data), size=n_chains)
        return cls(
            visibles=np.array(data[rows], dtype=np.float64),
            hidden=np.zeros((n_chains, n_hid)),
            masks=None if masks is None else np.array(masks[rows], dtype=np.float64),
        )


@dataclass(frozen=True)
class SmlHyper:
    """Learning rates per block and L2 weight decay."""

    lr_appearance: float = 1e-3
    lr_shape: float = 1e-2
    lr_bias: float = 1e-2
    weight_decay: float = 1e-4

    @classmethod
    def from_config(cls, config):
        return cls(
            lr_appearance=config.lr_appearance,
            lr_shape=config.lr_shape,
            lr_bias=config.lr_bias,
            weight_decay=config.weight_decay,
        )

    def learning_rate(self, block):
        if block in ("w_logv", "w_log1mv"):
            return self.lr_appearance
        if block == "w_shape":
            return self.lr_shape
        return self.lr_bias


def beta_statistics(v, hq):
    """Batch-averaged sufficient statistics of the Beta block.

    Args:
        v (ndarray): [n, n_vis] pixels.
        hq (ndarray): [n, n_hid] hidden means (or samples).

    Returns:
        dict: Statistics for w_logv, w_log1mv, a_vis, c_vis and b_hid.
    """
    n = v.shape[0]
    log_v, log_1mv = np.log(v), np.log1p(-v)
    return {
        "w_logv": log_v.T @ hq / n,
        "w_log1mv": log_1mv.T @ hq / n,
        "a_vis": log_v.mean(axis=0),
        "c_vis": log_1mv.mean(axis=0),
        "b_hid": hq.mean(axis=0),
    }


def shape_statistics(m, hq):
    """Batch-averaged sufficient statistics of the shape block."""
    n = m.shape[0]
    return {"w_shape": m.T @ hq / n, "b_shape": m.mean(axis=0)}


def _check_batch(v, n_vis, what):
    v = check_pixels(np.atleast_2d(v))
    if v.shape[0] == 0:
        raise DomainError(f"{what} batch is empty")
    if v.shape[1] != n_vis:
        raise DimensionError(what, (v.shape[0], n_vis), v.shape)
    return v


def _difference(positive, negative, batch_size, params):
    blocks = {}
    for name, value in positive.items():
        diff = value - negative[name]
        if not np.all(np.isfinite(diff)):
            logger.error(f"Gradient overflow in parameter block '{name}'")
            raise DivergenceError(name, last_good=params)
        blocks[name] = diff
    return GradientEstimate(blocks=blocks, batch_size=batch_size)


def advance_beta_chains(params, chains, rng):
    """One full Gibbs step h | v, v | h on Beta RBM chains."""
    h = sample_bernoulli(beta_hidden_conditional(params, chains.visibles), rng)
    alpha, beta = beta_visible_conditional(params, h)
    return PersistentChains(visibles=sample_beta(alpha, beta, rng), hidden=h)


def advance_mixed_chains(params, chains, rng):
    """One full Gibbs step h | (v, m), then (v, m) | h on mixed RBM chains."""
    if chains.masks is None:
        raise DomainError("Mixed RBM chains need masks")
    h = sample_bernoulli(mixed_hidden_conditional(params, chains.visibles, chains.masks), rng)
    alpha, beta = beta_visible_conditional(params.appearance, h)
    visibles = sample_beta(alpha, beta, rng)
    masks = sample_bernoulli(binary_mask_conditional(params.shape, h), rng)
    return PersistentChains(visibles=visibles, hidden=h, masks=masks)


def sml_gradient(params, positive, chains, rng):
    """Estimate the log-likelihood gradient and advance the chains one step.

    Args:
        params (BetaRbmParams or MixedRbmParams): Current parameters.
        positive: Visible data [batch, n_vis] for a Beta RBM, or a tuple
            (visibles, masks) for a mixed RBM.
        chains (PersistentChains): Fantasy particles.
        rng (numpy.random.Generator): Random stream.

    Returns:
        tuple: (GradientEstimate, advanced PersistentChains).
    """
    if isinstance(params, MixedRbmParams):
        v_pos, m_pos = positive
        v_pos = _check_batch(v_pos, params.n_vis, "positive visibles")
        m_pos = check_binary(np.atleast_2d(m_pos))
        if m_pos.shape != v_pos.shape:
            raise DimensionError("positive masks", v_pos.shape, m_pos.shape)
        hq_pos = mixed_hidden_conditional(params, v_pos, m_pos)
        chains = advance_mixed_chains(params, chains, rng)
        hq_neg = mixed_hidden_conditional(params, chains.visibles, chains.masks)
        pos = beta_statistics(v_pos, hq_pos)
        pos.update(shape_statistics(m_pos, hq_pos))
        neg = beta_statistics(chains.visibles, hq_neg)
        neg.update(shape_statistics(chains.masks, hq_neg))
    elif isinstance(params, BetaRbmParams):
        v_pos = _check_batch(positive, params.n_vis, "positive visibles")
        hq_pos = beta_hidden_conditional(params, v_pos)
        chains = advance_beta_chains(params, chains, rng)
        hq_neg = beta_hidden_conditional(params, chains.visibles)
        pos = beta_statistics(v_pos, hq_pos)
        neg = beta_statistics(chains.visibles, hq_neg)
    else:
        raise TypeError(f"Unsupported parameter type: {type(params).__name__}")
    return _difference(pos, neg, v_pos.shape[0], params), chains


def apply_gradient(params, gradient, hyper):
    """Take one ascent step: theta += lr * (gradient - decay * theta).

    Weight decay applies to weight matrices only.

    Returns:
        Parameters of the same type as params.
    """
    changes = {}
    current = params.blocks()
    for name, grad in gradient.blocks.items():
        value = current[name]
        step = grad - hyper.weight_decay * value if name in WEIGHT_BLOCKS else grad
        updated = value + hyper.learning_rate(name) * step
        if not np.all(np.isfinite(updated)):
            logger.error(f"Parameter block '{name}' diverged")
            raise DivergenceError(name, last_good=params)
        changes[name] = updated
    return params.replace(**changes)


def sml_update(params, positive, chains, hyper, rng):
    """One SML iteration: gradient estimate, chain advance and parameter step.

    Returns:
        tuple: (updated params, advanced chains).
    """
    gradient, chains = sml_gradient(params, positive, chains, rng)
    return apply_gradient(params, gradient, hyper), chains


def free_energy_beta(params, v):
    """Free energy F(v) = -log sum_h exp(-E_Beta(v, h))."""
    v = check_pixels(v)
    visible_term = np.log(v) @ params.a_vis + np.log1p(-v) @ params.c_vis
    return -visible_term - np.sum(np.logaddexp(0.0, beta_hidden_input(params, v)), axis=-1)


def free_energy_mixed(params, v, m):
    """Free energy F(v, m) = -log sum_h exp(-E_mixed(v, m, h))."""
    v = check_pixels(v)
    m = check_binary(m)
    appearance = params.appearance
    visible_term = np.log(v) @ appearance.a_vis + np.log1p(-v) @ appearance.c_vis + m @ params.shape.b_shape
    hidden_input = beta_hidden_input(appearance, v) + m @ params.shape.w_shape
    return -visible_term - np.sum(np.logaddexp(0.0, hidden_input), axis=-1)


def reconstruction_error(params, v):
    """Mean squared error between v and its mean-field reconstruction."""
    if isinstance(params, MixedRbmParams):
        params = params.appearance
    v = check_pixels(np.atleast_2d(v))
    hq = beta_hidden_conditional(params, v)
    return float(np.mean((v - beta_visible_means(params, hq)) ** 2))
