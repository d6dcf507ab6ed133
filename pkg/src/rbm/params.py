#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
RBM Parameters Module for the Masked RBM toolkit
This module defines the parameter containers for the Beta RBM, the binary
shape RBM and the mixed shape+appearance RBM, plus their initializers.

Parameter objects are frozen; updates build new objects so that a sweep can
read them concurrently without locking.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from src.utils.errors import DimensionError, DomainError

# Configure logging
logger = logging.getLogger(__name__)

# Floor for Beta shape parameters
EPS_BETA = 1e-2
# Pixel clamp; 8-bit values are stored as (k + 0.5) / 256
EPS_X = 1.0 / 512.0
INIT_WEIGHT_STD = 0.01
# Upper bound on alpha + beta when moment matching nearly constant pixels
MAX_CONCENTRATION = 1000.0


def _as_matrix(value):
    return np.array(value, dtype=np.float64, copy=True)


@dataclass(frozen=True)
class BetaRbmParams:
    """Parameters of a Beta RBM.

    The energy is
    E(v, h) = -sum_i [(a_i + W1_i h) log v_i + (c_i + W2_i h) log(1 - v_i)] - b.h
    so that v_i | h ~ Beta(1 + a_i + W1_i h, 1 + c_i + W2_i h).

    Attributes:
        w_logv (ndarray): [n_vis, n_hid] coefficients on log v_i.
        w_log1mv (ndarray): [n_vis, n_hid] coefficients on log(1 - v_i).
        a_vis (ndarray): [n_vis] bias on log v_i.
        c_vis (ndarray): [n_vis] bias on log(1 - v_i).
        b_hid (ndarray): [n_hid] hidden bias.
    """

    w_logv: np.ndarray
    w_log1mv: np.ndarray
    a_vis: np.ndarray
    c_vis: np.ndarray
    b_hid: np.ndarray

    BLOCKS = ("w_logv", "w_log1mv", "a_vis", "c_vis", "b_hid")

    def __post_init__(self):
        for name in self.BLOCKS:
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))
        n_vis, n_hid = self.w_logv.shape
        expected = {
            "w_logv": (n_vis, n_hid),
            "w_log1mv": (n_vis, n_hid),
            "a_vis": (n_vis,),
            "c_vis": (n_vis,),
            "b_hid": (n_hid,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"BetaRbmParams.{name}", shape, getattr(self, name).shape)
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"BetaRbmParams.{name} contains non-finite values")

    @property
    def n_vis(self):
        return self.w_logv.shape[0]

    @property
    def n_hid(self):
        return self.w_logv.shape[1]

    @classmethod
    def zeros(cls, n_vis, n_hid):
        return cls(
            w_logv=np.zeros((n_vis, n_hid)),
            w_log1mv=np.zeros((n_vis, n_hid)),
            a_vis=np.zeros(n_vis),
            c_vis=np.zeros(n_vis),
            b_hid=np.zeros(n_hid),
        )

    def blocks(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.BLOCKS}

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BinaryShapeParams:
    """Parameters of the binary mask block.

    E_Bin(m, h) = -(m^T W h + b^T m); the hidden bias lives in the paired
    appearance block.

    Attributes:
        w_shape (ndarray): [n_pix, n_hid] weights.
        b_shape (ndarray): [n_pix] mask biases.
    """

    w_shape: np.ndarray
    b_shape: np.ndarray

    BLOCKS = ("w_shape", "b_shape")

    def __post_init__(self):
        object.__setattr__(self, "w_shape", _as_matrix(self.w_shape))
        object.__setattr__(self, "b_shape", _as_matrix(self.b_shape))
        if self.w_shape.ndim != 2:
            raise DimensionError("BinaryShapeParams.w_shape", ("n_pix", "n_hid"), self.w_shape.shape)
        if self.b_shape.shape != (self.w_shape.shape[0],):
            raise DimensionError("BinaryShapeParams.b_shape", (self.w_shape.shape[0],), self.b_shape.shape)
        for name in self.BLOCKS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"BinaryShapeParams.{name} contains non-finite values")

    @property
    def n_pix(self):
        return self.w_shape.shape[0]

    @property
    def n_hid(self):
        return self.w_shape.shape[1]

    @classmethod
    def zeros(cls, n_pix, n_hid):
        return cls(w_shape=np.zeros((n_pix, n_hid)), b_shape=np.zeros(n_pix))

    def blocks(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.BLOCKS}


@dataclass(frozen=True)
class MixedRbmParams:
    """Joint shape+appearance RBM with one shared hidden layer.

    E_mixed(v, m, h) = E_Bin(m, h) + E_Beta(v, h).
    """

    shape: BinaryShapeParams
    appearance: BetaRbmParams

    def __post_init__(self):
        if self.shape.n_hid != self.appearance.n_hid:
            raise DimensionError("MixedRbmParams hidden layer", (self.appearance.n_hid,), (self.shape.n_hid,))
        if self.shape.n_pix != self.appearance.n_vis:
            raise DimensionError("MixedRbmParams visible layer", (self.appearance.n_vis,), (self.shape.n_pix,))

    @property
    def n_vis(self):
        return self.appearance.n_vis

    @property
    def n_hid(self):
        return self.appearance.n_hid

    @classmethod
    def zeros(cls, n_pix, n_hid):
        return cls(shape=BinaryShapeParams.zeros(n_pix, n_hid), appearance=BetaRbmParams.zeros(n_pix, n_hid))

    def blocks(self) -> Dict[str, np.ndarray]:
        blocks = dict(self.appearance.blocks())
        blocks.update(self.shape.blocks())
        return blocks

    def replace(self, **changes):
        """Replace individual blocks by name (e.g. w_shape=..., a_vis=...)."""
        shape_changes = {k: v for k, v in changes.items() if k in BinaryShapeParams.BLOCKS}
        appearance_changes = {k: v for k, v in changes.items() if k in BetaRbmParams.BLOCKS}
        unknown = set(changes) - set(shape_changes) - set(appearance_changes)
        if unknown:
            raise KeyError(f"Unknown parameter blocks: {sorted(unknown)}")
        return MixedRbmParams(
            shape=dataclasses.replace(self.shape, **shape_changes),
            appearance=dataclasses.replace(self.appearance, **appearance_changes),
        )


@dataclass(frozen=True)
class HiddenState:
    """Binary hidden sample h with optional Bernoulli means q."""

    h: np.ndarray
    q: Optional[np.ndarray] = None


@dataclass
class GradientEstimate:
    """Positive-minus-negative sufficient statistics, per parameter block.

    Attributes:
        blocks (dict): Arrays keyed by parameter block name, already divided
            by the batch size (positive) and chain count (negative).
        batch_size (int): Number of positive examples used.
    """

    blocks: Dict[str, np.ndarray]
    batch_size: int

    def vector(self, names=None):
        """Concatenate the selected blocks into one flat vector."""
        names = names or sorted(self.blocks)
        return np.concatenate([np.ravel(self.blocks[name]) for name in names])


def moment_matched_biases(data):
    """Per-pixel Beta biases matching the data mean and variance.

    Args:
        data (ndarray): [n, n_vis] pixels in (0, 1).

    Returns:
        tuple: (a_vis, c_vis) such that Beta(1 + a, 1 + c) has the data moments.
    """
    data = np.asarray(data, dtype=np.float64)
    mean = np.clip(data.mean(axis=0), EPS_X, 1.0 - EPS_X)
    var = data.var(axis=0)
    # alpha + beta = mean (1 - mean) / var - 1
    with np.errstate(divide="ignore"):
        concentration = np.where(var > 0, mean * (1.0 - mean) / np.maximum(var, 1e-12) - 1.0, MAX_CONCENTRATION)
    concentration = np.clip(concentration, 2.0 * EPS_BETA / np.minimum(mean, 1.0 - mean), MAX_CONCENTRATION)
    alpha = mean * concentration
    beta = (1.0 - mean) * concentration
    return alpha - 1.0, beta - 1.0


def init_beta_params(data, n_hid, rng):
    """Initialize a Beta RBM for the given data.

    Weights are drawn from Normal(0, 0.01^2); visible biases are moment
    matched to the data; the hidden bias starts at zero.

    Args:
        data (ndarray): [n, n_vis] training pixels, or None for a Beta(1, 1) prior.
        n_hid (int): Number of hidden units.
        rng (numpy.random.Generator): Random stream.

    Returns:
        BetaRbmParams: The initial parameters.
    """
    if data is None or len(data) == 0:
        raise DomainError("Cannot initialize a Beta RBM without data")
    data = np.asarray(data, dtype=np.float64)
    n_vis = data.shape[1]
    a_vis, c_vis = moment_matched_biases(data)
    logger.debug(f"Initializing Beta RBM with {n_vis} visible and {n_hid} hidden units")
    return BetaRbmParams(
        w_logv=rng.normal(0.0, INIT_WEIGHT_STD, size=(n_vis, n_hid)),
        w_log1mv=rng.normal(0.0, INIT_WEIGHT_STD, size=(n_vis, n_hid)),
        a_vis=a_vis,
        c_vis=c_vis,
        b_hid=np.zeros(n_hid),
    )


def init_mixed_params(n_pix, n_hid, rng, appearance=None, data=None):
    """Initialize the foreground mixed RBM.

    Args:
        n_pix (int): Number of pixels.
        n_hid (int): Number of hidden units (ignored if appearance is given).
        rng (numpy.random.Generator): Random stream.
        appearance (BetaRbmParams, optional): Pretrained appearance block.
        data (ndarray, optional): Images used to moment-match a fresh
            appearance block when no pretrained block is given.

    Returns:
        MixedRbmParams: Shape biases at logit(0.5) = 0, small random weights.
    """
    if appearance is None:
        if data is not None and len(data):
            appearance = init_beta_params(data, n_hid, rng)
        else:
            appearance = BetaRbmParams(
                w_logv=rng.normal(0.0, INIT_WEIGHT_STD, size=(n_pix, n_hid)),
                w_log1mv=rng.normal(0.0, INIT_WEIGHT_STD, size=(n_pix, n_hid)),
                a_vis=np.zeros(n_pix),
                c_vis=np.zeros(n_pix),
                b_hid=np.zeros(n_hid),
            )
    else:
        logger.info(f"Initializing foreground appearance from a pretrained Beta RBM ({appearance.n_hid} hidden units)")
    shape = BinaryShapeParams(
        w_shape=rng.normal(0.0, INIT_WEIGHT_STD, size=(appearance.n_vis, appearance.n_hid)),
        b_shape=np.zeros(appearance.n_vis),
    )
    if shape.n_pix != n_pix:
        raise DimensionError("init_mixed_params appearance", (n_pix,), (shape.n_pix,))
    return MixedRbmParams(shape=shape, appearance=appearance)
