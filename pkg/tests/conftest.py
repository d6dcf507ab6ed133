#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Shared fixtures for the Masked RBM toolkit tests."""

import os
import sys

import numpy as np
import pytest

# Add the repository root to the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.rbm.params import BetaRbmParams, BinaryShapeParams, MixedRbmParams


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical test (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_beta_params(rng, n_vis, n_hid, scale=0.5):
    return BetaRbmParams(
        w_logv=rng.normal(0.0, scale, (n_vis, n_hid)),
        w_log1mv=rng.normal(0.0, scale, (n_vis, n_hid)),
        a_vis=rng.uniform(0.0, 2.0, n_vis),
        c_vis=rng.uniform(0.0, 2.0, n_vis),
        b_hid=rng.normal(0.0, scale, n_hid),
    )


def random_mixed_params(rng, n_vis, n_hid, scale=0.5):
    shape = BinaryShapeParams(w_shape=rng.normal(0.0, scale, (n_vis, n_hid)), b_shape=rng.normal(0.0, scale, n_vis))
    return MixedRbmParams(shape=shape, appearance=random_beta_params(rng, n_vis, n_hid, scale))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_beta(rng):
    return random_beta_params(rng, 6, 3)


@pytest.fixture
def small_mixed(rng):
    return random_mixed_params(rng, 6, 3)


@pytest.fixture
def pixels(rng):
    return rng.uniform(0.05, 0.95, size=(4, 6))
