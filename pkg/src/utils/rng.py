#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Random Stream Module for the Masked RBM toolkit
This module derives reproducible per-item random streams from a global seed.

Every stochastic operation takes an explicit generator. Batched code uses
RowStreams so that each row (image) draws from its own stream and results
do not depend on how images are grouped or how many workers run.
"""

import logging

import numpy as np

# Configure logging
logger = logging.getLogger(__name__)

# Stream purposes, used as the first spawn key
PURPOSE_DATA = 1
PURPOSE_INIT = 2
PURPOSE_ESTEP = 3
PURPOSE_SEGMENT = 4
PURPOSE_MODEL = 5
PURPOSE_EVAL = 6


def make_rng(seed, *keys):
    """Create a generator for (seed, keys).

    Args:
        seed (int): Global seed.
        *keys (int): Non-negative integers identifying the stream.

    Returns:
        numpy.random.Generator: An independent generator.
    """
    if seed is None or int(seed) < 0:
        raise ValueError(f"Seed must be a non-negative integer, got {seed}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)


class RowStreams:
    """A bundle of generators, one per leading-axis row.

    Exposes the subset of the numpy Generator interface used by the samplers
    (``random`` and ``beta``) so the samplers accept either a Generator or a
    RowStreams object.
    """

    def __init__(self, generators):
        self.generators = list(generators)

    @classmethod
    def for_items(cls, seed, purpose, indices, *extra):
        """Create streams for the given item indices.

        Args:
            seed (int): Global seed.
            purpose (int): One of the PURPOSE_* constants.
            indices (iterable): Item indices (e.g. image indices).
            *extra (int): Additional keys such as the epoch.

        Returns:
            RowStreams: One stream per index.
        """
        return cls(make_rng(seed, purpose, *extra, int(i)) for i in indices)

    def __len__(self):
        return len(self.generators)

    def __getitem__(self, index):
        return self.generators[index]

    def _check_rows(self, n_rows):
        if n_rows != len(self.generators):
            raise ValueError(f"Expected {len(self.generators)} rows, got {n_rows}")

    def random(self, size):
        size = tuple(np.atleast_1d(size))
        self._check_rows(size[0])
        return np.stack([g.random(size[1:]) for g in self.generators])

    def beta(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        self._check_rows(a.shape[0])
        return np.stack([g.beta(a[i], b[i]) for i, g in enumerate(self.generators)])
