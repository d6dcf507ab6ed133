#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Probe Module for the Masked RBM toolkit
This module fits the L2-regularized binary logistic probe used to compare
hidden representations.

The probe minimizes mean cross-entropy + lambda * ||w||^2 by full-batch
gradient descent from zero, with step 1/L where L bounds the curvature of
the objective, so the training loss never increases. The bias is not
regularized.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import expit, log_expit

from src.utils.config import ProbeConfig
from src.utils.errors import DimensionError, DomainError

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class LogisticProbe:
    """A fitted binary logistic classifier.

    Attributes:
        weights (ndarray): [n_features] weights.
        bias (float): Intercept.
        classes (tuple): (negative label, positive label).
        loss_history (list): Training objective after each iteration.
    """

    weights: np.ndarray
    bias: float
    classes: tuple
    loss_history: List[float] = field(default_factory=list)

    def decision_function(self, features):
        return np.asarray(features, dtype=np.float64) @ self.weights + self.bias

    def predict(self, features):
        positive = self.decision_function(features) > 0.0
        return np.where(positive, self.classes[1], self.classes[0])


def _objective(features, targets, weights, bias, l2_lambda):
    z = features @ weights + bias
    cross_entropy = -np.mean(targets * log_expit(z) + (1.0 - targets) * log_expit(-z))
    return float(cross_entropy + l2_lambda * weights @ weights)


def _check_features(features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError("probe features", ("n", "n_features"), features.shape)
    if not np.all(np.isfinite(features)):
        raise DomainError("Probe features must be finite")
    return features


def fit_probe(features, labels, cfg=None):
    """Fit the logistic probe.

    Args:
        features (ndarray): [n, n_features] feature vectors.
        labels (sequence): Two distinct labels, any hashable type.
        cfg (ProbeConfig, optional): Regularization and iteration count.

    Returns:
        LogisticProbe: The fitted classifier with its loss history.

    Raises:
        DomainError: If fewer or more than two classes are present.
    """
    cfg = (cfg or ProbeConfig()).validate()
    features = _check_features(features)
    labels = np.asarray(labels)
    if labels.shape != (features.shape[0],):
        raise DimensionError("probe labels", (features.shape[0],), labels.shape)
    classes = tuple(sorted(set(labels.tolist())))
    if len(classes) != 2:
        raise DomainError(f"The probe needs exactly two classes, got {len(classes)}: {classes}")
    targets = (labels == classes[1]).astype(np.float64)

    n = features.shape[0]
    augmented = np.hstack([features, np.ones((n, 1))])
    curvature = np.linalg.eigvalsh(augmented.T @ augmented).max() / (4.0 * n) + 2.0 * cfg.l2_lambda
    step = 1.0 / curvature

    weights = np.zeros(features.shape[1])
    bias = 0.0
    history = []
    for _ in range(cfg.iterations):
        residual = expit(features @ weights + bias) - targets
        weights = weights - step * (features.T @ residual / n + 2.0 * cfg.l2_lambda * weights)
        bias = bias - step * float(residual.mean())
        history.append(_objective(features, targets, weights, bias, cfg.l2_lambda))

    logger.debug(f"Probe fitted on {n} examples, final loss {history[-1]:.6f}")
    return LogisticProbe(weights=weights, bias=bias, classes=classes, loss_history=history)


def probe_accuracy(probe, features, labels):
    """Fraction of examples the probe labels correctly."""
    features = _check_features(features)
    labels = np.asarray(labels)
    if labels.shape != (features.shape[0],):
        raise DimensionError("probe labels", (features.shape[0],), labels.shape)
    if len(labels) == 0:
        raise DomainError("Cannot score the probe on an empty set")
    return float(np.mean(probe.predict(features) == labels))
