#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Experiments Module for the Masked RBM toolkit
This module extracts hidden representations and runs the recognition-probe
and code-matching comparisons between the masked FG-BG model and a plain
Beta RBM trained on raw images.
"""

import logging

import numpy as np

from src.eval.metrics import match_rate, proportion_report
from src.eval.probe import fit_probe, probe_accuracy
from src.model.inference import segment_batch
from src.rbm.conditionals import beta_hidden_conditional
from src.utils.config import ProbeConfig
from src.utils.errors import ConfigError, DomainError
from src.utils.rng import PURPOSE_EVAL, make_rng

# Configure logging
logger = logging.getLogger(__name__)

SPLIT_STREAM = 2


def extract_fgbg_features(images, fg, bg, out, gibbs_cfg, workers=1):
    """Posterior-mean h^F activations from Gibbs segmentation."""
    return segment_batch(images, fg, bg, out, gibbs_cfg, workers=workers).hf_means


def extract_rbm_features(images, rbm):
    """Hidden conditional means of a plain Beta RBM on the raw images."""
    return beta_hidden_conditional(rbm, np.atleast_2d(images))


def split_per_class(labels, per_class, seed):
    """Pick per_class training examples of each class; the rest is the test set.

    Returns:
        tuple: (train indices, test indices), both sorted.
    """
    labels = np.asarray(labels)
    rng = make_rng(seed, PURPOSE_EVAL, SPLIT_STREAM)
    train = []
    for label in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == label)
        if len(members) <= per_class:
            raise DomainError(f"Class {label!r} has {len(members)} examples; need more than {per_class}")
        train.extend(rng.choice(members, size=per_class, replace=False).tolist())
    train = np.sort(np.asarray(train))
    test = np.setdiff1d(np.arange(len(labels)), train)
    return train, test


def run_probe_experiment(features_by_model, labels, cfg=None, provenance=None):
    """Fit and score one probe per representation on a shared split.

    Args:
        features_by_model (dict): Representation name to [n, k] features.
        labels (sequence): Class label per item.
        cfg (ProbeConfig): Probe settings; cfg.seed selects the split.
        provenance (dict, optional): Hashes copied into every report.

    Returns:
        list: One EvalReport per representation, metric "probe_accuracy/<name>".
    """
    cfg = (cfg or ProbeConfig()).validate()
    if cfg.seed is None:
        raise ConfigError("The probe experiment needs a seed")
    train, test = split_per_class(labels, cfg.per_class, cfg.seed)
    labels = np.asarray(labels)
    reports = []
    for name, features in features_by_model.items():
        features = np.asarray(features)
        probe = fit_probe(features[train], labels[train], cfg)
        accuracy = probe_accuracy(probe, features[test], labels[test])
        details = dict(provenance or {})
        details.update({"train_per_class": cfg.per_class, "final_loss": probe.loss_history[-1]})
        reports.append(proportion_report(f"probe_accuracy/{name}", accuracy, len(test), details))
        logger.info(f"Probe accuracy ({name}): {accuracy:.4f} on {len(test)} test items")
    return reports


def run_match_experiment(pairs_by_model, provenance=None):
    """Score how often each item's code is closest to its own counterpart.

    Args:
        pairs_by_model (dict): Representation name to (features_a, features_b).

    Returns:
        list: One EvalReport per representation, metric "match_rate/<name>".
    """
    reports = []
    for name, (features_a, features_b) in pairs_by_model.items():
        rate = match_rate(features_a, features_b)
        reports.append(proportion_report(f"match_rate/{name}", rate, len(features_a), provenance))
        logger.info(f"Match rate ({name}): {rate:.4f} over {len(features_a)} items")
    return reports
