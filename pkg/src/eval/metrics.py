#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Metrics Module for the Masked RBM toolkit
This module handles segmentation accuracy, the random-mask control, the
hidden-code matching rate and the reports they produce.
"""

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.stats import binomtest

from src.utils.errors import DimensionError, DomainError
from src.utils.rng import PURPOSE_EVAL, make_rng

# Configure logging
logger = logging.getLogger(__name__)

REPORT_FIELDS = ["metric", "value", "n", "ci_low", "ci_high", "config_hash", "model_hash"]


@dataclass
class EvalReport:
    """One evaluated metric with its binomial confidence interval.

    Attributes:
        metric (str): Metric name.
        value (float): Metric value.
        n (int): Number of Bernoulli trials behind the value (pixels, images).
        ci (tuple): 95% Wilson interval for proportions, else (nan, nan).
        provenance (dict): config_hash, model_hash and any extra details.
    """

    metric: str
    value: float
    n: int
    ci: Tuple[float, float] = (float("nan"), float("nan"))
    provenance: Dict = field(default_factory=dict)

    def row(self):
        return {
            "metric": self.metric,
            "value": self.value,
            "n": self.n,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "config_hash": self.provenance.get("config_hash", ""),
            "model_hash": self.provenance.get("model_hash", ""),
        }

    def to_dict(self):
        return asdict(self)


def binomial_interval(successes, n, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (float("nan"), float("nan"))
    interval = binomtest(int(successes), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return (float(interval.low), float(interval.high))


def proportion_report(metric, value, n, provenance=None):
    """EvalReport for a proportion measured over n trials."""
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{metric} = {value} is not a proportion")
    successes = int(round(value * n))
    return EvalReport(metric=metric, value=float(value), n=int(n), ci=binomial_interval(successes, n), provenance=dict(provenance or {}))


def _binary(mask):
    mask = np.asarray(mask)
    return mask > 0.5 if mask.dtype.kind == "f" else mask.astype(bool)


def seg_accuracy(pred_mask, gt_mask):
    """Fraction of pixels where the predicted mask agrees with the ground truth.

    For batches of shape [n_images, ...] the per-image accuracies are
    averaged; all images have the same pixel count so this equals the
    pooled pixel accuracy.
    """
    pred = _binary(pred_mask)
    gt = _binary(gt_mask)
    if pred.shape != gt.shape:
        raise DimensionError("predicted mask", gt.shape, pred.shape)
    if pred.size == 0:
        raise DomainError("Cannot score an empty mask")
    return float(np.mean(pred == gt))


def seg_accuracy_per_image(pred_masks, gt_masks):
    """Accuracy of each image in a batch."""
    pred = _binary(pred_masks)
    gt = _binary(gt_masks)
    if pred.shape != gt.shape:
        raise DimensionError("predicted masks", gt.shape, pred.shape)
    return np.mean((pred == gt).reshape(pred.shape[0], -1), axis=1)


def mask_iou(pred_masks, gt_masks):
    """Mean intersection-over-union; an image with an empty union scores 1."""
    pred = _binary(pred_masks).reshape(len(pred_masks), -1)
    gt = _binary(gt_masks).reshape(len(gt_masks), -1)
    if pred.shape != gt.shape:
        raise DimensionError("predicted masks", gt.shape, pred.shape)
    intersection = np.sum(pred & gt, axis=1)
    union = np.sum(pred | gt, axis=1)
    scores = np.where(union > 0, intersection / np.maximum(union, 1), 1.0)
    return float(np.mean(scores))


def derangement(n, rng):
    """A uniformly random cyclic permutation with no fixed point (Sattolo)."""
    if n < 2:
        raise DomainError(f"A derangement needs at least 2 items, got {n}")
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def random_mask_control(masks, gt_masks, seed, provenance=None):
    """Re-assign inferred masks to other images and re-score them.

    Args:
        masks (ndarray): [n, ...] inferred masks, mask i inferred on image i.
        gt_masks (ndarray): [n, ...] ground-truth masks.
        seed (int): Seed of the derangement.
        provenance (dict, optional): Hashes for the report.

    Returns:
        EvalReport: value is the permuted accuracy; provenance also carries
        the unpermuted accuracy and the paired delta (permuted - original).
    """
    masks = np.asarray(masks)
    gt_masks = np.asarray(gt_masks)
    if masks.shape != gt_masks.shape:
        raise DimensionError("inferred masks", gt_masks.shape, masks.shape)
    n = masks.shape[0]
    if n < 2:
        raise DomainError(f"The random-mask control needs at least 2 images, got {n}")
    perm = derangement(n, make_rng(seed, PURPOSE_EVAL, 1))
    original = seg_accuracy_per_image(masks, gt_masks)
    permuted = seg_accuracy_per_image(masks[perm], gt_masks)
    delta = permuted - original
    details = dict(provenance or {})
    details.update(
        {
            "accuracy": float(original.mean()),
            "delta": float(delta.mean()),
            "delta_std": float(delta.std(ddof=1)),
            "seed": seed,
        }
    )
    logger.info(f"Random-mask control: {original.mean():.4f} -> {permuted.mean():.4f} (delta {delta.mean():+.4f})")
    return proportion_report("permuted_seg_accuracy", float(permuted.mean()), masks[0].size * n, details)


def nearest_neighbours(features_a, features_b):
    """Index of the nearest b for every a by RMS difference; ties go to the lowest index."""
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError("features_b", a.shape, b.shape)
    rms = np.sqrt(np.mean((a[:, None, :] - b[None, :, :]) ** 2, axis=-1))
    return np.argmin(rms, axis=1)


def match_rate(features_a, features_b):
    """Fraction of items whose nearest neighbour in the other set is their own counterpart."""
    a = np.asarray(features_a)
    if len(a) == 0:
        raise DomainError("match_rate needs at least one item")
    nearest = nearest_neighbours(features_a, features_b)
    return float(np.mean(nearest == np.arange(len(nearest))))


def write_reports_csv(path, reports):
    """Write reports as UTF-8 CSV, one row per metric."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow(report.row())
    logger.info(f"Wrote {len(reports)} report rows to {path}")


def format_report(report):
    """Human-readable one-line rendering of a report."""
    text = f"{report.metric:<28} {report.value:8.4f}  (n={report.n}"
    if np.all(np.isfinite(report.ci)):
        text += f", 95% CI [{report.ci[0]:.4f}, {report.ci[1]:.4f}]"
    text += ")"
    extras = {k: v for k, v in report.provenance.items() if k not in ("config_hash", "model_hash")}
    if extras:
        text += "  " + " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(extras.items()))
    return text


def write_reports_text(path, reports):
    """Write the pretty-printed reports next to the CSV."""
    with open(path, "w", encoding="utf-8") as f:
        for report in reports:
            f.write(format_report(report) + "\n")
