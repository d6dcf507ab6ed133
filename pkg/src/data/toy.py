#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Toy Data Module for the Masked RBM toolkit
This module generates the two-class toy dataset: textured rectangles and
round shapes placed at random positions on natural or procedural
backgrounds, with ground-truth masks.

Rectangles always carry the stripe texture and round shapes the
checkerboard texture, so the classes differ in both shape and appearance.
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np

from src.data.dataset import load_photo_pool, random_crop, write_dataset
from src.data.images import dequantize, quantize, smoothed_noise
from src.utils.config import ConfigMixin
from src.utils.errors import ConfigError
from src.utils.rng import PURPOSE_DATA, make_rng

# Configure logging
logger = logging.getLogger(__name__)

GENERATOR_VERSION = "toy-1"
LABELS = ("rectangle", "round")
RECTANGLE_SIDES = (4, 6, 8)
# (horizontal radius, vertical radius): three disks and one ellipse
ROUND_KINDS = ((3, 3), (4, 4), (5, 5), (5, 3))
STRIPE_PERIOD = 4

# Stream keys below PURPOSE_DATA
SPLIT_KEYS = {"train": 10, "test": 11}
PAIR_OBJECT_KEY = 20
PAIR_BACKGROUND_KEYS = (21, 22)


@dataclass
class ToyConfig(ConfigMixin):
    """Settings of the toy generator."""

    patch_size: int = 16
    n_train: int = 2000
    n_test: int = 1000
    # None selects procedural smoothed-noise backgrounds
    background_dir: Optional[str] = None
    seed: int = 0
    rectangle_fraction: float = 0.5

    def validate(self):
        largest = max(max(RECTANGLE_SIDES), 2 * max(max(k) for k in ROUND_KINDS) + 1)
        if self.patch_size <= largest:
            raise ConfigError(f"patch_size must exceed {largest} so every object fits, got {self.patch_size}")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("n_train and n_test must be non-negative")
        if not 0.0 <= self.rectangle_fraction <= 1.0:
            raise ConfigError(f"rectangle_fraction must lie in [0, 1], got {self.rectangle_fraction}")
        if self.seed is None or self.seed < 0:
            raise ConfigError("the toy generator needs a non-negative seed")
        return self


@dataclass
class ToyExample:
    """One generated example.

    Attributes:
        image (ndarray): [H, W] pixels in [1/512, 1 - 1/512].
        gt_mask (ndarray): [H, W] binary ground truth.
        label (str): "rectangle" or "round".
        bbox (tuple): (top, left, height, width) of the object.
    """

    image: np.ndarray
    gt_mask: np.ndarray
    label: str
    bbox: Tuple[int, int, int, int]


def _gray_pair(rng):
    return rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)


def stripe_texture(size, rng):
    """Diagonal stripes with random phase and two random gray levels."""
    dark, light = _gray_pair(rng)
    phase = int(rng.integers(0, STRIPE_PERIOD))
    rows, cols = np.indices((size, size))
    return np.where((rows + cols + phase) % STRIPE_PERIOD < STRIPE_PERIOD // 2, dark, light)


def checker_texture(size, rng):
    """2x2-cell checkerboard with random phase and two random gray levels."""
    dark, light = _gray_pair(rng)
    phase = int(rng.integers(0, 2))
    rows, cols = np.indices((size, size))
    return np.where((rows // 2 + cols // 2 + phase) % 2 == 0, dark, light)


def render_object(cfg, rng):
    """Draw one object: label, mask, texture and bounding box.

    Returns:
        tuple: (label, mask uint8 [H, W], texture float [H, W], bbox).
    """
    size = cfg.patch_size
    mask = np.zeros((size, size), dtype=np.uint8)
    if rng.random() < cfg.rectangle_fraction:
        label = LABELS[0]
        width = int(rng.choice(RECTANGLE_SIDES))
        height = int(rng.choice(RECTANGLE_SIDES))
        top = int(rng.integers(0, size - height + 1))
        left = int(rng.integers(0, size - width + 1))
        mask[top : top + height, left : left + width] = 1
        texture = stripe_texture(size, rng)
    else:
        label = LABELS[1]
        rx, ry = ROUND_KINDS[int(rng.integers(0, len(ROUND_KINDS)))]
        height, width = 2 * ry + 1, 2 * rx + 1
        top = int(rng.integers(0, size - height + 1))
        left = int(rng.integers(0, size - width + 1))
        cv2.ellipse(mask, (left + rx, top + ry), (rx, ry), 0, 0, 360, 1, -1)
        texture = checker_texture(size, rng)
    return label, mask, texture, (top, left, height, width)


def render_background(cfg, rng, pool=None):
    """A background patch: a crop from the photo pool or smoothed noise."""
    size = cfg.patch_size
    if pool is not None:
        return dequantize(random_crop(pool, size, rng))
    sigma = rng.uniform(1.0, 3.0)
    level = rng.uniform(0.3, 0.7)
    contrast = rng.uniform(0.05, 0.2)
    return np.clip(level + contrast * smoothed_noise((size, size), rng, sigma), 0.0, 1.0)


def compose(texture, mask, background):
    """Paste the texture into the background where the mask is set."""
    return dequantize(quantize(np.where(mask > 0, texture, background)))


def generate_examples(cfg, split, n, pool=None):
    """Generate n examples of a split in memory.

    Args:
        cfg (ToyConfig): Generator settings.
        split (str): "train" or "test".
        n (int): Number of examples.
        pool (list, optional): Photo pool for natural backgrounds.

    Returns:
        list: ToyExample objects; example i depends only on (seed, split, i).
    """
    examples = []
    for index in range(n):
        rng = make_rng(cfg.seed, PURPOSE_DATA, SPLIT_KEYS[split], index)
        label, mask, texture, bbox = render_object(cfg, rng)
        background = render_background(cfg, rng, pool)
        examples.append(ToyExample(compose(texture, mask, background), mask, label, bbox))
    return examples


def _metadata(cfg, **extra):
    metadata = {
        "generator": GENERATOR_VERSION,
        "patch_size": [cfg.patch_size, cfg.patch_size],
        "seed": cfg.seed,
        "background": cfg.background_dir or "procedural",
        "rectangle_fraction": cfg.rectangle_fraction,
    }
    metadata.update(extra)
    return metadata


def _write_examples(directory, examples, metadata):
    if examples:
        images = np.stack([e.image for e in examples])
        masks = np.stack([e.gt_mask for e in examples])
    else:
        images = np.zeros((0, metadata["patch_size"][0], metadata["patch_size"][1]))
        masks = None
    return write_dataset(directory, images, masks=masks, labels=[e.label for e in examples], metadata=metadata)


def _photo_pool(cfg):
    return None if cfg.background_dir is None else load_photo_pool(cfg.background_dir, cfg.patch_size)


def gen_toy(cfg, out_dir):
    """Generate the train and test splits on disk.

    Args:
        cfg (ToyConfig): Generator settings.
        out_dir (str): Output directory; receives train/ and test/.

    Returns:
        dict: Split name to DatasetManifest.
    """
    cfg.validate()
    pool = _photo_pool(cfg)
    manifests = {}
    for split, n in (("train", cfg.n_train), ("test", cfg.n_test)):
        logger.info(f"Generating {n} {split} examples...")
        examples = generate_examples(cfg, split, n, pool)
        manifests[split] = _write_examples(os.path.join(out_dir, split), examples, _metadata(cfg, split=split))
    return manifests


def gen_match_pairs(cfg, n_objects, out_dir=None):
    """Composite the same objects onto two independent background sets.

    Object i is identical in set "a" and set "b"; only the background
    differs.

    Returns:
        tuple: (examples_a, examples_b), lists of ToyExample.
    """
    cfg.validate()
    pool = _photo_pool(cfg)
    sets = ([], [])
    for index in range(n_objects):
        label, mask, texture, bbox = render_object(cfg, make_rng(cfg.seed, PURPOSE_DATA, PAIR_OBJECT_KEY, index))
        for which, key in enumerate(PAIR_BACKGROUND_KEYS):
            background = render_background(cfg, make_rng(cfg.seed, PURPOSE_DATA, key, index), pool)
            sets[which].append(ToyExample(compose(texture, mask, background), mask, label, bbox))
    if out_dir is not None:
        for name, examples in zip(("a", "b"), sets):
            _write_examples(os.path.join(out_dir, name), examples, _metadata(cfg, split=f"pairs-{name}"))
    return sets
