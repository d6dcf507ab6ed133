#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Dataset Module for the Masked RBM toolkit
This module handles on-disk datasets: manifests, loading, background patch
cropping and generic crop+resize preparation.

A dataset directory contains ``manifest.csv`` (header ``image,mask,label``),
``dataset.json`` with dataset-level metadata, and the referenced images.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.data.images import (
    center_crop_resize,
    dequantize,
    list_image_files,
    load_photo,
    read_gray_bytes,
    read_mask,
    write_image,
    write_mask,
)
from src.utils.errors import ConfigError, DimensionError, FormatError
from src.utils.rng import PURPOSE_DATA, make_rng

# Configure logging
logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.csv"
METADATA_FILE = "dataset.json"
MANIFEST_HEADER = ["image", "mask", "label"]


@dataclass
class ManifestRow:
    image: str
    mask: Optional[str] = None
    label: Optional[str] = None


@dataclass
class DatasetManifest:
    """Rows of (image, optional mask, optional label) plus metadata."""

    rows: List[ManifestRow] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)


@dataclass
class Dataset:
    """An in-memory dataset.

    Attributes:
        images (ndarray): [n, H, W] pixels in [1/512, 1 - 1/512].
        masks (ndarray, optional): [n, H, W] binary ground-truth masks.
        labels (list, optional): Class label per image.
        metadata (dict): Dataset-level metadata.
    """

    images: np.ndarray
    masks: Optional[np.ndarray] = None
    labels: Optional[List[str]] = None
    metadata: Dict = field(default_factory=dict)

    def __len__(self):
        return self.images.shape[0]

    @property
    def patch_shape(self):
        return tuple(self.images.shape[1:])

    @property
    def n_pix(self):
        return int(np.prod(self.patch_shape))

    def flat_images(self):
        return self.images.reshape(len(self), -1)

    def flat_masks(self):
        return None if self.masks is None else self.masks.reshape(len(self), -1).astype(np.float64)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            images=self.images[indices],
            masks=None if self.masks is None else self.masks[indices],
            labels=None if self.labels is None else [self.labels[i] for i in indices],
            metadata=dict(self.metadata),
        )


def write_manifest(directory, manifest):
    """Write manifest.csv and dataset.json into a directory."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, MANIFEST_FILE), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for row in manifest.rows:
            writer.writerow([row.image, row.mask or "", row.label or ""])
    with open(os.path.join(directory, METADATA_FILE), "w", encoding="utf-8") as f:
        json.dump(manifest.metadata, f, sort_keys=True, indent=2)
        f.write("\n")


def read_manifest(directory):
    """Read and validate a dataset manifest.

    Raises:
        FormatError: If the manifest is malformed or references missing files.
    """
    path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.isfile(path):
        raise FormatError(f"No {MANIFEST_FILE} in {directory}")
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise FormatError(f"{path}: expected header {','.join(MANIFEST_HEADER)}, got {header}")
        for line, record in enumerate(reader, start=2):
            if len(record) != 3:
                raise FormatError(f"{path}:{line}: expected 3 columns, got {len(record)}")
            row = ManifestRow(image=record[0], mask=record[1] or None, label=record[2] or None)
            for name in (row.image, row.mask):
                if name is not None and not os.path.isfile(os.path.join(directory, name)):
                    raise FormatError(f"{path}:{line}: missing file {name}")
            rows.append(row)
    metadata = {}
    metadata_path = os.path.join(directory, METADATA_FILE)
    if os.path.isfile(metadata_path):
        with open(metadata_path, encoding="utf-8") as f:
            metadata = json.load(f)
    return DatasetManifest(rows=rows, metadata=metadata)


def write_dataset(directory, images, masks=None, labels=None, metadata=None):
    """Write images (and optional masks/labels) with a manifest.

    Args:
        directory (str): Output directory.
        images (ndarray): [n, H, W] float pixels or uint8 values.
        masks (ndarray, optional): [n, H, W] binary masks.
        labels (list, optional): Labels per image.
        metadata (dict, optional): Dataset-level metadata.

    Returns:
        DatasetManifest: The manifest written.
    """
    images = np.asarray(images)
    manifest = DatasetManifest(metadata=dict(metadata or {}))
    manifest.metadata.setdefault("n_images", int(images.shape[0]))
    if images.shape[0]:
        manifest.metadata.setdefault("patch_size", [int(s) for s in images.shape[1:]])
    for index, image in enumerate(images):
        image_name = f"images/{index:05d}.pgm"
        write_image(os.path.join(directory, image_name), image)
        mask_name = None
        if masks is not None:
            mask_name = f"masks/{index:05d}.pgm"
            write_mask(os.path.join(directory, mask_name), masks[index])
        label = None if labels is None else str(labels[index])
        manifest.rows.append(ManifestRow(image=image_name, mask=mask_name, label=label))
    write_manifest(directory, manifest)
    logger.info(f"Wrote {len(manifest.rows)} images to {directory}")
    return manifest


def load_dataset(directory):
    """Load a dataset directory into memory.

    Raises:
        DimensionError: If image sizes disagree with each other or the metadata.
    """
    manifest = read_manifest(directory)
    images, masks, labels = [], [], []
    for row in manifest.rows:
        images.append(dequantize(read_gray_bytes(os.path.join(directory, row.image))))
        if row.mask is not None:
            masks.append(read_mask(os.path.join(directory, row.mask)))
        labels.append(row.label)

    expected = manifest.metadata.get("patch_size")
    shapes = {image.shape for image in images}
    if len(shapes) > 1:
        raise DimensionError(f"images in {directory}", images[0].shape, sorted(shapes)[-1])
    if images and expected is not None and tuple(expected) != images[0].shape:
        raise DimensionError(f"images in {directory}", tuple(expected), images[0].shape)
    if masks and len(masks) != len(images):
        raise FormatError(f"{directory}: masks are given for only some images")
    if masks and masks[0].shape != images[0].shape:
        raise DimensionError(f"masks in {directory}", images[0].shape, masks[0].shape)

    shape = tuple(expected) if (not images and expected) else (0, 0)
    return Dataset(
        images=np.stack(images) if images else np.zeros((0,) + shape),
        masks=np.stack(masks) if masks else None,
        labels=labels if any(label is not None for label in labels) else None,
        metadata=manifest.metadata,
    )


def load_photo_pool(image_dir, min_size):
    """Decode all photos in a directory that are at least min_size on each side.

    Raises:
        ConfigError: If the directory is missing or holds no usable image.
    """
    if not image_dir or not os.path.isdir(image_dir):
        raise ConfigError(f"Image directory not found: {image_dir}")
    pool = []
    for path in list_image_files(image_dir):
        photo = load_photo(path)
        if photo is None:
            continue
        if photo.shape[0] < min_size or photo.shape[1] < min_size:
            logger.warning(f"Skipping {path}: {photo.shape[1]}x{photo.shape[0]} is smaller than {min_size}")
            continue
        pool.append(photo)
    if not pool:
        raise ConfigError(f"No usable images of at least {min_size}x{min_size} pixels in {image_dir}")
    return pool


def random_crop(pool, size, rng):
    """Crop a size x size patch from a uniformly chosen pool image (uint8)."""
    photo = pool[int(rng.integers(0, len(pool)))]
    top = int(rng.integers(0, photo.shape[0] - size + 1))
    left = int(rng.integers(0, photo.shape[1] - size + 1))
    return photo[top : top + size, left : left + size]


def crop_patches(image_dir, size, n, seed, out_dir=None):
    """Crop n uniform-random grayscale patches from a directory of photos.

    Args:
        image_dir (str): Directory of images (any format OpenCV decodes).
        size (int): Patch side length.
        n (int): Number of patches.
        seed (int): Random seed; crop i uses its own stream.
        out_dir (str, optional): If given, the patches are written there.

    Returns:
        Dataset: Patches in [1/512, 1 - 1/512].
    """
    metadata = {"source": "crop-patches", "patch_size": [size, size], "seed": seed}
    if n == 0:
        dataset = Dataset(images=np.zeros((0, size, size)), metadata=metadata)
    else:
        pool = load_photo_pool(image_dir, size)
        patches = [random_crop(pool, size, make_rng(seed, PURPOSE_DATA, 0, i)) for i in range(n)]
        dataset = Dataset(images=dequantize(np.stack(patches)), metadata=metadata)
        logger.info(f"Cropped {n} patches of {size}x{size} from {len(pool)} images")
    if out_dir is not None:
        write_dataset(out_dir, np.zeros((0, size, size), np.uint8) if n == 0 else np.stack(patches), metadata=metadata)
    return dataset


def prepare_images(src_dir, out_dir, crop, size):
    """Centre-crop and downscale every photo in a directory.

    The face-scale protocol crops 250x250 images to 210x210 and resizes to
    32x32; any crop/size pair is accepted.

    Returns:
        Dataset: The prepared images.
    """
    pool = load_photo_pool(src_dir, 1)
    prepared = np.stack([center_crop_resize(photo, crop, size) for photo in pool])
    metadata = {"source": "prepare-images", "crop": crop, "patch_size": [size, size]}
    write_dataset(out_dir, prepared, metadata=metadata)
    return Dataset(images=dequantize(prepared), metadata=metadata)
