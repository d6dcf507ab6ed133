#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Image Module for the Masked RBM toolkit
This module handles 8-bit grayscale image files and pixel quantization.

Models see pixels as (k + 0.5) / 256 for an 8-bit value k, so every stored
pixel lies in [1/512, 1 - 1/512]. Files are binary portable graymaps.
"""

import logging
import os

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from src.utils.errors import FormatError

# Configure logging
logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".pgm", ".ppm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def dequantize(k):
    """Map 8-bit values to model pixels (k + 0.5) / 256."""
    return (np.asarray(k, dtype=np.float64) + 0.5) / 256.0


def quantize(v):
    """Map model pixels in [0, 1] back to 8-bit values; inverse of dequantize."""
    v = np.nan_to_num(np.asarray(v, dtype=np.float64), nan=0.0)
    return np.clip(np.floor(v * 256.0), 0, 255).astype(np.uint8)


def _save_gray(path, array):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(path, format="PPM")


def read_gray_bytes(path):
    """Read an 8-bit grayscale image file as a uint8 array."""
    try:
        with Image.open(path) as image:
            if image.mode != "L":
                raise FormatError(f"{path}: expected an 8-bit grayscale image, got mode {image.mode}")
            return np.array(image, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise FormatError(f"{path}: cannot read image ({e})") from e


def read_image(path):
    """Read an 8-bit grayscale image as model pixels.

    Args:
        path (str): Image file.

    Returns:
        numpy.ndarray: [H, W] float64 pixels in [1/512, 1 - 1/512].
    """
    return dequantize(read_gray_bytes(path))


def write_image(path, pixels):
    """Write model pixels (floats in [0, 1]) or uint8 values as a binary PGM."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise FormatError(f"{path}: images must be two-dimensional, got shape {pixels.shape}")
    data = pixels if pixels.dtype == np.uint8 else quantize(pixels)
    _save_gray(path, data)


def read_mask(path):
    """Read a mask image (0 = background, 255 = foreground) as a binary array."""
    return (read_gray_bytes(path) >= 128).astype(np.uint8)


def write_mask(path, mask):
    """Write a binary mask as 0/255 grayscale."""
    _save_gray(path, np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8))


def write_probability_map(path, probabilities):
    """Write a probability map rounded to 255 * p."""
    values = np.rint(255.0 * np.clip(np.asarray(probabilities, dtype=np.float64), 0.0, 1.0))
    _save_gray(path, values.astype(np.uint8))


def tile(images, columns, pad=1, background=0.0):
    """Arrange [n, H, W] images in a grid.

    NaN pixels (invisible parts of a composite) are drawn as black.

    Returns:
        numpy.ndarray: The grid as float pixels.
    """
    images = np.asarray(images, dtype=np.float64)
    n, height, width = images.shape
    columns = max(1, min(columns, n)) if n else 1
    rows = int(np.ceil(n / columns)) if n else 0
    grid = np.full((rows * (height + pad) + pad, columns * (width + pad) + pad), background)
    for index, image in enumerate(images):
        r, c = divmod(index, columns)
        top, left = pad + r * (height + pad), pad + c * (width + pad)
        grid[top : top + height, left : left + width] = np.nan_to_num(image, nan=0.0)
    return grid


def write_tiled(path, images, columns=10):
    """Write a tiled grid of images (e.g. fantasy samples) as one PGM."""
    write_image(path, tile(images, columns))


def overlay(image, mask):
    """Darken background pixels so the inferred foreground stands out."""
    image = np.asarray(image, dtype=np.float64)
    return np.where(np.asarray(mask) > 0, image, 0.25 * image)


def load_photo(path):
    """Decode an arbitrary photo as 8-bit grayscale; returns None if unreadable."""
    image = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
    if image is None:
        logger.warning(f"Could not decode {path}")
    return image


def center_crop_resize(image, crop, size):
    """Centre-crop to crop x crop pixels, then resize to size x size."""
    height, width = image.shape[:2]
    crop = min(crop, height, width)
    top, left = (height - crop) // 2, (width - crop) // 2
    cropped = image[top : top + crop, left : left + crop]
    return cv2.resize(cropped, (size, size), interpolation=cv2.INTER_AREA)


def smoothed_noise(shape, rng, sigma):
    """Gaussian-smoothed white noise with unit standard deviation."""
    noise = rng.standard_normal(shape)
    blurred = cv2.GaussianBlur(noise, (0, 0), sigmaX=float(sigma), borderType=cv2.BORDER_REFLECT)
    std = blurred.std()
    return blurred / std if std > 0 else blurred


def list_image_files(directory):
    """Sorted list of image files in a directory."""
    return sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.lower().endswith(IMAGE_EXTENSIONS)
    )
