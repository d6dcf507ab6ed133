"""Image I/O, on-disk datasets and the toy generator."""

import hashlib
import os

import cv2
import numpy as np
import pytest
from PIL import Image

from src.data.dataset import (
    MANIFEST_FILE,
    crop_patches,
    load_dataset,
    prepare_images,
    read_manifest,
    write_dataset,
)
from src.data.images import dequantize, quantize, read_image, read_mask, tile, write_image, write_mask, write_probability_map
from src.data.toy import LABELS, ToyConfig, gen_match_pairs, gen_toy, generate_examples
from src.utils.errors import ConfigError, DimensionError, FormatError


def tree_digest(directory):
    digest = hashlib.sha256()
    for root, _, files in sorted(os.walk(directory)):
        for name in sorted(files):
            path = os.path.join(root, name)
            digest.update(os.path.relpath(path, directory).encode())
            with open(path, "rb") as f:
                digest.update(f.read())
    return digest.hexdigest()


@pytest.fixture
def photo_dir(tmp_path):
    rng = np.random.default_rng(0)
    directory = tmp_path / "photos"
    directory.mkdir()
    cv2.imwrite(str(directory / "a.png"), rng.integers(0, 256, (40, 50), dtype=np.uint8))
    cv2.imwrite(str(directory / "b.png"), rng.integers(0, 256, (30, 30, 3), dtype=np.uint8))
    (directory / "notes.txt").write_text("not an image")
    return str(directory)


class TestImages:
    def test_quantization_grid(self):
        k = np.arange(256)
        pixels = dequantize(k)
        assert pixels[0] == 0.5 / 256 and pixels[-1] == 255.5 / 256
        assert np.array_equal(quantize(pixels), k)

    def test_quantize_clips_and_blanks_nan(self):
        assert np.array_equal(quantize(np.array([-0.2, 1.0, 1.7, np.nan])), [0, 255, 255, 0])

    def test_written_image_is_binary_pgm(self, tmp_path):
        path = str(tmp_path / "x.pgm")
        pixels = dequantize(np.arange(12).reshape(3, 4))
        write_image(path, pixels)
        with open(path, "rb") as f:
            assert f.read(2) == b"P5"
        assert np.array_equal(read_image(path), pixels)

    def test_colour_images_are_rejected(self, tmp_path):
        path = str(tmp_path / "rgb.png")
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path)
        with pytest.raises(FormatError):
            read_image(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "broken.pgm"
        path.write_bytes(b"definitely not an image")
        with pytest.raises(FormatError):
            read_image(str(path))

    def test_masks_and_probability_maps(self, tmp_path):
        mask = np.array([[0, 1], [1, 0]])
        write_mask(str(tmp_path / "m.pgm"), mask)
        assert np.array_equal(read_mask(str(tmp_path / "m.pgm")), mask)
        write_probability_map(str(tmp_path / "p.pgm"), np.array([[0.0, 1.0], [0.2, 2.0]]))
        assert np.array_equal(np.array(Image.open(tmp_path / "p.pgm")), [[0, 255], [51, 255]])

    def test_tile_layout(self):
        images = np.ones((5, 2, 3))
        images[4, 0, 0] = np.nan
        grid = tile(images, columns=2)
        assert grid.shape == (3 * 3 + 1, 2 * 4 + 1)
        assert grid[1, 1] == 1.0
        assert grid[7, 1] == 0.0


class TestDataset:
    def test_write_and_load(self, tmp_path):
        images = dequantize(np.arange(24).reshape(2, 3, 4))
        masks = np.array([np.eye(3, 4), np.ones((3, 4))], dtype=np.uint8)
        write_dataset(str(tmp_path), images, masks=masks, labels=["rectangle", "round"], metadata={"seed": 1})
        dataset = load_dataset(str(tmp_path))
        assert np.array_equal(dataset.images, images)
        assert np.array_equal(dataset.masks, masks)
        assert dataset.labels == ["rectangle", "round"]
        assert dataset.metadata["patch_size"] == [3, 4]
        assert dataset.n_pix == 12
        assert dataset.flat_masks().shape == (2, 12)
        assert len(dataset.subset([1])) == 1

    def test_manifest_header_is_checked(self, tmp_path):
        write_dataset(str(tmp_path), np.zeros((1, 2, 2), np.uint8))
        (tmp_path / MANIFEST_FILE).write_text("img,msk,lbl\n")
        with pytest.raises(FormatError):
            read_manifest(str(tmp_path))

    def test_missing_image_file(self, tmp_path):
        write_dataset(str(tmp_path), np.zeros((2, 2, 2), np.uint8))
        os.remove(tmp_path / "images" / "00001.pgm")
        with pytest.raises(FormatError):
            load_dataset(str(tmp_path))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            load_dataset(str(tmp_path))

    def test_image_sizes_must_agree(self, tmp_path):
        write_dataset(str(tmp_path), np.zeros((2, 2, 2), np.uint8))
        write_image(str(tmp_path / "images" / "00001.pgm"), np.zeros((3, 3), np.uint8))
        with pytest.raises(DimensionError):
            load_dataset(str(tmp_path))

    def test_crop_patches(self, photo_dir, tmp_path):
        first = crop_patches(photo_dir, 8, 20, seed=4, out_dir=str(tmp_path / "patches"))
        second = crop_patches(photo_dir, 8, 20, seed=4)
        assert first.images.shape == (20, 8, 8)
        assert np.array_equal(first.images, second.images)
        assert np.array_equal(load_dataset(str(tmp_path / "patches")).images, first.images)

    def test_crop_patches_needs_large_enough_photos(self, photo_dir):
        with pytest.raises(ConfigError):
            crop_patches(photo_dir, 64, 3, seed=0)

    def test_zero_patches(self, tmp_path):
        dataset = crop_patches(str(tmp_path / "nowhere"), 8, 0, seed=0)
        assert dataset.images.shape == (0, 8, 8)

    def test_prepare_images(self, photo_dir, tmp_path):
        dataset = prepare_images(photo_dir, str(tmp_path / "prepared"), crop=24, size=12)
        assert dataset.images.shape == (2, 12, 12)
        assert len(load_dataset(str(tmp_path / "prepared"))) == 2


class TestToy:
    def test_examples_depend_only_on_their_index(self):
        cfg = ToyConfig(n_train=5, n_test=0, seed=9)
        few = generate_examples(cfg, "train", 3)
        more = generate_examples(cfg, "train", 5)
        for a, b in zip(few, more):
            assert np.array_equal(a.image, b.image)
            assert a.label == b.label

    def test_examples(self):
        cfg = ToyConfig(n_train=40, n_test=0, seed=2)
        examples = generate_examples(cfg, "train", 40)
        assert {e.label for e in examples} == set(LABELS)
        for example in examples:
            assert example.image.shape == (16, 16)
            assert set(np.unique(example.gt_mask)) <= {0, 1}
            assert np.array_equal(dequantize(quantize(example.image)), example.image)
            top, left, height, width = example.bbox
            assert not example.gt_mask[:top].any() and not example.gt_mask[top + height :].any()
            assert not example.gt_mask[:, :left].any() and not example.gt_mask[:, left + width :].any()
            if example.label == "rectangle":
                assert example.gt_mask.sum() == height * width

    def test_splits_differ(self):
        cfg = ToyConfig(seed=2)
        train = generate_examples(cfg, "train", 1)[0]
        test = generate_examples(cfg, "test", 1)[0]
        assert not np.array_equal(train.image, test.image)

    def test_generation_is_byte_identical(self, tmp_path):
        cfg = ToyConfig(n_train=6, n_test=4, seed=5)
        gen_toy(cfg, str(tmp_path / "one"))
        gen_toy(cfg, str(tmp_path / "two"))
        assert tree_digest(tmp_path / "one") == tree_digest(tmp_path / "two")
        assert len(load_dataset(str(tmp_path / "one" / "test"))) == 4

    def test_photo_backgrounds(self, photo_dir):
        cfg = ToyConfig(n_train=3, n_test=0, seed=1, background_dir=photo_dir)
        assert len(generate_examples(cfg, "train", 3, pool=[np.full((20, 20), 7, np.uint8)])) == 3

    def test_patch_must_fit_every_object(self):
        with pytest.raises(ConfigError):
            ToyConfig(patch_size=8).validate()

    def test_match_pairs_share_the_object(self):
        set_a, set_b = gen_match_pairs(ToyConfig(seed=3), 6)
        for a, b in zip(set_a, set_b):
            assert np.array_equal(a.gt_mask, b.gt_mask)
            inside = a.gt_mask > 0
            assert np.array_equal(a.image[inside], b.image[inside])
            assert not np.array_equal(a.image[~inside], b.image[~inside])
