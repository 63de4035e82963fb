"""Dataset IO, augmentation and standardization."""

import os

import numpy as np
import pytest
from scipy import stats

from crescendo.data import (
    Dataset,
    LabeledImage,
    augment,
    augment_pixels,
    load_cifar_binary,
    load_cifar_dir,
    save_cifar_binary,
    standardize,
    standardize_batch,
    standardize_pixels,
    synthetic_dataset,
)
from crescendo.errors import FormatError, UsageError
from crescendo.rng import stream_rng


class _ForcedRng:
    """Stub generator yielding scripted crop offsets and flip draws."""

    def __init__(self, ints, floats):
        self._ints = list(ints)
        self._floats = list(floats)

    def integers(self, _):
        return self._ints.pop(0)

    def random(self):
        return self._floats.pop(0)


class TestCifarBinary:
    def _write_records(self, path, labels, pixels):
        rows = np.zeros((len(labels), 3073), dtype=np.uint8)
        rows[:, 0] = labels
        rows[:, 1:] = pixels.reshape(len(labels), -1)
        rows.tofile(str(path))

    def test_ten_records_load(self, tmp_path):
        rng = np.random.default_rng(0)
        pixels = rng.integers(0, 256, (10, 3, 32, 32), dtype=np.uint8)
        self._write_records(tmp_path / "t.bin", np.arange(10) % 10, pixels)
        ds = load_cifar_binary(tmp_path / "t.bin", 10)
        assert len(ds) == 10
        assert ds.images.max() <= 1.0

    def test_label_byte_becomes_label(self, tmp_path):
        pixels = np.zeros((1, 3, 32, 32), dtype=np.uint8)
        self._write_records(tmp_path / "t.bin", [7], pixels)
        assert load_cifar_binary(tmp_path / "t.bin", 10)[0].label == 7

    def test_channel_major_pixel_order(self, tmp_path):
        pixels = np.zeros((1, 3, 32, 32), dtype=np.uint8)
        pixels[0, 1, 0, 0] = 255  # first byte of the G plane
        self._write_records(tmp_path / "t.bin", [0], pixels)
        ds = load_cifar_binary(tmp_path / "t.bin", 10)
        assert ds.images[0, 1, 0, 0] == 1.0
        assert ds.images[0, 0, 0, 0] == 0.0

    def test_truncated_file_reports_offset(self, tmp_path):
        data = np.zeros(3073 * 2 + 100, dtype=np.uint8)
        data.tofile(str(tmp_path / "t.bin"))
        with pytest.raises(FormatError, match=str(3073 * 2)):
            load_cifar_binary(tmp_path / "t.bin", 10)

    def test_out_of_range_label_rejected(self, tmp_path):
        pixels = np.zeros((1, 3, 32, 32), dtype=np.uint8)
        self._write_records(tmp_path / "t.bin", [10], pixels)
        with pytest.raises(FormatError, match="label 10"):
            load_cifar_binary(tmp_path / "t.bin", 10)

    def test_hundred_class_uses_fine_label(self, tmp_path):
        row = np.zeros(3074, dtype=np.uint8)
        row[0] = 3   # coarse
        row[1] = 42  # fine
        row.tofile(str(tmp_path / "t.bin"))
        assert load_cifar_binary(tmp_path / "t.bin", 100)[0].label == 42

    def test_round_trip_through_binary_format(self, tmp_path):
        ds = synthetic_dataset(50, 10, seed=1)
        save_cifar_binary(ds, tmp_path / "rt.bin")
        back = load_cifar_binary(tmp_path / "rt.bin", 10)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert np.abs(back.images - ds.images).max() <= (1.0 / 255.0) / 2 + 1e-7

    def test_official_test_batch_if_available(self):
        data_dir = os.environ.get("CRESCENDO_CIFAR10_DIR")
        if not data_dir or not os.path.exists(os.path.join(data_dir, "test_batch.bin")):
            pytest.skip("official 10-class test file not present")
        ds = load_cifar_dir(data_dir, "test", 10)
        assert len(ds) == 10_000
        counts = np.bincount(ds.labels, minlength=10)
        assert (counts >= 800).all()


class TestStandardize:
    def test_constant_image_maps_to_zeros(self):
        img = LabeledImage(np.full((3, 32, 32), 0.4, dtype=np.float32), 1)
        np.testing.assert_array_equal(standardize(img).pixels, 0.0)

    def test_output_statistics(self):
        rng = np.random.default_rng(2)
        pixels = rng.random((3, 32, 32))
        out = standardize_pixels(pixels)
        assert abs(out.mean()) < 1e-6
        assert abs(out.std() - 1.0) < 1e-5

    def test_fixed_small_example(self):
        # hand computation over the 12 values 0..11: mean 5.5,
        # std sqrt(143/12)
        pixels = np.arange(12.0).reshape(3, 2, 2)
        out = (pixels - 5.5) / np.sqrt(143.0 / 12.0)
        got = standardize_pixels(pixels)
        np.testing.assert_allclose(got, out, rtol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        pixels = rng.random((3, 32, 32))
        once = standardize_pixels(pixels)
        twice = standardize_pixels(once)
        np.testing.assert_allclose(twice, once, atol=1e-5)

    def test_batch_matches_per_image(self):
        rng = np.random.default_rng(4)
        images = rng.random((5, 3, 32, 32)).astype(np.float32)
        batch = standardize_batch(images)
        for i in range(5):
            np.testing.assert_allclose(batch[i], standardize_pixels(images[i]),
                                       rtol=1e-5, atol=1e-6)


class TestAugment:
    def test_output_shape(self):
        rng = stream_rng(0, "augment")
        pixels = np.random.default_rng(5).random((3, 32, 32))
        assert augment_pixels(pixels, rng).shape == (3, 32, 32)

    def test_centered_crop_no_flip_is_identity(self):
        pixels = np.random.default_rng(6).random((3, 32, 32))
        out = augment_pixels(pixels, _ForcedRng(ints=[4, 4], floats=[0.9]))
        np.testing.assert_array_equal(out, pixels)

    def test_flip_mirrors_columns(self):
        pixels = np.random.default_rng(7).random((3, 32, 32))
        out = augment_pixels(pixels, _ForcedRng(ints=[4, 4], floats=[0.1]))
        np.testing.assert_array_equal(out, pixels[:, :, ::-1])

    def test_label_preserved(self):
        img = LabeledImage(np.zeros((3, 32, 32)), 3)
        assert augment(img, stream_rng(1, "augment")).label == 3

    def test_flip_frequency_and_offset_uniformity(self):
        rng = stream_rng(2, "augment")
        pixels = np.zeros((3, 32, 32))
        pixels[0, 0, 0] = 1.0  # asymmetric marker
        n = 10 ** 5
        flips = 0
        offsets = np.zeros((9, 9), dtype=np.int64)
        for _ in range(n):
            i = int(rng.integers(9))
            j = int(rng.integers(9))
            flips += rng.random() < 0.5
            offsets[i, j] += 1
        assert abs(flips / n - 0.5) < 0.005
        chi = stats.chisquare(offsets.reshape(-1))
        assert chi.pvalue > 0.01

    def test_crop_window_contains_original_content(self):
        # the centered, unflipped crop keeps the exact pixel multiset
        pixels = np.random.default_rng(8).random((3, 32, 32))
        out = augment_pixels(pixels, _ForcedRng(ints=[4, 4], floats=[0.9]))
        assert sorted(out.reshape(-1)) == sorted(pixels.reshape(-1))


class TestSyntheticDataset:
    def test_balanced_labels(self):
        ds = synthetic_dataset(100, 10, seed=0)
        np.testing.assert_array_equal(np.bincount(ds.labels), [10] * 10)

    def test_deterministic_for_seed(self):
        a = synthetic_dataset(64, 4, seed=5)
        b = synthetic_dataset(64, 4, seed=5)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self):
        a = synthetic_dataset(64, 4, seed=5)
        b = synthetic_dataset(64, 4, seed=6)
        assert not np.array_equal(a.images, b.images)

    def test_linearly_separable_on_raw_pixels(self):
        ds = synthetic_dataset(500, 10, seed=7)
        X = ds.images.reshape(len(ds), -1).astype(np.float64)
        X = np.hstack([X, np.ones((len(ds), 1))])
        Y = np.eye(10)[ds.labels]
        W, *_ = np.linalg.lstsq(X, Y, rcond=None)
        accuracy = (np.argmax(X @ W, axis=1) == ds.labels).mean()
        assert accuracy > 0.8

    def test_too_few_samples_rejected(self):
        with pytest.raises(UsageError):
            synthetic_dataset(5, 10, seed=0)

    def test_subset(self):
        ds = synthetic_dataset(100, 10, seed=1)
        assert len(ds.subset(30)) == 30
        assert len(ds.subset(0)) == 100
