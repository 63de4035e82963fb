"""Dataset ingestion, augmentation, standardization, synthetic generators.

Images are float arrays of shape (3, 32, 32) scaled to [0, 1].  The binary
record layout is bit-exact with the classic CIFAR files: 10-class records
are [label u8][1024 R][1024 G][1024 B]; 100-class records carry a coarse
and a fine label byte, and the fine label is used.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError, UsageError

IMAGE_SHAPE = (3, 32, 32)
_PIXEL_BYTES = 3 * 32 * 32


class LabeledImage(NamedTuple):
    pixels: np.ndarray  # (3, 32, 32) float
    label: int


@dataclass
class Dataset:
    split: str  # "train" or "test"
    images: np.ndarray  # (N, 3, 32, 32) float32
    labels: np.ndarray  # (N,) int64
    classes: int

    def __post_init__(self):
        if len(self.images) == 0:
            raise UsageError("dataset must not be empty")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise UsageError("dataset labels out of range")

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        return LabeledImage(self.images[i], int(self.labels[i]))

    def subset(self, n):
        if n <= 0 or n >= len(self):
            return self
        return Dataset(self.split, self.images[:n], self.labels[:n], self.classes)


def load_cifar_binary(path, classes, split="train"):
    """Parse one binary record file into a Dataset.

    Record order is preserved; pixel bytes are scaled to [0, 1].
    """
    if classes not in (10, 100):
        raise UsageError(f"classes must be 10 or 100, got {classes}")
    raw = np.fromfile(str(path), dtype=np.uint8)
    label_bytes = 1 if classes == 10 else 2
    record = label_bytes + _PIXEL_BYTES
    if len(raw) == 0 or len(raw) % record:
        offset = (len(raw) // record) * record
        raise FormatError(
            f"{path}: truncated record at byte offset {offset} "
            f"(file has {len(raw)} bytes, record size {record})")
    rows = raw.reshape(-1, record)
    labels = rows[:, label_bytes - 1].astype(np.int64)  # fine label for 100-class
    if labels.max() >= classes:
        bad = int(np.argmax(labels >= classes))
        raise FormatError(
            f"{path}: record {bad} has label {labels[bad]} outside [0, {classes})")
    images = rows[:, label_bytes:].reshape(-1, *IMAGE_SHAPE).astype(np.float32)
    images /= 255.0
    return Dataset(split=split, images=images, labels=labels, classes=classes)


def save_cifar_binary(dataset, path):
    """Serialize a Dataset to the binary record layout (quantizing pixels
    to bytes); reloading recovers labels exactly and pixels to 1/255."""
    label_bytes = 1 if dataset.classes == 10 else 2
    n = len(dataset)
    rows = np.zeros((n, label_bytes + _PIXEL_BYTES), dtype=np.uint8)
    if label_bytes == 2:
        rows[:, 0] = 0  # coarse label unused
    rows[:, label_bytes - 1] = dataset.labels
    quantized = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8)
    rows[:, label_bytes:] = quantized.reshape(n, _PIXEL_BYTES)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    rows.tofile(str(path))


TRAIN_FILES_10 = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES_10 = ("test_batch.bin",)
TRAIN_FILES_100 = ("train.bin",)
TEST_FILES_100 = ("test.bin",)


def load_cifar_dir(data_dir, split, classes):
    """Load the standard file names for a split, concatenating whatever
    subset of them exists."""
    data_dir = Path(data_dir)
    if classes == 10:
        names = TRAIN_FILES_10 if split == "train" else TEST_FILES_10
    else:
        names = TRAIN_FILES_100 if split == "train" else TEST_FILES_100
    paths = [data_dir / n for n in names if (data_dir / n).exists()]
    if not paths:
        raise FormatError(f"no {split} record files found under {data_dir}")
    parts = [load_cifar_binary(p, classes, split) for p in paths]
    return Dataset(split=split,
                   images=np.concatenate([p.images for p in parts]),
                   labels=np.concatenate([p.labels for p in parts]),
                   classes=classes)


def standardize_pixels(pixels):
    """Subtract the scalar pixel mean and divide by the scalar pixel
    standard deviation, guarded by max(std, 1e-6).

    Statistics accumulate in 64-bit so a constant image maps to exact
    zeros instead of amplified rounding residue.
    """
    x = pixels.astype(np.float64, copy=False)
    mean = x.mean()
    std = max(float(x.std()), 1e-6)
    return ((x - mean) / std).astype(pixels.dtype, copy=False)


def standardize(img):
    return LabeledImage(standardize_pixels(img.pixels), img.label)


def standardize_batch(images):
    """Vectorized per-image standardization of a (N, 3, H, W) stack."""
    flat = images.reshape(len(images), -1).astype(np.float64, copy=False)
    mean = flat.mean(axis=1).reshape(-1, 1, 1, 1)
    std = np.maximum(flat.std(axis=1), 1e-6).reshape(-1, 1, 1, 1)
    return ((images - mean) / std).astype(images.dtype)


def draw_augment(rng):
    """Sample one transform: (row offset, column offset, flip), drawn in
    exactly that order so a forced rng reproduces a specific transform."""
    i = int(rng.integers(9))
    j = int(rng.integers(9))
    return i, j, bool(rng.random() < 0.5)


def augment_pixels(pixels, rng):
    """Zero-pad 4 pixels per side, crop a random 32x32 window, and mirror
    horizontally with probability one half."""
    if pixels.shape != IMAGE_SHAPE:
        raise UsageError(f"augment expects {IMAGE_SHAPE} pixels, got {pixels.shape}")
    padded = np.pad(pixels, ((0, 0), (4, 4), (4, 4)))
    i, j, flip = draw_augment(rng)
    out = padded[:, i:i + 32, j:j + 32]
    if flip:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def augment(img, rng):
    return LabeledImage(augment_pixels(img.pixels, rng), img.label)


def synthetic_dataset(n, classes, seed, noise_sigma=0.3, mean_spread=0.3,
                      split="train"):
    """Class-conditional Gaussian blobs that a small CNN separates easily.

    Class c gets distinct per-channel means placed on a circle of radius
    ``mean_spread`` around mid-gray; pixels add N(0, noise_sigma) and are
    clipped to [0, 1].  Labels are balanced and the result is a pure
    function of the seed.
    """
    if n < classes:
        raise UsageError("need at least one sample per class")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(97,)))
    labels = np.arange(n, dtype=np.int64) % classes
    theta = 2.0 * np.pi * labels / classes
    means = 0.5 + mean_spread * np.stack(
        [np.cos(theta), np.sin(theta), np.cos(2.0 * theta)], axis=1)
    images = means[:, :, None, None] + noise_sigma * rng.standard_normal(
        (n, *IMAGE_SHAPE))
    images = np.clip(images, 0.0, 1.0).astype(np.float32)
    return Dataset(split=split, images=images, labels=labels, classes=classes)


def grating_dataset(n, classes, seed, amplitude=0.18, noise_sigma=0.22,
                    split="train"):
    """Oriented sinusoidal gratings in noise, a harder benchmark stand-in.

    Class c sets the grating orientation (and alternates the spatial
    frequency); the phase, a per-image amplitude jitter, and heavy pixel
    noise vary per sample, so models must learn spatial structure rather
    than color statistics.  Generalization stays imperfect at a few
    thousand training samples, which keeps test-error comparisons between
    subnetworks informative.
    """
    if n < classes:
        raise UsageError("need at least one sample per class")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(98,)))
    labels = np.arange(n, dtype=np.int64) % classes
    yy, xx = np.mgrid[0:32, 0:32].astype(np.float64)
    images = np.empty((n, *IMAGE_SHAPE), dtype=np.float32)
    for idx in range(n):
        c = labels[idx]
        angle = np.pi * c / classes
        freq = (2.0 + 1.5 * (c % 3)) * 2.0 * np.pi / 32.0
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = amplitude * rng.uniform(0.7, 1.3)
        carrier = np.sin(freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
        img = 0.5 + amp * carrier + noise_sigma * rng.standard_normal((3, 32, 32))
        images[idx] = np.clip(img, 0.0, 1.0)
    return Dataset(split=split, images=images, labels=labels, classes=classes)


def write_benchmark_files(data_dir, train_n=5000, test_n=1000, classes=10,
                          seed=2024, maker=grating_dataset):
    """Write a synthetic stand-in corpus using the standard 10-class file
    names so the training CLI consumes it like a real binary corpus."""
    data_dir = Path(data_dir)
    train = maker(train_n, classes, seed, split="train")
    test = maker(test_n, classes, seed + 1, split="test")
    save_cifar_binary(train, data_dir / TRAIN_FILES_10[0])
    save_cifar_binary(test, data_dir / TEST_FILES_10[0])
    return data_dir
