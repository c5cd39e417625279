"""Datasets: seeded synthetic generators, CIFAR-10 binary reader, CSV loader,
and a versioned ``.npz`` container."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CIFAR_RECORD = 1 + 3 * 32 * 32
CONTAINER_VERSION = 1


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    train_idx: np.ndarray = field(default=None)
    test_idx: np.ndarray = field(default=None)
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DataFormatError(
                f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets")
        n = len(self)
        if self.train_idx is None:
            self.train_idx = np.arange(n)
        if self.test_idx is None:
            self.test_idx = np.arange(0)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        both = np.concatenate([self.train_idx, self.test_idx])
        if len(both) != n or (n and not np.array_equal(np.sort(both), np.arange(n))):
            raise DataFormatError("train/test indices must be disjoint and cover the dataset")

    def __len__(self):
        return self.inputs.shape[0]

    def split(self, test_fraction: float, seed: int) -> "Dataset":
        """Return a copy with a seeded random train/test partition."""
        n = len(self)
        perm = np.random.default_rng(seed).permutation(n)
        n_test = int(round(n * test_fraction))
        return Dataset(self.inputs, self.targets, np.sort(perm[n_test:]), np.sort(perm[:n_test]),
                       seed=self.seed, name=self.name)

    def subset(self, idx) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[idx], self.targets[idx]

    @property
    def train(self):
        return self.subset(self.train_idx)

    @property
    def test(self):
        return self.subset(self.test_idx)


def _class_sizes(n: int, k: int) -> list[int]:
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def gen_two_moons(n: int, noise_std: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaving half circles, labels 0 (upper) and 1 (lower)."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    n0, n1 = _class_sizes(n, 2)
    t0 = np.linspace(0, np.pi, n0)
    t1 = np.linspace(0, np.pi, n1)
    upper = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    lower = np.stack([1 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    x = np.concatenate([upper, lower])
    if noise_std > 0:
        x = x + rng.normal(scale=noise_std, size=x.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm], seed=seed, name="two_moons")


def gen_blobs(n: int, k: int = 3, seed: int = 0, dim: int = 2, spread: float = 0.5) -> Dataset:
    """Isotropic Gaussian clusters with centers on a circle of radius 3."""
    if n < 2 or k < 1:
        raise ValueError("need n >= 2 and k >= 1")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(k) / k
    centers = np.zeros((k, dim))
    centers[:, 0] = 3 * np.cos(angles)
    if dim > 1:
        centers[:, 1] = 3 * np.sin(angles)
    sizes = _class_sizes(n, k)
    x = np.concatenate([centers[i] + spread * rng.normal(size=(s, dim)) for i, s in enumerate(sizes)])
    y = np.concatenate([np.full(s, i, dtype=np.int64) for i, s in enumerate(sizes)])
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm], seed=seed, name="blobs")


def gen_blob_masks(n: int, size: int = 16, seed: int = 0, noise_std: float = 0.3) -> Dataset:
    """Noisy single-channel images of one elliptical blob; target is the blob mask.

    Radii stay within a quarter of the image, so every mask has both
    foreground and background pixels.
    """
    if n < 2 or size < 4:
        raise ValueError("need n >= 2 and size >= 4")
    rng = np.random.default_rng(seed)
    rr, cc = np.mgrid[0:size, 0:size]
    masks = np.zeros((n, size, size))
    for i in range(n):
        ry, rx = rng.uniform(1.0, size / 4, size=2)
        cy, cx = rng.uniform(ry, size - 1 - ry), rng.uniform(rx, size - 1 - rx)
        masks[i] = ((rr - cy) / ry) ** 2 + ((cc - cx) / rx) ** 2 <= 1.0
        masks[i, int(round(cy)), int(round(cx))] = 1.0
    images = masks + noise_std * rng.normal(size=masks.shape)
    return Dataset(images[:, None], masks, seed=seed, name="blob_masks")


_SHAPES = (
    np.ones((1, 4)),          # horizontal bar
    np.ones((4, 1)),          # vertical bar
    np.ones((2, 2)),          # square
    np.eye(3),                # diagonal
)


def gen_blob_classes(n: int, size: int = 8, seed: int = 0, channels: int = 1,
                     noise_std: float = 0.2) -> Dataset:
    """Noisy images holding one bright shape at a random position.

    Labels: 0 horizontal bar, 1 vertical bar, 2 square, 3 diagonal. The
    label does not depend on position, so global pooling can resolve it.
    """
    if n < 2 or size < 4:
        raise ValueError("need n >= 2 and size >= 4")
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(s, i, dtype=np.int64) for i, s in enumerate(_class_sizes(n, 4))])
    rng.shuffle(labels)
    images = noise_std * rng.normal(size=(n, channels, size, size))
    for i, lab in enumerate(labels):
        shape = _SHAPES[lab]
        h, w = shape.shape
        r, c = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        images[i, :, r:r + h, c:c + w] += shape
    return Dataset(images, labels, seed=seed, name="blob_classes")


def read_cifar10_binary(path, limit: int | None = None) -> Dataset:
    """Parse the CIFAR-10 binary layout: per record 1 label byte, then 3072
    pixel bytes (R, G, B planes of 32x32, row-major). Pixels are scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) % CIFAR_RECORD:
        raise DataFormatError(f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataFormatError(f"{path}: record {bad} has label {labels[bad]} > 9")
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return Dataset(images, labels, name="cifar10")


def read_cifar10_files(paths, limit: int | None = None) -> Dataset:
    parts = [read_cifar10_binary(p) for p in paths]
    x = np.concatenate([p.inputs for p in parts]) if parts else np.zeros((0, 3, 32, 32))
    y = np.concatenate([p.targets for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return Dataset(x, y, name="cifar10")


def write_cifar10_binary(path, images_u8: np.ndarray, labels) -> None:
    images_u8 = np.asarray(images_u8, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    Path(path).write_bytes(np.concatenate([labels, images_u8], axis=1).tobytes())


def read_csv(path, label_column: str) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DataFormatError(f"{path}: label column {label_column!r} not found in header {header}")
    li = header.index(label_column)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    arr = np.asarray(values, dtype=np.float64).reshape(-1, len(header))
    features = np.delete(arr, li, axis=1)
    labels = arr[:, li]
    if np.all(labels == np.round(labels)):
        labels = labels.astype(np.int64)
    return Dataset(features, labels, name=Path(path).stem)


def save_dataset(ds: Dataset, path) -> None:
    """Write an uncompressed ``.npz`` with a ``format_version`` entry."""
    with open(path, "wb") as fh:
        np.savez(fh, format_version=np.int64(CONTAINER_VERSION), inputs=ds.inputs, targets=ds.targets,
                 train_idx=ds.train_idx, test_idx=ds.test_idx, seed=np.int64(ds.seed),
                 name=np.array(ds.name))


def load_dataset(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CONTAINER_VERSION:
            raise DataFormatError(f"{path}: unsupported dataset container version {version}")
        return Dataset(z["inputs"], z["targets"], z["train_idx"], z["test_idx"],
                       seed=int(z["seed"]), name=str(z["name"]))
