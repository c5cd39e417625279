"""Classification and segmentation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import InvalidInputError, ShapeError


def accuracy(predictions, labels) -> float:
    p, y = np.asarray(predictions).reshape(-1), np.asarray(labels).reshape(-1)
    if p.shape != y.shape:
        raise ShapeError(f"accuracy: {p.shape[0]} predictions vs {y.shape[0]} labels")
    if p.size == 0:
        raise InvalidInputError("accuracy of an empty batch")
    return float(np.count_nonzero(p == y) / p.size)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def f1(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denom if denom else 0.0


def tversky(c: ConfusionCounts, alpha: float = 0.5, beta: float = 0.5) -> float:
    """``tp / (tp + alpha*fn + beta*fp)``; alpha = beta = 0.5 gives Dice."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    denom = c.tp + alpha * c.fn + beta * c.fp
    return c.tp / denom if denom else 0.0


def confusion(pred_mask, true_mask, threshold: float = 0.5) -> ConfusionCounts:
    """Pixel counts after thresholding both masks (``value > threshold`` is foreground)."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    p, t = np.asarray(pred_mask), np.asarray(true_mask)
    if p.shape != t.shape:
        raise ShapeError(f"confusion: mask shapes differ {p.shape} vs {t.shape}")
    p, t = p > threshold, t > threshold
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)), fp=int(np.count_nonzero(p & ~t)),
        tn=int(np.count_nonzero(~p & ~t)), fn=int(np.count_nonzero(~p & t)),
    )


@dataclass(frozen=True)
class PointSet:
    points: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.int64).reshape(-1, 2)


def mask_to_pointset(mask, threshold: float = 0.5) -> PointSet:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {m.shape}")
    rows, cols = np.nonzero(m > threshold)
    return PointSet(tuple(zip(rows.tolist(), cols.tolist())))


def _directed_sq(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> int:
    # max over a of min over b of squared distance, exact in integers
    worst = 0
    for start in range(0, len(a), chunk):
        block = a[start:start + chunk]
        d = block[:, None, :] - b[None, :, :]
        sq = (d * d).sum(axis=2)
        worst = max(worst, int(sq.min(axis=1).max()))
    return worst


def hausdorff(p: PointSet, g: PointSet) -> float:
    """Symmetric Hausdorff distance between two pixel point sets (Euclidean)."""
    if len(p) == 0 or len(g) == 0:
        raise InvalidInputError("hausdorff distance is undefined for an empty point set")
    a, b = p.as_array(), g.as_array()
    return math.sqrt(max(_directed_sq(a, b), _directed_sq(b, a)))


def directed_hausdorff(p: PointSet, g: PointSet) -> float:
    if len(p) == 0 or len(g) == 0:
        raise InvalidInputError("hausdorff distance is undefined for an empty point set")
    return math.sqrt(_directed_sq(p.as_array(), g.as_array()))


def mask_hausdorff(pred_mask, true_mask, threshold: float = 0.5) -> float:
    return hausdorff(mask_to_pointset(pred_mask, threshold), mask_to_pointset(true_mask, threshold))
