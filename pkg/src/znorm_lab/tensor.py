"""Dense float64 tensors.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. The helpers here add the shape checks and the flattened-population
statistics used by the gradient transforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_RANK = 4


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class InvalidInputError(ValueError):
    pass


def as_tensor(data) -> np.ndarray:
    t = np.ascontiguousarray(data, dtype=np.float64)
    if t.ndim > MAX_RANK:
        raise ShapeError(f"rank {t.ndim} exceeds maximum rank {MAX_RANK}")
    return t


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=np.float64)


@dataclass(frozen=True)
class TensorStats:
    mean: float
    variance: float
    std: float
    count: int


def stats(t) -> TensorStats:
    """Population mean/variance/std over the flattened tensor (divisor n)."""
    flat = np.ravel(as_tensor(t))
    n = flat.size
    if n == 0:
        raise InvalidInputError("stats() of an empty tensor")
    first = flat[0]
    if np.all(flat == first):
        # exact for constant tensors; the summed mean can be off by an ulp
        return TensorStats(mean=float(first), variance=0.0, std=0.0, count=n)
    mean = float(flat.sum() / n)
    mean += float(np.sum(flat - mean) / n)  # one refinement pass
    centered = flat - mean
    variance = float(np.sum(centered * centered) / n)
    return TensorStats(mean=mean, variance=variance, std=math.sqrt(variance), count=n)


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return a + b


def sub(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")
    return a - b


def mul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    return a * b


def scale(t, a: float) -> np.ndarray:
    return as_tensor(t) * float(a)


def matmul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    return a @ b


def reshape(t, shape) -> np.ndarray:
    t = as_tensor(t)
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != t.size:
        raise ShapeError(f"reshape: cannot view {t.shape} as {shape}")
    return as_tensor(t.reshape(shape))


def transpose(t) -> np.ndarray:
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeError(f"transpose: expected a 2-D tensor, got shape {t.shape}")
    return np.ascontiguousarray(t.T)


def l2_norm(t) -> float:
    flat = np.ravel(as_tensor(t))
    return math.sqrt(float(np.sum(flat * flat)))
