"""Per-tensor gradient transforms applied between backprop and the optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ParamGrad
from .tensor import as_tensor, l2_norm, stats

DEFAULT_EPS = 1e-8


def znorm(g, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Z-score a gradient tensor: ``(g - mean) / (std + eps)`` over all elements."""
    g = as_tensor(g)
    s = stats(g)
    return (g - s.mean) / (s.std + eps)


def centralize(g) -> np.ndarray:
    g = as_tensor(g)
    return g - stats(g).mean


def clip(g, tau: float) -> np.ndarray:
    """Rescale ``g`` so its L2 norm does not exceed ``tau``."""
    if tau <= 0:
        raise ValueError(f"clip threshold must be positive, got {tau}")
    g = as_tensor(g)
    norm = l2_norm(g)
    if norm <= tau:
        return g.copy()
    return g * (tau / norm)


@dataclass(frozen=True)
class GradTransform:
    """One named transform plus the rule deciding which tensors it touches.

    Tensors with rank below ``min_rank`` or fewer than ``min_count`` elements
    (biases, scalars) pass through unchanged; set ``min_rank=0, min_count=1``
    to transform everything.
    """

    kind: str
    eps: float = DEFAULT_EPS
    tau: float = 0.1
    min_rank: int = 2
    min_count: int = 2

    def __post_init__(self):
        if self.kind not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.kind!r}; expected one of {sorted(TRANSFORMS)}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def applies_to(self, g: np.ndarray) -> bool:
        return g.ndim >= self.min_rank and g.size >= self.min_count

    def __call__(self, g: np.ndarray) -> np.ndarray:
        if not self.applies_to(g):
            return g
        if self.kind == "znorm":
            return znorm(g, self.eps)
        if self.kind == "centralize":
            return centralize(g)
        if self.kind == "clip":
            return clip(g, self.tau)
        return g

    def to_dict(self) -> dict:
        out = {"name": self.kind}
        if self.kind == "znorm":
            out["eps"] = self.eps
        if self.kind == "clip":
            out["tau"] = self.tau
        if (self.min_rank, self.min_count) != (2, 2):
            out.update(min_rank=self.min_rank, min_count=self.min_count)
        return out


TRANSFORMS = {"znorm": ("eps",), "centralize": (), "clip": ("tau",), "identity": ()}


@dataclass
class TransformPipeline:
    """Ordered transforms, each applied to every gradient tensor independently.

    ``scope="model"`` is an ablation: ZNorm/centralize statistics are then
    pooled over the eligible tensors of the whole model instead of per layer.
    """

    transforms: list[GradTransform] = field(default_factory=list)
    scope: str = "layer"

    def __post_init__(self):
        if self.scope not in ("layer", "model"):
            raise ValueError(f"pipeline scope must be 'layer' or 'model', got {self.scope!r}")

    def apply_tensors(self, grads: list[np.ndarray]) -> list[np.ndarray]:
        out = list(grads)
        for t in self.transforms:
            if self.scope == "layer" or t.kind in ("identity", "clip"):
                out = [t(g) for g in out]
            else:
                out = _apply_pooled(t, out)
        return out

    def __call__(self, grads: list[ParamGrad]) -> list[ParamGrad]:
        new = self.apply_tensors([g.grad for g in grads])
        return [ParamGrad(g.name, g.param, ng) for g, ng in zip(grads, new)]

    @classmethod
    def from_config(cls, entries: list[dict], scope: str = "layer") -> "TransformPipeline":
        transforms = []
        for i, entry in enumerate(entries):
            entry = dict(entry)
            name = entry.pop("name", None)
            if name not in TRANSFORMS:
                raise ValueError(f"pipeline[{i}]: unknown transform {name!r}")
            allowed = set(TRANSFORMS[name]) | {"min_rank", "min_count"}
            unknown = set(entry) - allowed
            if unknown:
                raise ValueError(f"pipeline[{i}] ({name}): unknown keys {sorted(unknown)}")
            transforms.append(GradTransform(kind=name, **entry))
        return cls(transforms, scope=scope)

    def to_config(self) -> list[dict]:
        return [t.to_dict() for t in self.transforms]


def _apply_pooled(t: GradTransform, grads: list[np.ndarray]) -> list[np.ndarray]:
    idx = [i for i, g in enumerate(grads) if t.applies_to(g)]
    if not idx:
        return grads
    pooled = np.concatenate([grads[i].reshape(-1) for i in idx])
    s = stats(pooled)
    out = list(grads)
    for i in idx:
        if t.kind == "znorm":
            out[i] = (grads[i] - s.mean) / (s.std + t.eps)
        else:
            out[i] = grads[i] - s.mean
    return out


def apply_pipeline(pipeline: TransformPipeline, grads: list[ParamGrad]) -> list[ParamGrad]:
    return pipeline(grads)
