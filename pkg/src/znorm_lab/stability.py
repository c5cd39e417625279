"""Scale-factor regimes, gradient chains with and without skips, and a
small trained-chain experiment that logs per-layer gradient statistics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .nn import make_residual_mlp, make_scalar_chain
from .optim import Optimizer, OptimizerConfig
from .tensor import stats
from .transforms import DEFAULT_EPS, TransformPipeline

CSV_COLUMNS = ("step", "layer", "grad_std", "grad_mean", "loss", "scale_factor")
DIVERGENCE_LOSS = 1e12


@dataclass(frozen=True)
class ChainSpec:
    depth: int
    gain: float
    skip: bool
    terminal_error: float = 1.0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("chain depth must be at least 1")
        if self.gain < 0:
            raise ValueError("per-layer gain must be non-negative")


def chain_gradient(spec: ChainSpec) -> float:
    """``|delta| * g**L`` without skips, ``|delta| * (g + 1)**L`` with them.

    Returns ``math.inf`` on overflow.
    """
    factor = spec.gain + 1.0 if spec.skip else spec.gain
    try:
        return abs(spec.terminal_error) * math.pow(factor, spec.depth)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class CaseReport:
    sigma: float
    scale_factor: float
    regime: str


def case_analysis(sigma: float, eps: float = DEFAULT_EPS) -> CaseReport:
    """Classify the ZNorm per-element scale ``1 / (sigma + eps)`` against 1."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    scale = 1.0 / (sigma + eps)
    if scale > 1.0:
        regime = "amplifying"
    elif scale < 1.0:
        regime = "attenuating"
    else:
        regime = "neutral"
    return CaseReport(sigma=sigma, scale_factor=scale, regime=regime)


def convergence_blowup_demo(sigmas, eps: float = DEFAULT_EPS) -> list[tuple[float, float]]:
    """Scale factor for each sigma of a strictly decreasing positive sequence."""
    sigmas = [float(s) for s in sigmas]
    if not sigmas or any(s <= 0 for s in sigmas):
        raise ValueError("sigmas must be a non-empty sequence of positive values")
    if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigmas must be strictly decreasing")
    return [(s, 1.0 / (s + eps)) for s in sigmas]


@dataclass
class Trajectory:
    rows: list[dict] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    diverged_at: int | None = None

    @property
    def nan_flags(self) -> list[int]:
        return [] if self.diverged_at is None else [self.diverged_at]

    def write_csv(self, path) -> None:
        write_csv(self.rows, path)


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})


def is_divergent(loss: float) -> bool:
    return not math.isfinite(loss) or abs(loss) > DIVERGENCE_LOSS


def trained_chain_experiment(depth: int, skip: bool, pipeline: TransformPipeline | None = None,
                             steps: int = 2000, seed: int = 0, width: int = 8, n: int = 64,
                             lr: float = 1e-3, zero_init: bool = False,
                             zero_targets: bool = False) -> Trajectory:
    """Full-batch Adam on a fixed quadratic regression target.

    Records raw per-layer weight-gradient mean/std each step along with the
    ZNorm scale factor ``1 / (std + eps)`` those statistics imply. Training
    stops at the first step whose loss is NaN/inf or exceeds 1e12.
    """
    if not 1 <= depth <= 64 or not 1 <= steps <= 10_000:
        raise ValueError("desk-scale limits: depth in [1, 64], steps in [1, 10000]")
    pipeline = pipeline or TransformPipeline()
    eps = next((t.eps for t in pipeline.transforms if t.kind == "znorm"), DEFAULT_EPS)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = np.zeros((n, 1)) if zero_targets else 0.5 * (x * x).sum(axis=1, keepdims=True)
    net = make_residual_mlp(width, depth, 2, 1, seed + 1, loss="mse", skip=skip)
    if zero_init:
        for name, p in net.parameters():
            p[...] = 0.0
    opt = Optimizer(OptimizerConfig(kind="adam", lr=lr), pipeline)
    traj = Trajectory()
    with np.errstate(all="ignore"):
        for step in range(1, steps + 1):
            loss, grads = net.backward(x, y)
            traj.losses.append(loss)
            for g in grads:
                if g.grad.ndim < 2:
                    continue
                s = stats(g.grad)
                traj.rows.append({"step": step, "layer": g.name, "grad_std": s.std, "grad_mean": s.mean,
                                  "loss": loss, "scale_factor": 1.0 / (s.std + eps)})
            if is_divergent(loss) or not all(np.all(np.isfinite(g.grad)) for g in grads):
                traj.diverged_at = step
                break
            opt.step(net, grads)
    return traj


def scalar_chain_autodiff(spec: ChainSpec) -> float:
    """Gradient magnitude of the input weight of a constructed scalar chain, via backprop.

    The chain is ``z0 = w0 * x`` with ``w0 = x = 1`` followed by ``L`` scalar
    layers of weight ``g`` (inside residual blocks when ``spec.skip``). The
    backpropagated factor is measured relative to the terminal error the
    network actually saw and rescaled to ``spec.terminal_error``.
    """
    net = make_scalar_chain(spec.depth, spec.gain, spec.skip)
    x = np.ones((1, 1))
    out = net.predict(x)
    target = out - 0.5
    delta = 2.0 * float((out - target)[0, 0])
    _, grads = net.backward(x, target)
    return abs(spec.terminal_error) * abs(float(grads[0].grad[0, 0]) / delta)
