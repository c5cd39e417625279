"""First-order optimizers with a gradient-transform hook.

``Optimizer.step`` receives raw gradients and runs the configured pipeline
before touching the moment estimates, so the update only ever sees
transformed gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import Dense, Network, ParamGrad
from .tensor import ShapeError
from .transforms import TransformPipeline

KINDS = ("sgd", "momentum", "adam", "adamw")


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0  # lambda
    momentum: float = 0.9
    coupled_l2: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}; expected one of {KINDS}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")


@dataclass
class OptimizerState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Optimizer:
    def __init__(self, config: OptimizerConfig | None = None,
                 pipeline: TransformPipeline | None = None, **kwargs):
        self.config = config or OptimizerConfig(**kwargs)
        self.pipeline = pipeline or TransformPipeline()
        self.state = OptimizerState()
        self.lr = self.config.lr

    def step(self, net: Network, grads: list[ParamGrad]) -> list[ParamGrad]:
        """Transform ``grads`` and update ``net`` in place; returns transformed grads."""
        params = net.parameters()
        if len(params) != len(grads):
            raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
        for (name, p), g in zip(params, grads):
            if g.name != name or g.grad.shape != p.shape:
                raise ShapeError(f"gradient {g.name} {g.grad.shape} does not match parameter {name} {p.shape}")

        cfg = self.config
        grads = self.pipeline(grads)
        self.state.t += 1
        t = self.state.t
        for (name, p), g in zip(params, grads):
            ghat = g.grad
            if cfg.coupled_l2 and cfg.weight_decay:
                ghat = ghat + cfg.weight_decay * p
            if cfg.kind == "sgd":
                p -= self.lr * ghat
            elif cfg.kind == "momentum":
                u = self.state.m.setdefault(name, np.zeros_like(p))
                u *= cfg.momentum
                u += ghat
                p -= self.lr * u
            else:
                m = self.state.m.setdefault(name, np.zeros_like(p))
                v = self.state.v.setdefault(name, np.zeros_like(p))
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * ghat
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * (ghat * ghat)
                m_hat = m / (1.0 - cfg.beta1 ** t)
                v_hat = v / (1.0 - cfg.beta2 ** t)
                if cfg.kind == "adamw" and not cfg.coupled_l2 and cfg.weight_decay:
                    p *= 1.0 - self.lr * cfg.weight_decay
                p -= self.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        return grads

    def bias_corrected_moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        t = self.state.t
        return (self.state.m[name] / (1.0 - self.config.beta1 ** t),
                self.state.v[name] / (1.0 - self.config.beta2 ** t))


def step(opt: Optimizer, net: Network, grads: list[ParamGrad]) -> list[ParamGrad]:
    return opt.step(net, grads)


def first_adam_update(ghat, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                      eps: float = 1e-8) -> np.ndarray:
    """Parameter change of one Adam step from a fresh state, computed by a real step."""
    ghat = np.atleast_2d(np.asarray(ghat, dtype=np.float64))
    layer = Dense(ghat.shape[1], ghat.shape[0], bias=False)
    net = Network([layer])
    opt = Optimizer(OptimizerConfig(kind="adam", lr=lr, beta1=beta1, beta2=beta2, eps=eps))
    before = layer.params["weight"].copy()
    opt.step(net, [ParamGrad("layer0.weight", layer.params["weight"], ghat)])
    return layer.params["weight"] - before


def adam_update_magnitude_bound_check(config: OptimizerConfig, ghat) -> bool:
    """True if every element of a fresh Adam step moves by at most ``config.lr``."""
    delta = first_adam_update(ghat, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    # one ulp of slack for the bias-correction division
    return bool(np.all(np.abs(delta) <= config.lr * (1 + 1e-12)))


def lr_at_epoch(base_lr: float, epoch: int, decay_factor: float = 1.0,
                decay_every: int = 0, decay_start: int = 0) -> float:
    """Step schedule: multiply by ``decay_factor`` every ``decay_every`` epochs from ``decay_start``.

    Epochs are 1-based; with ``decay_start=30, decay_every=5`` the first
    reduction applies at epoch 30.
    """
    if decay_every <= 0 or decay_factor == 1.0 or epoch < decay_start:
        return base_lr
    k = (epoch - decay_start) // decay_every + 1
    return base_lr * math.pow(decay_factor, k)
