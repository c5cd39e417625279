"""Layers, networks and exact layer-wise reverse-mode gradients.

Each layer caches what it needs during ``forward`` and returns the gradient
with respect to its input from ``backward``, accumulating parameter
gradients into ``self.grads``. Weight layouts follow the usual conventions:
fully connected weights are ``(out, in)`` and convolution kernels are
``(C_out, C_in, k1, k2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, as_tensor

LOSSES = ("mse", "softmax_ce", "bce")


@dataclass
class ParamGrad:
    name: str
    param: np.ndarray
    grad: np.ndarray

    def __post_init__(self):
        if self.param.shape != self.grad.shape:
            raise ShapeError(
                f"gradient for {self.name!r} has shape {self.grad.shape}, "
                f"parameter has {self.param.shape}"
            )


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


def _bias_init(rng, n: int, fan_in: int) -> np.ndarray:
    # nonzero biases keep pre-activations off the ReLU kink in dead regions
    if rng is None:
        return np.zeros(n)
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=n).astype(np.float64)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        return {"kind": self.kind}

    def named_params(self, prefix: str):
        for key, value in self.params.items():
            yield f"{prefix}.{key}", self, key, value

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, bias: bool = True, rng=None):
        super().__init__()
        if in_dim < 1 or out_dim < 1:
            raise ValueError("dense dimensions must be positive")
        self.in_dim, self.out_dim, self.bias = in_dim, out_dim, bias
        if rng is None:
            w = np.zeros((out_dim, in_dim))
        else:
            w = glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim)
        self.params["weight"] = w
        if bias:
            self.params["bias"] = _bias_init(rng, out_dim, in_dim)
        self.zero_grad()

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"dense expects (N, {self.in_dim}) input, got {x.shape}")
        self._x = x
        y = x @ self.params["weight"].T
        if self.bias:
            y = y + self.params["bias"]
        return y

    def backward(self, dy):
        self.grads["weight"] += dy.T @ self._x
        if self.bias:
            self.grads["bias"] += dy.sum(axis=0)
        return dy @ self.params["weight"]

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim, "bias": self.bias}


def _same_padding(size: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


class Conv2D(Layer):
    """2-D cross-correlation on ``(N, C, H, W)`` inputs via im2col."""

    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, kernel=3, stride: int = 1,
                 padding: str = "same", bias: bool = True, rng=None):
        super().__init__()
        k1, k2 = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
        if stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {stride}")
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        self.c_in, self.c_out, self.k1, self.k2 = c_in, c_out, k1, k2
        self.stride, self.padding, self.bias = stride, padding, bias
        shape = (c_out, c_in, k1, k2)
        if rng is None:
            w = np.zeros(shape)
        else:
            w = glorot_uniform(rng, shape, c_in * k1 * k2, c_out * k1 * k2)
        self.params["weight"] = w
        if bias:
            self.params["bias"] = _bias_init(rng, c_out, c_in * k1 * k2)
        self.zero_grad()

    def _pads(self, h, w):
        if self.padding == "valid":
            return (0, 0), (0, 0)
        return _same_padding(h, self.k1, self.stride), _same_padding(w, self.k2, self.stride)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeError(f"conv2d expects (N, {self.c_in}, H, W) input, got {x.shape}")
        n, _, h, w = x.shape
        ph, pw = self._pads(h, w)
        xp = np.pad(x, ((0, 0), (0, 0), ph, pw)) if any(ph + pw) else x
        if xp.shape[2] < self.k1 or xp.shape[3] < self.k2:
            raise ShapeError(f"conv2d kernel {(self.k1, self.k2)} larger than input {x.shape[2:]}")
        s = self.stride
        win = np.lib.stride_tricks.sliding_window_view(xp, (self.k1, self.k2), axis=(2, 3))
        win = win[:, :, ::s, ::s]
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
        self._cache = (x.shape, xp.shape, ph, pw, ho, wo, cols)
        y = cols @ self.params["weight"].reshape(self.c_out, -1).T
        if self.bias:
            y = y + self.params["bias"]
        return np.ascontiguousarray(y.reshape(n, ho, wo, self.c_out).transpose(0, 3, 1, 2))

    def backward(self, dy):
        x_shape, xp_shape, ph, pw, ho, wo, cols = self._cache
        n = x_shape[0]
        dy_mat = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.c_out)
        wmat = self.params["weight"].reshape(self.c_out, -1)
        self.grads["weight"] += (dy_mat.T @ cols).reshape(self.params["weight"].shape)
        if self.bias:
            self.grads["bias"] += dy_mat.sum(axis=0)
        dcols = (dy_mat @ wmat).reshape(n, ho, wo, self.c_in, self.k1, self.k2)
        dxp = np.zeros(xp_shape)
        s = self.stride
        for i in range(self.k1):
            for j in range(self.k2):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, ph[0]:ph[0] + x_shape[2], pw[0]:pw[0] + x_shape[3]]

    def config(self):
        return {"kind": self.kind, "c_in": self.c_in, "c_out": self.c_out,
                "kernel": [self.k1, self.k2], "stride": self.stride,
                "padding": self.padding, "bias": self.bias}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        # derivative at exactly 0 is taken as 0
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        self._y = _sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class GlobalAveragePool(Layer):
    kind = "gap"

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"global average pool expects (N, C, H, W), got {x.shape}")
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        n, c, h, w = self._shape
        return np.broadcast_to(dy[:, :, None, None] / (h * w), self._shape).copy()


class ResidualBlock(Layer):
    """``z = f(z) + z`` with ``f`` the inner layer sequence."""

    kind = "residual"

    def __init__(self, inner: list[Layer]):
        super().__init__()
        self.inner = list(inner)

    def forward(self, x):
        y = x
        for layer in self.inner:
            y = layer.forward(y)
        if y.shape != x.shape:
            raise ShapeError(f"residual inner path maps {x.shape} to {y.shape}")
        return y + x

    def backward(self, dy):
        g = dy
        for layer in reversed(self.inner):
            g = layer.backward(g)
        return g + dy

    def named_params(self, prefix):
        for j, layer in enumerate(self.inner):
            yield from layer.named_params(f"{prefix}.inner{j}")

    def zero_grad(self):
        for layer in self.inner:
            layer.zero_grad()

    def config(self):
        return {"kind": self.kind, "inner": [layer.config() for layer in self.inner]}


LAYER_KINDS = {cls.kind: cls for cls in (Dense, Conv2D, ReLU, Sigmoid, GlobalAveragePool, ResidualBlock)}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    if kind == "residual":
        return ResidualBlock([layer_from_config(c) for c in cfg["inner"]])
    return LAYER_KINDS[kind](**cfg)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def loss_and_grad(kind: str, out: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient with respect to ``out``.

    mse: per-sample sum of squared errors, averaged over the batch.
    softmax_ce: integer class targets, logits in ``out``.
    bce: logits in ``out``, {0,1} targets with the same element count; mean
    over all elements.
    """
    n = out.shape[0]
    if kind == "mse":
        t = as_tensor(targets).reshape(out.shape)
        diff = out - t
        return float(np.sum(diff * diff) / n), 2.0 * diff / n
    if kind == "softmax_ce":
        labels = np.asarray(targets).astype(np.int64).reshape(-1)
        if labels.shape[0] != n or out.ndim != 2:
            raise ShapeError(f"softmax_ce expects (N, K) logits and N labels, got {out.shape} and {labels.shape}")
        z = out - out.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        logp = z - logsum[:, None]
        idx = np.arange(n)
        loss = float(-logp[idx, labels].sum() / n)
        grad = np.exp(logp)
        grad[idx, labels] -= 1.0
        return loss, grad / n
    if kind == "bce":
        t = as_tensor(targets).reshape(out.shape)
        m = out.size
        # log(1 + exp(-|x|)) form is stable for large |x|
        loss = np.maximum(out, 0) - out * t + np.log1p(np.exp(-np.abs(out)))
        return float(loss.sum() / m), (_sigmoid(out) - t) / m
    raise ValueError(f"unknown loss {kind!r}")


class Network:
    def __init__(self, layers: list[Layer], loss: str = "mse"):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
        self.layers = list(layers)
        self.loss = loss
        names = [name for name, *_ in self._named()]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    def _named(self):
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"layer{i}")

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(name, value) for name, _, _, value in self._named()]

    def param_count(self) -> int:
        return sum(v.size for _, v in self.parameters())

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        for pname, layer, key, old in self._named():
            if pname == name:
                if old.shape != value.shape:
                    raise ShapeError(f"{name}: expected {old.shape}, got {value.shape}")
                layer.params[key] = as_tensor(value)
                return
        raise KeyError(name)

    def predict(self, x) -> np.ndarray:
        y = as_tensor(x)
        for layer in self.layers:
            y = layer.forward(y)
        return y

    def forward(self, x, targets) -> tuple[np.ndarray, float]:
        out = self.predict(x)
        loss, _ = loss_and_grad(self.loss, out, targets)
        return out, loss

    def backward(self, x, targets) -> tuple[float, list[ParamGrad]]:
        """Recompute the forward pass, backpropagate, return loss and grads."""
        out = self.predict(x)
        loss, g = loss_and_grad(self.loss, out, targets)
        for layer in self.layers:
            layer.zero_grad()
        for layer in reversed(self.layers):
            g = layer.backward(g)
        grads = [ParamGrad(name, value, layer.grads[key]) for name, layer, key, value in self._named()]
        return loss, grads

    def validate(self, input_shape) -> tuple[int, ...]:
        """Run a dummy sample through to check layer shapes compose."""
        return self.predict(np.zeros((1, *input_shape))).shape[1:]

    def config(self) -> dict:
        return {"loss": self.loss, "layers": [layer.config() for layer in self.layers]}

    @classmethod
    def from_config(cls, cfg: dict) -> "Network":
        return cls([layer_from_config(c) for c in cfg["layers"]], loss=cfg["loss"])


def forward(net: Network, inputs, targets):
    return net.forward(inputs, targets)


def backward(net: Network, inputs, targets) -> list[ParamGrad]:
    return net.backward(inputs, targets)[1]


@dataclass
class GradCheckReport:
    h: float
    tol: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def lines(self) -> list[str]:
        out = [f"{name:40s} max_rel_err={err:.3e}" for name, err in self.errors.items()]
        out.append(f"{'PASS' if self.passed else 'FAIL'} max_rel_err={self.max_error:.3e} tol={self.tol:g} h={self.h:g}")
        return out


def grad_check(net: Network, inputs, targets, h: float = 1e-4, tol: float = 1e-4,
               floor: float = 1e-6, max_elements: int = 10_000) -> GradCheckReport:
    """Compare analytic gradients against central differences, element by element.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    near-zero entries from turning rounding noise into large ratios.
    """
    if net.param_count() > max_elements:
        raise ValueError(f"network has {net.param_count()} parameters; grad_check limit is {max_elements}")
    _, grads = net.backward(inputs, targets)
    analytic = {g.name: g.grad.copy() for g in grads}
    report = GradCheckReport(h=h, tol=tol)
    for name, value in net.parameters():
        flat = value.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = net.forward(inputs, targets)[1]
            flat[i] = orig - h
            lm = net.forward(inputs, targets)[1]
            flat[i] = orig
            numeric[i] = (lp - lm) / (2 * h)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        report.errors[name] = float(np.max(np.abs(a - numeric) / denom))
    return report


def relu_margin(net: Network, x) -> float:
    """Smallest |input| seen by any ReLU for the batch ``x``."""
    margin = math.inf

    def walk(layers, y):
        nonlocal margin
        for layer in layers:
            if isinstance(layer, ReLU) and y.size:
                margin = min(margin, float(np.min(np.abs(y))))
            if isinstance(layer, ResidualBlock):
                y = walk(layer.inner, y) + y
            else:
                y = layer.forward(y)
        return y

    walk(net.layers, as_tensor(x))
    return margin


def kink_free_indices(net: Network, x, count: int, margin: float, order=None) -> list[int]:
    """Pick up to ``count`` samples whose ReLU inputs all satisfy ``|z| > margin``."""
    order = range(len(x)) if order is None else order
    picked = []
    for i in order:
        if relu_margin(net, x[i:i + 1]) > margin:
            picked.append(int(i))
            if len(picked) == count:
                break
    return picked


def _block_inner(width: int, rng) -> list[Layer]:
    return [Dense(width, width, rng=rng), ReLU(), Dense(width, width, rng=rng)]


def make_residual_mlp(width: int, depth: int, in_dim: int, out_dim: int, seed: int,
                      loss: str = "softmax_ce", skip: bool = True) -> Network:
    """Dense stem, ``depth`` blocks of Dense-ReLU-Dense, Dense head.

    With ``skip=False`` the same layers are stacked without the identity
    path (a plain MLP of equal parameter count).
    """
    if min(width, depth, in_dim, out_dim) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = [Dense(in_dim, width, rng=rng), ReLU()]
    for _ in range(depth):
        inner = _block_inner(width, rng)
        layers.extend([ResidualBlock(inner)] if skip else inner + [ReLU()])
    layers.append(Dense(width, out_dim, rng=rng))
    return Network(layers, loss=loss)


def make_tiny_resnet(channels: int, blocks: int, classes: int, seed: int,
                     in_channels: int = 3, stem_stride: int = 2) -> Network:
    """Conv stem, residual conv blocks, global average pool, dense classifier."""
    if min(channels, blocks, classes, in_channels) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = [Conv2D(in_channels, channels, 3, stride=stem_stride, rng=rng), ReLU()]
    for _ in range(blocks):
        layers.append(ResidualBlock([
            Conv2D(channels, channels, 3, rng=rng), ReLU(), Conv2D(channels, channels, 3, rng=rng),
        ]))
        layers.append(ReLU())
    layers += [GlobalAveragePool(), Dense(channels, classes, rng=rng)]
    return Network(layers, loss="softmax_ce")


def make_tiny_segnet(channels: int, blocks: int, seed: int, in_channels: int = 1) -> Network:
    """Fully convolutional residual net emitting one logit per pixel."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = [Conv2D(in_channels, channels, 3, rng=rng), ReLU()]
    for _ in range(blocks):
        layers.append(ResidualBlock([
            Conv2D(channels, channels, 3, rng=rng), ReLU(), Conv2D(channels, channels, 3, rng=rng),
        ]))
        layers.append(ReLU())
    layers.append(Conv2D(channels, 1, 1, rng=rng))
    return Network(layers, loss="bce")


def make_linear_net(in_dim: int, out_dim: int, seed: int, hidden: int | None = None) -> Network:
    rng = np.random.default_rng(seed)
    if hidden is None:
        return Network([Dense(in_dim, out_dim, rng=rng)], loss="mse")
    return Network([Dense(in_dim, hidden, rng=rng), Dense(hidden, out_dim, rng=rng)], loss="mse")


def make_scalar_chain(depth: int, gain: float, skip: bool) -> Network:
    """Scalar linear chain: input weight 1, then ``depth`` layers of weight ``gain``.

    With ``skip`` each gain layer sits inside a residual block, so the
    backward factor per layer is ``gain + 1`` instead of ``gain``.
    """
    first = Dense(1, 1, bias=False)
    first.params["weight"] = np.ones((1, 1))
    layers: list[Layer] = [first]
    for _ in range(depth):
        d = Dense(1, 1, bias=False)
        d.params["weight"] = np.full((1, 1), float(gain))
        d.zero_grad()
        layers.append(ResidualBlock([d]) if skip else d)
    return Network(layers, loss="mse")
