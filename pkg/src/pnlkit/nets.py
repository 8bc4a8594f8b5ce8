"""Scalar-to-scalar shallow networks with exact analytic gradients.

Each channel learner is a small dense network with widths
[1, R, ..., R, 1], activation on hidden layers only, trained with a
hand-rolled bias-corrected Adam. No autodiff framework: everything is
explicit numpy so the arithmetic is auditable and deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericFailure, ValidationError

RELU = "relu"
TANH = "tanh"
ACTIVATIONS = (RELU, TANH)


@dataclass
class ChannelNet:
    """Weights/biases for one scalar map. weights[i] has shape
    (out_i, in_i); the final layer is linear."""

    weights: list
    biases: list
    activation: str = RELU

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValidationError("weights/biases must be parallel, nonempty")
        if self.weights[0].shape[1] != 1 or self.weights[-1].shape[0] != 1:
            raise ValidationError("input and output dimension must both be 1")
        for W, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValidationError("non-finite parameters")

    @property
    def widths(self) -> list:
        return [1] + [W.shape[0] for W in self.weights]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return forward(self, float(x))
        return forward_batch(self, x)

    def copy(self) -> "ChannelNet":
        return ChannelNet([W.copy() for W in self.weights],
                          [b.copy() for b in self.biases], self.activation)


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == RELU else np.tanh(z)


def _act_grad(z, kind):
    # ReLU subgradient at exactly 0 is taken as 0.
    return (z > 0.0).astype(float) if kind == RELU else 1.0 - np.tanh(z) ** 2


def init_net(R: int, depth: int = 1, activation: str = RELU,
             rng=None) -> ChannelNet:
    """Random network with `depth` hidden layers of width R. Weights are
    i.i.d. normal with variance 1/R, biases zero (so the net maps 0 to 0
    at initialization). Bias-free training keeps the biases at zero, which
    coincides with the bias-free architecture."""
    if R < 1 or depth < 1:
        raise ValidationError("R and depth must be >= 1")
    rng = np.random.default_rng(rng)
    std = R ** -0.5
    dims = [1] + [R] * depth + [1]
    weights = [std * rng.standard_normal((dims[i + 1], dims[i]))
               for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return ChannelNet(weights, biases, activation)


def identity_net() -> ChannelNet:
    """Exact identity map: relu(x) - relu(-x) = x."""
    return ChannelNet(
        [np.array([[1.0], [-1.0]]), np.array([[1.0, -1.0]])],
        [np.zeros(2), np.zeros(1)],
        RELU,
    )


def _forward_cached(net: ChannelNet, x: np.ndarray):
    """Run the net on a batch (n,) and keep preactivations for backward."""
    h = x[None, :]
    pre = []
    acts = [h]
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = W @ h + b[:, None]
        pre.append(z)
        h = z if i == last else _act(z, net.activation)
        acts.append(h)
    return h[0], (pre, acts)


def forward_batch(net: ChannelNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericFailure("non-finite input to forward pass")
    y, _ = _forward_cached(net, x)
    return y


def forward(net: ChannelNet, x: float) -> float:
    """Evaluate the net at a single point."""
    return float(forward_batch(net, np.array([float(x)]))[0])


def backward_batch(net: ChannelNet, x, upstream, cache=None):
    """Gradients of sum_l upstream[l] * net(x[l]).

    Returns (param_grads, input_grad): param_grads is a list of (dW, db)
    summed over the batch, input_grad has one entry per sample.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if cache is None:
        _, cache = _forward_cached(net, x)
    pre, acts = cache
    last = len(net.weights) - 1
    delta = upstream[None, :]
    grads = [None] * len(net.weights)
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * _act_grad(pre[i], net.activation)
        dW = delta @ acts[i].T
        db = delta.sum(axis=1)
        grads[i] = (dW, db)
        delta = net.weights[i].T @ delta
    return grads, delta[0]


def backward(net: ChannelNet, x: float, upstream_grad: float = 1.0):
    """Single-point gradients of upstream_grad * net(x)."""
    grads, dx = backward_batch(net, np.array([float(x)]),
                               np.array([float(upstream_grad)]))
    return grads, float(dx[0])


@dataclass
class AdamState:
    """First/second moment accumulators mirroring one net's parameters."""

    m: list
    v: list
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: ChannelNet, lr: float = 2e-4) -> "AdamState":
        zeros = lambda: [(np.zeros_like(W), np.zeros_like(b))
                         for W, b in zip(net.weights, net.biases)]
        return cls(m=zeros(), v=zeros(), lr=lr)


def adam_step(net: ChannelNet, grads, state: AdamState,
              update_bias: bool = True) -> None:
    """One bias-corrected Adam update, in place."""
    if len(grads) != len(net.weights):
        raise ValidationError("gradient/parameter layer count mismatch")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for i, (dW, db) in enumerate(grads):
        if dW.shape != net.weights[i].shape or db.shape != net.biases[i].shape:
            raise ValidationError(f"gradient shape mismatch at layer {i}")
        pairs = [(net.weights[i], dW, 0), (net.biases[i], db, 1)]
        for theta, grad, slot in pairs:
            if slot == 1 and not update_bias:
                continue
            m = state.m[i][slot]
            v = state.v[i][slot]
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad ** 2
            theta -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def weight_norms(net: ChannelNet) -> list:
    """ 2-norm of each layer's weight block (flattened)."""
    return [float(np.linalg.norm(W.ravel())) for W in net.weights]


def save_net(path, net: ChannelNet) -> None:
    blob = {
        "widths": net.widths,
        "activation": net.activation,
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    Path(path).write_text(json.dumps(blob) + "\n")


def load_net(path) -> ChannelNet:
    try:
        blob = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    weights = [np.asarray(W, dtype=float) for W in blob["weights"]]
    biases = [np.asarray(b, dtype=float) for b in blob["biases"]]
    net = ChannelNet(weights, biases, blob["activation"])
    if net.widths != blob["widths"]:
        raise ValidationError(f"{path}: widths disagree with stored arrays")
    return net
