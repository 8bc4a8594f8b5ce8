"""Block-coordinate descent for null-space subspace identification.

Alternates a closed-form basis update (smallest left singular vectors of
the feature matrix) with minibatch Adam updates of the per-channel
forward maps f_m and their reconstructors r_m. The composite objective is
the mean squared projection of the features onto the candidate null
space, plus a weighted autoencoding penalty that keeps the f_m invertible
and rules out constant collapse.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (BasisDensityWarning, DegenerateSpectrumWarning,
                     NumericFailure, ValidationError)
from .model import MixtureDataset
from .nets import ChannelNet, forward_batch, init_net

ORTH_TOL = 1e-8
DENSITY_TOL = 1e-12


@dataclass(frozen=True)
class NullBasis:
    """Orthonormal M x D candidate basis for the left null space."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "Q", Q)
        if Q.ndim != 2 or Q.shape[1] >= Q.shape[0] or Q.shape[1] < 1:
            raise ValidationError("Q must be M x D with 1 <= D < M")
        if self.orth_deviation() > ORTH_TOL:
            raise ValidationError(
                f"Q not orthonormal: max |QtQ - I| = {self.orth_deviation():.2e}"
            )

    @property
    def D(self) -> int:
        return self.Q.shape[1]

    def orth_deviation(self) -> float:
        D = self.Q.shape[1]
        return float(np.abs(self.Q.T @ self.Q - np.eye(D)).max())

    def min_abs_entry(self) -> float:
        return float(np.abs(self.Q).min())


def update_q(F, D: int) -> NullBasis:
    """Closed-form basis update: the D left singular vectors of F with the
    smallest singular values. Among all orthonormal M x D matrices this
    minimizes the summed squared projections of F's columns."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise ValidationError("F must be a matrix")
    M, N = F.shape
    if not 1 <= D < M:
        raise ValidationError(f"need 1 <= D < M, got D={D}, M={M}")
    U, s, _ = np.linalg.svd(F, full_matrices=(N < M))
    if N < M:
        s = np.concatenate([s, np.zeros(M - s.size)])
    near_zero = int(np.sum(s <= 1e-12 * max(s[0], np.finfo(float).tiny)))
    if near_zero > D:
        warnings.warn(
            f"feature matrix has {near_zero} vanishing singular values for "
            f"D={D}; basis choice is tie-broken by singular-vector order",
            DegenerateSpectrumWarning, stacklevel=2)
    basis = NullBasis(Q=U[:, M - D:])
    if basis.min_abs_entry() < DENSITY_TOL:
        warnings.warn(
            f"null basis contains an entry of magnitude "
            f"{basis.min_abs_entry():.2e}; identifiability arguments assume "
            "a dense basis", BasisDensityWarning, stacklevel=2)
    return basis


def apply_channels(nets, X) -> np.ndarray:
    """Row m of the result is nets[m] applied to row m of X."""
    X = np.asarray(X, dtype=float)
    if len(nets) != X.shape[0]:
        raise ValidationError("one net per channel required")
    return np.stack([forward_batch(net, X[m]) for m, net in enumerate(nets)])


def loss(basis: NullBasis, f_nets, r_nets, X, lam: float):
    """Composite loss on a batch: (L1, L2, L1 + lam * L2).

    L1 is the mean squared norm of the basis projection of the features,
    L2 the mean squared reconstruction error of the autoencoding pair.
    """
    X = np.asarray(X, dtype=float)
    if basis.Q.shape[0] != X.shape[0]:
        raise ValidationError("basis/channel count mismatch")
    Y = apply_channels(f_nets, X)
    l1 = float(np.mean(np.sum((basis.Q.T @ Y) ** 2, axis=0)))
    T = apply_channels(r_nets, Y)
    l2 = float(np.mean(np.sum((X - T) ** 2, axis=0)))
    return l1, l2, l1 + lam * l2


@dataclass(frozen=True)
class TrainConfig:
    D: int
    R: int = 256
    depth: int = 1
    activation: str = "relu"
    lam: float = 1e-4
    lr: float = 2e-4
    batch_size: int = 256
    outer_iters: int = 50
    inner_epochs_per_outer: int = 1
    seed: int = 0
    bias_mode: str = "on"

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")
        if self.D < 1:
            raise ValidationError("D must be >= 1")
        if self.lr <= 0:
            raise ValidationError("lr must be > 0")
        if self.batch_size < 1 or self.outer_iters < 1:
            raise ValidationError("batch_size and outer_iters must be >= 1")
        if self.inner_epochs_per_outer < 0:
            raise ValidationError("inner_epochs_per_outer must be >= 0")
        if self.bias_mode not in ("on", "off"):
            raise ValidationError("bias_mode must be 'on' or 'off'")


@dataclass
class TrainTrace:
    """Per-outer-iteration records; all lists share one length equal to
    the number of outer iterations actually run."""

    L1: list = field(default_factory=list)
    L2: list = field(default_factory=list)
    L: list = field(default_factory=list)
    orth_dev: list = field(default_factory=list)
    min_q: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.L1)

    def rows(self):
        for i in range(len(self)):
            yield (i, self.L1[i], self.L2[i], self.L[i],
                   self.orth_dev[i], self.min_q[i], self.seconds[i])


@dataclass
class TrainResult:
    f: list
    r: list
    basis: NullBasis
    trace: TrainTrace


EARLY_STOP_REL = 1e-5
EARLY_STOP_WINDOW = 5


class _StackedChannels:
    """All M channel nets fused into batched arrays for the hot loop.

    Every channel shares the same widths/activation, so layer i can hold
    one (M, out, in) weight block and one (M, out) bias block; batched
    matmuls then update all channels at once. The math matches running
    the per-net forward/backward channel by channel; the hot loop runs in
    single precision (the workload is memory-bound) while basis updates
    and trace losses stay in double precision.
    """

    dtype = np.float32

    def __init__(self, nets):
        first = nets[0]
        for net in nets:
            if net.widths != first.widths or net.activation != first.activation:
                raise ValidationError("channel nets must share a shape")
        self.activation = first.activation
        self.weights = [np.stack([net.weights[i] for net in nets])
                        .astype(self.dtype) for i in range(len(first.weights))]
        self.biases = [np.stack([net.biases[i] for net in nets])
                       .astype(self.dtype) for i in range(len(first.biases))]

    def unpack(self):
        M = self.weights[0].shape[0]
        return [ChannelNet([W[m].astype(np.float64) for W in self.weights],
                           [b[m].astype(np.float64) for b in self.biases],
                           self.activation)
                for m in range(M)]

    def forward_cached(self, X):
        # Hidden activations are kept in place of preactivations: for both
        # relu and tanh the activation gradient is a function of the
        # output (h > 0 resp. 1 - h^2), so no extra buffers are needed.
        h = X[:, None, :]
        acts = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = W @ h
            h += b[:, :, None]
            if i != last:
                if self.activation == "relu":
                    np.maximum(h, 0.0, out=h)
                else:
                    np.tanh(h, out=h)
            acts.append(h)
        return h[:, 0, :], acts

    def backward(self, upstream, acts):
        last = len(self.weights) - 1
        delta = upstream[:, None, :]
        grads = [None] * len(self.weights)
        for i in range(last, -1, -1):
            if i != last:
                h = acts[i + 1]
                if self.activation == "relu":
                    delta *= h > 0.0
                else:
                    delta *= 1.0 - h * h
            dW = delta @ acts[i].transpose(0, 2, 1)
            db = delta.sum(axis=2)
            grads[i] = (dW, db)
            if i > 0:
                delta = self.weights[i].transpose(0, 2, 1) @ delta
        input_grad = (self.weights[0].transpose(0, 2, 1) @ delta)[:, 0, :]
        return grads, input_grad


class _StackedAdam:
    """Bias-corrected Adam over a stacked parameter set, in place."""

    def __init__(self, stacked, lr):
        self.m = [(np.zeros_like(W), np.zeros_like(b))
                  for W, b in zip(stacked.weights, stacked.biases)]
        self.v = [(np.zeros_like(W), np.zeros_like(b))
                  for W, b in zip(stacked.weights, stacked.biases)]
        self.t = 0
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8

    def step(self, stacked, grads, update_bias=True):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (dW, db) in enumerate(grads):
            slots = [(stacked.weights[i], dW, self.m[i][0], self.v[i][0])]
            if update_bias:
                slots.append((stacked.biases[i], db, self.m[i][1], self.v[i][1]))
            for theta, grad, m, v in slots:
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad ** 2
                theta -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(dataset: MixtureDataset, cfg: TrainConfig,
          init_f=None, init_r=None) -> TrainResult:
    """Run the alternating scheme on a dataset.

    Each outer iteration recomputes the basis from the full feature
    matrix, then runs `inner_epochs_per_outer` shuffled minibatch epochs
    updating f (projection + weighted reconstruction gradient) and r
    (reconstruction gradient only). Deterministic given cfg.seed and a
    fixed thread count. Optional init_f/init_r replace the random
    networks, e.g. with exact identity maps for distortion-free checks.
    """
    X = dataset.X
    M, N = X.shape
    if cfg.D >= M:
        raise ValidationError(f"D={cfg.D} must be < M={M}")
    if cfg.batch_size > N:
        raise ValidationError(f"batch_size={cfg.batch_size} exceeds N={N}")
    if not np.all(np.isfinite(X)):
        raise NumericFailure("dataset contains non-finite values")

    rng = np.random.default_rng(cfg.seed)
    center = cfg.bias_mode == "on"
    if init_f is None:
        f_nets = [init_net(cfg.R, cfg.depth, cfg.activation, rng)
                  for _ in range(M)]
        for m, net in enumerate(f_nets):
            _fold_input(net, X[m], center)
    else:
        f_nets = [net.copy() for net in init_f]
    if init_r is None:
        r_nets = [init_net(cfg.R, cfg.depth, cfg.activation, rng)
                  for _ in range(M)]
        for m, net in enumerate(r_nets):
            _fold_input(net, forward_batch(f_nets[m], X[m]), center)
            _fold_output(net, X[m], center)
    else:
        r_nets = [net.copy() for net in init_r]
    if len(f_nets) != M or len(r_nets) != M:
        raise ValidationError("need one f and one r net per channel")
    update_bias = cfg.bias_mode == "on"
    f_stack = _StackedChannels(f_nets)
    r_stack = _StackedChannels(r_nets)
    f_adam = _StackedAdam(f_stack, cfg.lr)
    r_adam = _StackedAdam(r_stack, cfg.lr)

    trace = TrainTrace()
    basis = None
    flat_count = 0
    stop = False
    t0 = time.perf_counter()

    def record(prev_basis, F):
        # Losses of the state reached at the end of an outer iteration;
        # F is the feature matrix of that state, reused for the next
        # basis update so the full forward pass runs once per iteration.
        nonlocal t0, flat_count
        proj = prev_basis.Q.T @ F.astype(np.float64)
        l1 = float(np.sum(proj ** 2)) / N
        l2 = _reconstruction_loss(r_stack, F, X)
        l = l1 + cfg.lam * l2
        if not np.isfinite(l):
            raise NumericFailure(
                _nan_diagnostic(len(trace), f_stack.unpack(),
                                r_stack.unpack(), X))
        trace.L1.append(l1)
        trace.L2.append(l2)
        trace.L.append(l)
        trace.orth_dev.append(prev_basis.orth_deviation())
        trace.min_q.append(prev_basis.min_abs_entry())
        now = time.perf_counter()
        trace.seconds.append(now - t0)
        t0 = now
        if len(trace) > 1:
            prev = trace.L[-2]
            rel = abs(trace.L[-1] - prev) / max(abs(prev), 1e-300)
            flat_count = flat_count + 1 if rel < EARLY_STOP_REL else 0
        return flat_count >= EARLY_STOP_WINDOW

    X32 = X.astype(_StackedChannels.dtype)
    for outer in range(cfg.outer_iters):
        F = _stacked_apply(f_stack, X32)
        if outer > 0 and record(basis, F):
            stop = True
            break
        basis = update_q(F.astype(np.float64), cfg.D)
        Q = basis.Q.astype(_StackedChannels.dtype)
        for _ in range(cfg.inner_epochs_per_outer):
            order = rng.permutation(N)
            for start in range(0, N, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                xb = X32[:, idx]
                b = idx.size
                Y, f_cache = f_stack.forward_cached(xb)
                d_l1 = (2.0 / b) * (Q @ (Q.T @ Y))
                T, r_cache = r_stack.forward_cached(Y)
                d_l2_t = (2.0 / b) * (T - xb)
                # f follows grad(L1 + lam * L2); r follows grad(L2).
                r_grads, d_l2_y = r_stack.backward(d_l2_t, r_cache)
                f_grads, _ = f_stack.backward(d_l1 + cfg.lam * d_l2_y,
                                              f_cache)
                f_adam.step(f_stack, f_grads, update_bias)
                r_adam.step(r_stack, r_grads, update_bias)
    if not stop:
        record(basis, _stacked_apply(f_stack, X32))
    return TrainResult(f=f_stack.unpack(), r=r_stack.unpack(), basis=basis,
                       trace=trace)


_CHUNK = 1024


def _stacked_apply(stack: _StackedChannels, X) -> np.ndarray:
    """Full-data forward in column chunks to bound peak memory."""
    N = X.shape[1]
    out = np.empty_like(X)
    for start in range(0, N, _CHUNK):
        cols = slice(start, min(start + _CHUNK, N))
        out[:, cols] = stack.forward_cached(X[:, cols])[0]
    return out


def _reconstruction_loss(r_stack, F, X) -> float:
    N = X.shape[1]
    sq = 0.0
    for start in range(0, N, _CHUNK):
        cols = slice(start, min(start + _CHUNK, N))
        T = r_stack.forward_cached(F[:, cols])[0]
        sq += float(np.sum((X[:, cols] - T) ** 2))
    return sq / N


def _fold_input(net: ChannelNet, samples, center: bool) -> None:
    """Fold per-channel input standardization into the first layer.

    Channels carry wildly different scales once distorted (an exponential
    channel spans two orders of magnitude while a sigmoid channel lives
    in (0, 1)), and zero biases put every activation breakpoint at the
    origin, outside the data of any one-sided channel - which leaves that
    channel's learner exactly affine on its own data, with no curvature
    gradient to escape with. Reparameterizing the random initialization
    to act on (x - mean) / std makes the initial learner distribution
    identical for every channel relative to its data. Centering uses the
    bias terms, so it is skipped in bias-free mode.
    """
    mu = float(np.mean(samples)) if center else 0.0
    sigma = float(np.std(samples))
    if sigma == 0.0:
        sigma = 1.0
    net.weights[0] /= sigma
    net.biases[0] -= net.weights[0][:, 0] * mu


def _fold_output(net: ChannelNet, samples, center: bool) -> None:
    """Fold de-standardization of the target scale into the last layer,
    so a reconstructor starts producing values at its channel's scale."""
    mu = float(np.mean(samples)) if center else 0.0
    sigma = float(np.std(samples))
    if sigma == 0.0:
        sigma = 1.0
    net.weights[-1] *= sigma
    net.biases[-1] *= sigma
    net.biases[-1] += mu


def _nan_diagnostic(outer, f_nets, r_nets, X) -> str:
    bad = []
    for m, net in enumerate(f_nets):
        y = forward_batch(net, X[m]) if np.all(np.isfinite(X[m])) else [np.nan]
        if not np.all(np.isfinite(y)):
            bad.append(m)
    norms = ["%.3e" % max(float(np.abs(W).max()) for W in net.weights)
             for net in f_nets + r_nets]
    return (f"non-finite loss at outer iteration {outer}; "
            f"channels with non-finite features: {bad or 'none'}; "
            f"max |weight| per net: {', '.join(norms)}")
