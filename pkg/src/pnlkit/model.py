"""Generative model for post-nonlinear (PNL) mixtures.

Observations follow x = g(A s): a tall linear mixing matrix A followed by
an unknown invertible scalar distortion g_m on each output channel. This
module provides the distortion catalog, model/latent specifications, and
seeded synthetic data generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .errors import DomainError, ValidationError

SCALED_EXP = "scaled_exp"
SCALED_SIGMOID = "scaled_sigmoid"
SCALED_TANH_LINEAR = "scaled_tanh_plus_linear"
NONLINEARITY_KINDS = (SCALED_EXP, SCALED_SIGMOID, SCALED_TANH_LINEAR)

INDEPENDENT_UNIFORM = "independent_uniform"
SIMPLEX = "simplex"

_MONOTONE_GRID = np.linspace(-10.0, 10.0, 1000)


@dataclass(frozen=True)
class Nonlinearity:
    """One invertible scalar distortion from the catalog.

    kind=scaled_exp:          y = beta * exp(alpha * z)
    kind=scaled_sigmoid:      y = beta * sigmoid(alpha * z)
    kind=scaled_tanh_plus_linear: y = beta * tanh(alpha * z) + gamma * z

    The tanh variant keeps a linear leak gamma > 0 so its range is all of
    R; with beta = 0 and gamma = 1 it degenerates to the identity, which
    is the canonical distortion-free channel.
    """

    kind: str
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ValidationError(f"unknown nonlinearity kind {self.kind!r}")
        if self.alpha == 0.0:
            raise ValidationError("alpha must be nonzero")
        if self.gamma < 0.0:
            raise ValidationError("gamma must be >= 0")
        if self.beta == 0.0:
            # A vanishing output scale is only meaningful for the tanh
            # variant, where the linear leak keeps the map invertible.
            if self.kind != SCALED_TANH_LINEAR or self.gamma <= 0.0:
                raise ValidationError("beta must be nonzero")
        grid_y = self(_MONOTONE_GRID)
        if not np.all(np.diff(grid_y) > 0.0):
            raise ValidationError(
                f"{self.kind}(alpha={self.alpha}, beta={self.beta}, "
                f"gamma={self.gamma}) is not strictly increasing"
            )

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == SCALED_EXP:
            y = self.beta * np.exp(self.alpha * z)
        elif self.kind == SCALED_SIGMOID:
            y = self.beta * expit(self.alpha * z)
        else:
            y = self.beta * np.tanh(self.alpha * z) + self.gamma * z
        return float(y) if y.ndim == 0 else y

    def inverse(self, y: float) -> float:
        """Invert the distortion at a single point.

        Closed form where available; the general tanh-plus-linear case
        falls back to bisection with bracket width 1e-12. Raises
        DomainError when y is outside the range of the map.
        """
        y = float(y)
        if self.kind == SCALED_EXP:
            t = y / self.beta
            if t <= 0.0:
                raise DomainError(f"{y} outside range of {self.kind}")
            return math.log(t) / self.alpha
        if self.kind == SCALED_SIGMOID:
            t = y / self.beta
            if not 0.0 < t < 1.0:
                raise DomainError(f"{y} outside range of {self.kind}")
            return float(logit(t)) / self.alpha
        if self.beta == 0.0:
            return y / self.gamma
        if self.gamma == 0.0:
            t = y / self.beta
            if not -1.0 < t < 1.0:
                raise DomainError(f"{y} outside range of {self.kind}")
            return math.atanh(t) / self.alpha
        return self._bisect(y)

    def _bisect(self, y: float, width: float = 1e-12) -> float:
        lo, hi = -1.0, 1.0
        while self(lo) > y:
            lo *= 2.0
        while self(hi) < y:
            hi *= 2.0
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def identity_nonlinearity() -> Nonlinearity:
    """The catalog member that is exactly the identity map."""
    return Nonlinearity(SCALED_TANH_LINEAR, alpha=1.0, beta=0.0, gamma=1.0)


@dataclass(frozen=True)
class PnlModel:
    """Ground-truth mixing matrix and per-channel distortions."""

    A: np.ndarray
    g: tuple[Nonlinearity, ...]

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "g", tuple(self.g))
        if A.ndim != 2:
            raise ValidationError("A must be a matrix")
        M, K = A.shape
        if M <= K:
            raise ValidationError(
                f"M={M} <= K={K}: null space of A^T is trivial"
            )
        if not np.all(np.isfinite(A)):
            raise ValidationError("A has non-finite entries")
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise ValidationError("A is column-rank deficient")
        if len(self.g) != M:
            raise ValidationError(f"need {M} nonlinearities, got {len(self.g)}")

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class LatentSpec:
    """Distribution of the latent components.

    independent_uniform: K i.i.d. U[lo, hi] coordinates (all K free).
    simplex: flat Dirichlet on the probability simplex; only K-1
    coordinates can vary freely once the sum-to-one constraint binds.
    """

    kind: str
    K: int
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in (INDEPENDENT_UNIFORM, SIMPLEX):
            raise ValidationError(f"unknown latent kind {self.kind!r}")
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.kind == INDEPENDENT_UNIFORM and not self.lo < self.hi:
            raise ValidationError("need lo < hi")

    @property
    def free_count(self) -> int:
        return self.K if self.kind == INDEPENDENT_UNIFORM else self.K - 1


@dataclass(frozen=True)
class MixtureDataset:
    """N observed samples, plus ground-truth latents when synthetic."""

    X: np.ndarray
    S: np.ndarray | None = None
    Z: np.ndarray | None = None
    seed: int | None = None

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]


def sample_model(M, K, nonlinearity_kinds=NONLINEARITY_KINDS, seed=0) -> PnlModel:
    """Draw a random PNL model: A with i.i.d. standard-normal entries and
    one catalog distortion per channel with slope scale alpha ~ U[0.5, 2].
    """
    if M <= K:
        raise ValidationError(f"M={M} <= K={K}: null space of A^T is trivial")
    if K < 1:
        raise ValidationError("K must be >= 1")
    kinds = list(nonlinearity_kinds)
    if not kinds:
        raise ValidationError("nonlinearity_kinds must be nonempty")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, K))
    g = []
    for _ in range(M):
        kind = kinds[rng.integers(len(kinds))]
        alpha = rng.uniform(0.5, 2.0)
        gamma = 0.1 if kind == SCALED_TANH_LINEAR else 0.0
        g.append(Nonlinearity(kind, alpha=alpha, beta=1.0, gamma=gamma))
    return PnlModel(A=A, g=tuple(g))


def generate(model: PnlModel, latent: LatentSpec, N: int, seed=0) -> MixtureDataset:
    """Generate N samples x = g(A s) with latents drawn per the spec."""
    if latent.K != model.K:
        raise ValidationError(
            f"latent dimension {latent.K} != model K {model.K}"
        )
    if N < 1:
        raise ValidationError("N must be >= 1")
    rng = np.random.default_rng(seed)
    if latent.kind == INDEPENDENT_UNIFORM:
        S = rng.uniform(latent.lo, latent.hi, size=(latent.K, N))
    else:
        E = rng.exponential(1.0, size=(latent.K, N))
        S = E / E.sum(axis=0, keepdims=True)
    Z = model.A @ S
    X = np.empty_like(Z)
    for m, g_m in enumerate(model.g):
        X[m] = g_m(Z[m])
    return MixtureDataset(X=X, S=S, Z=Z, seed=seed)
