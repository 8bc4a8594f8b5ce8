"""Executable identifiability machinery.

Tools for checking when per-channel distortions are removable from a
mixture with a nontrivial left null space: the quadratic-row matrix built
from the mixing columns, Khatri-Rao products, brute-force Kruskal ranks,
the free-component counting condition, and closed-form sample-complexity
calculators for the shallow-network learner class.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_RANK_TOL = 1e-8
MAX_EXHAUSTIVE_COLS = 12


def khatri_rao(U, V) -> np.ndarray:
    """Column-wise Kronecker product: column j is kron(U[:, j], V[:, j])."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if U.shape[1] != V.shape[1]:
        raise ValidationError(
            f"column counts differ: {U.shape[1]} vs {V.shape[1]}"
        )
    a, m = U.shape
    b, _ = V.shape
    return (U[:, None, :] * V[None, :, :]).reshape(a * b, m)


def build_b_matrix(A, free_idx) -> np.ndarray:
    """Rows of squared and pairwise products of the free columns of A.

    With Kt = len(free_idx), returns a (Kt*(Kt+1)/2, M) matrix whose first
    Kt rows are the elementwise squares of the free columns (in index
    order) and whose remaining rows are the elementwise products a_i * a_j
    for i < j in lexicographic order.
    """
    A = np.asarray(A, dtype=float)
    free_idx = list(free_idx)
    if len(set(free_idx)) != len(free_idx):
        raise ValidationError("free_idx entries must be distinct")
    for k in free_idx:
        if not 0 <= k < A.shape[1]:
            raise ValidationError(f"free index {k} out of range")
    cols = [A[:, k] for k in free_idx]
    rows = [c * c for c in cols]
    rows += [cols[i] * cols[j]
             for i in range(len(cols)) for j in range(i + 1, len(cols))]
    return np.array(rows)


def numeric_rank(X, tol: float = DEFAULT_RANK_TOL) -> int:
    """Count of singular values above tol * sigma_max."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def kruskal_rank(X, tol: float = DEFAULT_RANK_TOL) -> int:
    """Largest tau such that every tau-column subset is independent.

    Exhaustive over subsets; refuses matrices with more than
    MAX_EXHAUSTIVE_COLS columns (use kruskal_rank_sampled there).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        raise ValidationError("empty matrix")
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    n = X.shape[1]
    if n > MAX_EXHAUSTIVE_COLS:
        raise ValidationError(
            f"{n} columns is too many for exhaustive Kruskal rank; "
            "use kruskal_rank_sampled for a randomized check"
        )
    bound = min(X.shape)
    for tau in range(1, bound + 1):
        for subset in itertools.combinations(range(n), tau):
            if numeric_rank(X[:, subset], tol) < tau:
                return tau - 1
    return bound


def kruskal_rank_sampled(X, tol: float = DEFAULT_RANK_TOL,
                         samples: int = 200, seed=0) -> int:
    """Randomized stand-in for kruskal_rank on wide matrices.

    Any dependent subset found certifies an upper bound; subsets that all
    pass only make the returned value a plausible estimate, so callers
    must treat it as non-exhaustive.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    rng = np.random.default_rng(seed)
    bound = min(X.shape)
    for tau in range(1, bound + 1):
        total = math.comb(n, tau)
        if total <= samples:
            subsets = itertools.combinations(range(n), tau)
        else:
            subsets = (tuple(rng.choice(n, size=tau, replace=False))
                       for _ in range(samples))
        for subset in subsets:
            if numeric_rank(X[:, list(subset)], tol) < tau:
                return tau - 1
    return bound


def check_condition(k_free: int, M: int) -> bool:
    """Free-component counting condition: Kt*(Kt+1)/2 >= M."""
    return k_free * (k_free + 1) // 2 >= M


@dataclass(frozen=True)
class IdentReport:
    """Rank diagnostics for a (mixing matrix, null basis) pair."""

    M: int
    K: int
    k_free: int
    B: np.ndarray
    krank_B: int
    krank_Qt: int
    rank_QtKRB: int
    sigma_min: float
    condition_ok: bool
    krank_exhaustive: bool

    def to_dict(self) -> dict:
        return {
            "M": self.M, "K": self.K, "k_free": self.k_free,
            "B": self.B.tolist(),
            "krank_B": self.krank_B, "krank_Qt": self.krank_Qt,
            "rank_QtKRB": self.rank_QtKRB, "sigma_min": self.sigma_min,
            "condition_ok": self.condition_ok,
            "krank_exhaustive": self.krank_exhaustive,
        }

    def summary(self) -> str:
        verdict = "satisfied" if self.condition_ok else "violated"
        return (f"M={self.M} K={self.K} free={self.k_free}: counting "
                f"condition {verdict}; rank(Qt (x) B)={self.rank_QtKRB} "
                f"(need {self.M}), sigma_min={self.sigma_min:.3e}, "
                f"krank(B)={self.krank_B}, krank(Qt)={self.krank_Qt}")


def verify_rank(A, Q, free_idx=None, tol: float = DEFAULT_RANK_TOL) -> IdentReport:
    """Full diagnostic: B matrix, Kruskal ranks, rank and smallest
    singular value of the Khatri-Rao system Qt (x) B."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    M, K = A.shape
    if Q.ndim != 2 or Q.shape[0] != M:
        raise ValidationError(f"Q must be {M} x D")
    gram_dev = np.abs(Q.T @ Q - np.eye(Q.shape[1])).max()
    if gram_dev > 1e-8:
        raise ValidationError(
            f"Q is not orthonormal (max |QtQ - I| = {gram_dev:.2e})"
        )
    if free_idx is None:
        free_idx = list(range(K))
    B = build_b_matrix(A, free_idx)
    k_free = len(list(free_idx))
    KR = khatri_rao(Q.T, B)
    s = np.linalg.svd(KR, compute_uv=False)
    exhaustive = M <= MAX_EXHAUSTIVE_COLS
    if exhaustive:
        krank_b = kruskal_rank(B, tol)
        krank_qt = kruskal_rank(Q.T, tol)
    else:
        krank_b = kruskal_rank_sampled(B, tol)
        krank_qt = kruskal_rank_sampled(Q.T, tol)
    return IdentReport(
        M=M, K=K, k_free=k_free, B=B,
        krank_B=krank_b, krank_Qt=krank_qt,
        rank_QtKRB=int(np.sum(s > tol * s[0])) if s[0] > 0 else 0,
        sigma_min=float(s[min(KR.shape) - 1]),
        condition_ok=check_condition(k_free, M),
        krank_exhaustive=exhaustive,
    )


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the sample-complexity calculators.

    nu: sup-norm gap between the learner class and the true inverse maps;
    c_d: bound on 4th derivatives of the composed channel maps;
    c_x: bound on |x_m| over the data; b_w: weight-norm bound; R: hidden
    width; N: sample count; M/D: observed and null dimensions; delta:
    failure probability.
    """

    nu: float
    c_d: float
    c_x: float
    b_w: float
    R: int
    N: int
    M: int
    D: int
    delta: float = 0.05

    def __post_init__(self):
        for name in ("nu", "c_d", "c_x", "b_w", "R", "N", "M", "D"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must be in (0, 1)")


def rademacher_bound(inputs: BoundInputs) -> float:
    """Capacity bound of the squared-projection loss class:
    2 * D * M * b_w^4 * c_x^2 * sqrt(R / N)."""
    return (2.0 * inputs.D * inputs.M * inputs.b_w ** 4 * inputs.c_x ** 2
            * math.sqrt(inputs.R / inputs.N))


def finite_sample_bound(inputs: BoundInputs, sigma_min: float) -> float:
    """Second-derivative energy bound, evaluated with unit absolute
    constants (the true constants are unknowable; only trends are
    meaningful). Decreases in N, increases in nu and R."""
    if sigma_min <= 0:
        raise ValidationError("sigma_min must be positive")
    s2 = sigma_min ** 2
    term1 = inputs.c_d * math.sqrt(inputs.M) * inputs.nu / s2
    term2 = (inputs.c_d * inputs.b_w ** 2 * inputs.c_x
             * math.sqrt(math.sqrt(inputs.R)
                         + math.sqrt(2.0 * math.log(4.0 / inputs.delta)))
             / (s2 * inputs.N ** 0.25))
    return term1 + term2
