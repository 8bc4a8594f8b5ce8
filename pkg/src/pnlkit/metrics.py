"""Diagnostics for nonlinearity removal.

Two views of success: per channel, the composition of the learned map
with the true distortion should be affine; globally, the centered row
space of the learned features should match that of the true latents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nets import ChannelNet, forward_batch


@dataclass(frozen=True)
class AffineFitResult:
    slope: float
    intercept: float
    r2: float | None
    max_abs_residual: float
    grid: np.ndarray
    values: np.ndarray
    second_deriv: np.ndarray
    degenerate: bool

    @property
    def curvature(self) -> float:
        """Mean squared second difference, the grid counterpart of the
        second-derivative energy of the composition."""
        return float(np.mean(self.second_deriv ** 2))


def _apply_scalar_map(f, x):
    if isinstance(f, ChannelNet):
        return forward_batch(f, x)
    y = np.asarray([float(f(v)) for v in x], dtype=float)
    return y


def affine_fit(f_m, g_m, z_range, grid_size: int = 201) -> AffineFitResult:
    """Least-squares affine fit of h(z) = f_m(g_m(z)) on a uniform grid.

    f_m is a ChannelNet or any scalar callable; g_m any scalar callable
    (typically a catalog Nonlinearity). A constant h is reported as
    degenerate rather than producing NaN statistics.
    """
    lo, hi = float(z_range[0]), float(z_range[1])
    if not hi > lo:
        raise ValidationError("z_range must be nondegenerate")
    if grid_size < 3:
        raise ValidationError("grid_size must be >= 3")
    grid = np.linspace(lo, hi, grid_size)
    x = np.asarray(g_m(grid), dtype=float)
    h = _apply_scalar_map(f_m, x)
    dz = grid[1] - grid[0]
    second = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / dz ** 2
    design = np.column_stack([grid, np.ones_like(grid)])
    (slope, intercept), *_ = np.linalg.lstsq(design, h, rcond=None)
    resid = h - (slope * grid + intercept)
    ss_tot = float(np.sum((h - h.mean()) ** 2))
    scale = float(np.max(np.abs(h)))
    degenerate = ss_tot <= (1e-14 * max(scale, 1.0)) ** 2 * grid_size
    r2 = None if degenerate else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return AffineFitResult(
        slope=float(slope), intercept=float(intercept), r2=r2,
        max_abs_residual=float(np.max(np.abs(resid))),
        grid=grid, values=h, second_deriv=second, degenerate=degenerate,
    )


@dataclass(frozen=True)
class SubspaceDistanceResult:
    distance: float
    principal_angles: np.ndarray
    K_used: int


def subspace_distance(S_true, F_learned, K: int) -> SubspaceDistanceResult:
    """Distance between centered row spaces: the spectral norm of the
    difference of the rank-K orthogonal projectors, equal to the sine of
    the largest principal angle. Lies in [0, 1]; 0 means the learned
    features are an invertible affine row-mixing of the truth.
    """
    S_true = np.atleast_2d(np.asarray(S_true, dtype=float))
    F_learned = np.atleast_2d(np.asarray(F_learned, dtype=float))
    N = S_true.shape[1]
    if F_learned.shape[1] != N:
        raise ValidationError("sample counts differ")
    if K < 1 or K > min(S_true.shape[0], F_learned.shape[0]):
        raise ValidationError(f"K={K} exceeds available rows")
    if N < max(S_true.shape[0], F_learned.shape[0]):
        raise ValidationError("need at least as many samples as rows")

    def right_basis(mat, side):
        centered = mat - mat.mean(axis=1, keepdims=True)
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        if s[K - 1] <= 1e-12 * s[0]:
            raise ValidationError(
                f"{side} matrix has rank below K={K}"
            )
        return vt[:K].T

    V1 = right_basis(S_true, "S_true")
    V2 = right_basis(F_learned, "F_learned")
    cos = np.clip(np.linalg.svd(V1.T @ V2, compute_uv=False), 0.0, 1.0)
    angles = np.arccos(cos)
    # sin(theta_max) computed from the projector residual; this keeps full
    # precision for near-identical subspaces where 1 - cos^2 underflows.
    resid = V2 - V1 @ (V1.T @ V2)
    distance = float(np.linalg.svd(resid, compute_uv=False)[0])
    return SubspaceDistanceResult(
        distance=min(distance, 1.0),
        principal_angles=np.sort(angles),
        K_used=K,
    )
