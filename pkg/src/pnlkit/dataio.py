"""Columnar dataset files and their JSON sidecar metadata.

Data file: CSV with header ``x1..xM[,s1..sK,z1..zM]``, one sample per
line, 17 significant digits (lossless float64 round trip). Sidecar:
JSON with M, K, N, seed, the distortion catalog entries, and A row-major.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import LatentSpec, MixtureDataset, Nonlinearity, PnlModel

_FMT = "%.17g"


def save_dataset(path, dataset: MixtureDataset, include_latents: bool = True):
    """Write the dataset as CSV; latent and pre-distortion blocks are
    included when present unless suppressed."""
    M, K = dataset.M, 0
    cols = [f"x{m + 1}" for m in range(M)]
    blocks = [dataset.X]
    if include_latents and dataset.S is not None and dataset.Z is not None:
        K = dataset.S.shape[0]
        cols += [f"s{k + 1}" for k in range(K)]
        cols += [f"z{m + 1}" for m in range(M)]
        blocks += [dataset.S, dataset.Z]
    table = np.vstack(blocks).T
    np.savetxt(path, table, fmt=_FMT, delimiter=",",
               header=",".join(cols), comments="")


def load_dataset(path) -> MixtureDataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2).T
    if len(header) != table.shape[0]:
        raise ValidationError(f"{path}: header/column count mismatch")
    M = sum(1 for c in header if c.startswith("x"))
    K = sum(1 for c in header if c.startswith("s"))
    if M == 0:
        raise ValidationError(f"{path}: no x columns found")
    X = table[:M]
    S = table[M:M + K] if K else None
    Z = table[M + K:M + K + M] if len(header) == 2 * M + K else None
    return MixtureDataset(X=X, S=S, Z=Z)


def save_meta(path, model: PnlModel, N: int, seed,
              latent: LatentSpec | None = None):
    meta = {
        "M": model.M,
        "K": model.K,
        "N": int(N),
        "seed": seed,
        "nonlinearities": [
            {"kind": g.kind, "alpha": g.alpha, "beta": g.beta, "gamma": g.gamma}
            for g in model.g
        ],
        "A": model.A.tolist(),
    }
    if latent is not None:
        meta["latent"] = {"kind": latent.kind, "K": latent.K,
                          "lo": latent.lo, "hi": latent.hi}
    Path(path).write_text(json.dumps(meta, indent=2) + "\n")


def load_meta(path) -> dict:
    """Load sidecar metadata; returns a dict with a reconstructed
    ``model`` (PnlModel) and optional ``latent`` (LatentSpec)."""
    try:
        meta = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    for key in ("M", "K", "N", "nonlinearities", "A"):
        if key not in meta:
            raise ValidationError(f"{path}: missing key {key!r}")
    g = tuple(Nonlinearity(**entry) for entry in meta["nonlinearities"])
    A = np.asarray(meta["A"], dtype=float)
    if A.shape != (meta["M"], meta["K"]):
        raise ValidationError(f"{path}: A shape {A.shape} disagrees with M, K")
    meta["model"] = PnlModel(A=A, g=g)
    if "latent" in meta:
        meta["latent_spec"] = LatentSpec(
            kind=meta["latent"]["kind"], K=meta["latent"]["K"],
            lo=meta["latent"].get("lo", -1.0), hi=meta["latent"].get("hi", 1.0))
    return meta
