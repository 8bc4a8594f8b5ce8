"""Command-line entry points.

Subcommands: generate, train, evaluate, check, run, sweep. Exit codes:
0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import load_dataset, load_meta, save_dataset, save_meta
from .errors import NumericFailure, ValidationError
from .experiments import (AFFINE_GRID_SIZE, load_config, run_scenario,
                          run_sweep, save_config, true_null_basis)
from .identifiability import verify_rank
from .metrics import affine_fit, subspace_distance
from .model import (INDEPENDENT_UNIFORM, NONLINEARITY_KINDS, SIMPLEX,
                    LatentSpec, generate, sample_model)
from .nets import load_net, save_net
from .trainer import TrainConfig, apply_channels, train


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnlkit",
        description="Identify and remove per-channel nonlinear distortions "
                    "in post-nonlinear mixture data.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=0,
                        help="cap BLAS threads (0 = library default)")
    common.add_argument("--out", default="out")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common],
                       help="sample a model and write a synthetic dataset")
    p.add_argument("--M", type=_positive_int, default=5)
    p.add_argument("--K", type=_positive_int, default=3)
    p.add_argument("--N", type=_positive_int, default=10000)
    p.add_argument("--latent", choices=["independent", "simplex"],
                   default="independent")
    p.add_argument("--kinds", default=",".join(NONLINEARITY_KINDS),
                   help="comma-separated distortion kinds to draw from")
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)

    p = sub.add_parser("train", parents=[common],
                       help="run the alternating trainer on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--D", type=_positive_int, required=True)
    p.add_argument("--R", type=_positive_int, default=256)
    p.add_argument("--depth", type=_positive_int, default=1)
    p.add_argument("--activation", choices=["relu", "tanh"], default="relu")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--batch", type=_positive_int, default=256)
    p.add_argument("--outer", type=_positive_int, default=50)
    p.add_argument("--inner", type=int, default=1)
    p.add_argument("--bias", choices=["on", "off"], default="on")

    p = sub.add_parser("evaluate", parents=[common],
                       help="affine-fit and subspace diagnostics for a "
                            "trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--K", type=_positive_int, required=True)

    p = sub.add_parser("check", parents=[common],
                       help="identifiability report for a stored model")
    p.add_argument("--meta", required=True)
    p.add_argument("--Q", default=None,
                   help="text matrix file; defaults to the exact null "
                        "basis of the stored mixing matrix")
    p.add_argument("--free-idx", default=None,
                   help="comma-separated free column indices")
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("run", parents=[common],
                       help="run a scenario from a JSON config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("sweep", parents=[common],
                       help="grid of runs over hidden width and sample count")
    p.add_argument("--config", required=True)
    p.add_argument("--R", required=True, help="comma-separated widths")
    p.add_argument("--N", required=True, help="comma-separated sample counts")
    p.add_argument("--trials", type=_positive_int, default=5)
    return parser


def _cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    model = sample_model(args.M, args.K, kinds, seed=args.seed)
    kind = INDEPENDENT_UNIFORM if args.latent == "independent" else SIMPLEX
    latent = LatentSpec(kind, args.K, args.lo, args.hi)
    dataset = generate(model, latent, args.N, seed=args.seed)
    save_dataset(out / "data.csv", dataset)
    save_meta(out / "meta.json", model, args.N, args.seed, latent)
    print(f"wrote {out / 'data.csv'} ({args.M}x{args.N}) and meta.json")
    return 0


def _cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.data)
    load_meta(args.meta)  # validates the pair of files belongs together
    cfg = TrainConfig(D=args.D, R=args.R, depth=args.depth,
                      activation=args.activation, lam=args.lam, lr=args.lr,
                      batch_size=args.batch, outer_iters=args.outer,
                      inner_epochs_per_outer=args.inner, seed=args.seed,
                      bias_mode=args.bias)
    result = train(dataset, cfg)
    nets_dir = out / "nets"
    nets_dir.mkdir(exist_ok=True)
    for m in range(dataset.M):
        save_net(nets_dir / f"f{m + 1}.json", result.f[m])
        save_net(nets_dir / f"r{m + 1}.json", result.r[m])
    np.savetxt(out / "Q.txt", result.basis.Q, fmt="%.17g")
    with open(out / "trace.csv", "w") as fh:
        fh.write("iter,L1,L2,L,orth_dev,minQ,seconds\n")
        for row in result.trace.rows():
            fh.write("%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n" % row)
    print(f"final L1={result.trace.L1[-1]:.3e} "
          f"L2={result.trace.L2[-1]:.3e} after {len(result.trace)} outer "
          f"iterations; artifacts in {out}")
    return 0


def _cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.data)
    meta = load_meta(args.meta)
    model = meta["model"]
    ckpt = Path(args.checkpoint)
    nets_dir = ckpt / "nets" if (ckpt / "nets").is_dir() else ckpt
    f_nets = [load_net(nets_dir / f"f{m + 1}.json") for m in range(model.M)]

    if dataset.Z is not None:
        ranges = [(float(dataset.Z[m].min()), float(dataset.Z[m].max()))
                  for m in range(model.M)]
    else:
        ranges = [(model.g[m].inverse(float(dataset.X[m].min())),
                   model.g[m].inverse(float(dataset.X[m].max())))
                  for m in range(model.M)]
    with open(out / "affine.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "c", "d", "r2", "max_resid"])
        fits = []
        for m in range(model.M):
            fit = affine_fit(f_nets[m], model.g[m], ranges[m],
                             AFFINE_GRID_SIZE)
            fits.append(fit)
            r2 = "degenerate" if fit.degenerate else "%.17g" % fit.r2
            writer.writerow([m + 1, "%.17g" % fit.slope,
                             "%.17g" % fit.intercept, r2,
                             "%.17g" % fit.max_abs_residual])

    lo = min(r[0] for r in ranges)
    hi = max(r[1] for r in ranges)
    grid = np.linspace(lo, hi, AFFINE_GRID_SIZE)
    cols = [grid] + [np.asarray([float(f_nets[m](model.g[m](z)))
                                 for z in grid])
                     for m in range(model.M)]
    np.savetxt(out / "composition_grid.csv", np.column_stack(cols),
               fmt="%.17g", delimiter=",",
               header=",".join(["z"] + [f"h_{m + 1}"
                                        for m in range(model.M)]),
               comments="")

    if dataset.S is None:
        raise ValidationError(
            "subspace evaluation needs ground-truth latents (s columns)")
    F = apply_channels(f_nets, dataset.X)
    sub = subspace_distance(dataset.S, F, args.K)
    (out / "subspace.txt").write_text(
        f"distance {sub.distance:.17g}\nangles "
        + " ".join("%.17g" % a for a in sub.principal_angles) + "\n")
    print(f"subspace distance {sub.distance:.4f}; min r2 "
          f"{min((f.r2 for f in fits if f.r2 is not None), default=None)}")
    return 0


def _cmd_check(args) -> int:
    meta = load_meta(args.meta)
    model = meta["model"]
    if args.Q is not None:
        Q = np.loadtxt(args.Q, ndmin=2)
    else:
        Q = true_null_basis(model.A)
    if args.free_idx is not None:
        free_idx = [int(i) for i in args.free_idx.split(",")]
    elif "latent_spec" in meta:
        free_idx = list(range(meta["latent_spec"].free_count))
    else:
        free_idx = list(range(model.K))
    report = verify_rank(model.A, Q, free_idx, tol=args.tol)
    print(json.dumps(report.to_dict(), indent=2))
    print(report.summary())
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out != "out":
        cfg = replace(cfg, out=args.out)
    summary = run_scenario(cfg)
    print(f"scenario {cfg.scenario}: mean subspace distance "
          f"{summary['mean_subspace_distance']:.4f}, min r2 "
          f"{summary['min_r2']}; outputs in {cfg.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.json", cfg)
    R_list = [int(r) for r in args.R.split(",")]
    N_list = [int(n) for n in args.N.split(",")]
    sweep = run_sweep(R_list, N_list, args.trials, cfg,
                      out_path=out / "sweep.csv")
    for N, R, mean, std, _ in sweep.rows():
        print(f"N={N} R={R}: {mean:.4f} +/- {std:.4f}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "check": _cmd_check,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 0) > 0:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(limits=args.threads)
        except ImportError:
            print("threadpoolctl not installed; --threads ignored",
                  file=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
