"""Command-line entry point: ``relu-nmd {synth,solve,bench,init-compare,nmf-compress}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .data import SyntheticSpec, generate_synthetic, load_csv, nmf_compression_error, save_csv
from .errors import ReluNMDError
from .initialization import STRATEGIES, InitConfig, initialize, random_scaled_init, tsvd_init, nuclear_norm_init
from .linalg import relative_error
from .solvers import SolverConfig, SparsityPattern

log = logging.getLogger("relu_nmd")

SOLVE_ALGORITHMS = ("naive", "a_naive", "a_nmd", "three_block", "tsvd")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _add_solver_flags(p):
    p.add_argument("--tol", type=_positive_float, default=1e-4, help="relative error target")
    p.add_argument("--max-iter", type=_nonneg_int, default=1000)
    p.add_argument("--time-limit", type=_positive_float, default=None, help="seconds")
    p.add_argument("--init", choices=STRATEGIES, default="nuclear_norm")
    p.add_argument("--seed", type=int, default=0, help="initialisation seed")
    p.add_argument("--restart-after", type=_positive_int, default=None,
                   help="a_nmd: restart from the last rank-r iterate after this many rejections in a row")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relu-nmd", description="ReLU nonlinear matrix decomposition")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic X = max(0, WH) to CSV")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="run one algorithm on one matrix")
    p.add_argument("--algo", choices=SOLVE_ALGORITHMS, required=True)
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--in", dest="input", required=True, help="data matrix CSV")
    p.add_argument("--out-dir", help="write theta.csv (and w.csv, h.csv) here")
    _add_solver_flags(p)

    p = sub.add_parser("bench", help="run an experiment described by a TOML file")
    p.add_argument("--config", required=True)
    p.add_argument("--outputs", help=f"output directory (overrides ${bench.OUTPUT_ENV} and the config)")
    p.add_argument("--threads", type=_positive_int)
    p.add_argument("--repeats", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--algorithms", help="comma separated list")
    p.add_argument("--rank", type=_positive_int)
    p.add_argument("--max-iter", type=_nonneg_int)
    p.add_argument("--time-limit", type=_positive_float)
    p.add_argument("--tol", type=_positive_float)
    p.add_argument("--clock", choices=("wall", "logical"))
    p.add_argument("--restart-after", type=_positive_int)

    p = sub.add_parser("init-compare", help="compare the three initialisations on synthetic data")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, required=True)
    p.add_argument("--seeds", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--out", help="also write the rows to this CSV file")

    p = sub.add_parser("nmf-compress", help="compress a nonnegative basis and report e_NMF")
    p.add_argument("--basis", required=True, help="basis U (d x k) CSV")
    p.add_argument("--data", required=True, help="data X (d x N) CSV")
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--algo", choices=SOLVE_ALGORITHMS, default="a_nmd")
    p.add_argument("--out-dir", help="write the compressed basis max(0, theta) here")
    _add_solver_flags(p)
    return parser


def _solve(algo, x, rank, args):
    config = SolverConfig(rank=rank, tol=args.tol, max_iter=args.max_iter, time_limit=args.time_limit,
                          restart_after=args.restart_after)
    pattern = SparsityPattern.from_data(x)
    if algo == "tsvd":
        return bench.run_solver("tsvd_baseline", x, None, config, pattern)
    theta0 = initialize(x, InitConfig(strategy=args.init, rank=rank, seed=args.seed), pattern)
    return bench.run_solver(algo, x, theta0, config, pattern)


def cmd_synth(args):
    x, _, _ = generate_synthetic(SyntheticSpec(args.m, args.n, args.r, args.seed))
    save_csv(x, args.out)
    print(f"wrote {args.m}x{args.n} matrix to {args.out} (zero fraction {np.mean(x == 0):.4f})")


def cmd_solve(args):
    x = load_csv(args.input)
    report = _solve(args.algo, x, args.rank, args)
    print(f"algorithm={report.algorithm} iterations={report.iterations} "
          f"elapsed_s={report.elapsed:.4f} rel_error={report.final_rel_error:.6e} "
          f"termination={report.termination}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_csv(report.theta, out / "theta.csv")
        if report.w is not None:
            save_csv(report.w, out / "w.csv")
            save_csv(report.h, out / "h.csv")


def cmd_bench(args):
    spec = bench.load_spec(args.config)
    overrides = {k: getattr(args, k) for k in ("threads", "repeats", "seed") if getattr(args, k) is not None}
    solver = {k: getattr(args, k) for k in ("max_iter", "time_limit", "tol", "clock", "rank", "restart_after")
              if getattr(args, k) is not None}
    if args.algorithms:
        overrides["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    if solver:
        overrides["solver"] = replace(spec.solver, **solver)
        if "rank" in solver:
            overrides["init"] = replace(spec.init, rank=solver["rank"])
    spec = replace(spec, **overrides)
    result = bench.run_experiment(spec, outputs=args.outputs or bench.output_dir(spec))
    out = args.outputs or bench.output_dir(spec)
    for row in result.summary:
        if row[1] == -1:
            print(f"{row[0]}: mean iterations {row[2]:.1f}, mean rel_error {row[4]:.3e}")
    if result.errors:
        print(f"{len(result.errors)} cell(s) failed; see {out}/errors.csv", file=sys.stderr)
    print(f"results in {out}")


def init_compare_rows(m, n, r, seeds, first_seed=0):
    """Mean/std relative error of each initialisation over ``seeds`` synthetic instances."""
    errors = {s: [] for s in STRATEGIES}
    for seed in range(first_seed, first_seed + seeds):
        x, _, _ = generate_synthetic(SyntheticSpec(m, n, r, seed))
        pattern = SparsityPattern.from_data(x)
        errors["random_scaled"].append(relative_error(x, random_scaled_init(x, r, seed)))
        errors["tsvd"].append(relative_error(x, tsvd_init(x, r)))
        theta = nuclear_norm_init(x, pattern, r, InitConfig(rank=r, seed=seed))
        errors["nuclear_norm"].append(relative_error(x, theta))
    return [(s, float(np.mean(v)), float(np.std(v)), len(v)) for s, v in errors.items()], errors


def cmd_init_compare(args):
    rows, _ = init_compare_rows(args.m, args.n, args.r, args.seeds, args.seed)
    header = ("strategy", "mean_rel_error", "std_rel_error", "seeds")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}", row[3]])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


def cmd_nmf_compress(args):
    u = load_csv(args.basis)
    x = load_csv(args.data)
    report = _solve(args.algo, u, args.rank, args)
    u_hat = np.maximum(report.theta, 0.0)
    e_ref, _ = nmf_compression_error(x, u)
    e_nmf, ok = nmf_compression_error(x, u_hat)
    print(f"algorithm={report.algorithm} rank={args.rank} iterations={report.iterations} "
          f"basis_rel_error={report.final_rel_error:.6e} e_nmf={e_nmf:.6e} "
          f"e_nmf_original_basis={e_ref:.6e} nnls_converged={ok}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_csv(u_hat, out / "basis_compressed.csv")


COMMANDS = {
    "synth": cmd_synth,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "init-compare": cmd_init_compare,
    "nmf-compress": cmd_nmf_compress,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ReluNMDError, OSError) as exc:
        print(f"relu-nmd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
