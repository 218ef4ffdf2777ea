"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. Criterion 7 uses real
MNIST images when ``RELU_NMD_MNIST`` points at an IDX image file, otherwise a
seeded sparse surrogate with the same shape and 75% zeros.
"""

import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from relu_nmd.bench import run_solver
from relu_nmd.cli import init_compare_rows, main
from relu_nmd.data import (
    SyntheticSpec,
    generate_synthetic,
    load_idx,
    make_rng,
    nmf_compression_error,
    sparse_surrogate,
    subsample_rows,
)
from relu_nmd.initialization import InitConfig, initialize, nuclear_norm_init, tsvd_init
from relu_nmd.linalg import relative_error
from relu_nmd.solvers import SolverConfig, SparsityPattern

pytestmark = pytest.mark.acceptance
TESTS = Path(__file__).parent


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}", flush=True)
        assert ok, detail
    return emit


def prepared(m, n, r, seed, strategy="nuclear_norm"):
    x, _, _ = generate_synthetic(SyntheticSpec(m, n, r, seed))
    pattern = SparsityPattern.from_data(x)
    theta0 = initialize(x, InitConfig(strategy=strategy, rank=r, seed=seed), pattern)
    return x, pattern, theta0


def test_criterion_1_exact_recovery(verdict):
    algorithms = ("naive", "a_naive", "a_nmd", "three_block")
    hits = {(a, r): 0 for a in algorithms for r in (8, 16)}
    for r in (8, 16):
        config = SolverConfig(rank=r, tol=1e-4, max_iter=2000)
        for seed in range(10):
            x, pattern, theta0 = prepared(200, 200, r, seed)
            for a in algorithms:
                rep = run_solver(a, x, theta0, config, pattern)
                hits[(a, r)] += rep.final_rel_error <= 1e-4
    ok = all(v >= 9 for v in hits.values())
    detail = ", ".join(f"{a}@r={r}: {v}/10" for (a, r), v in hits.items())
    verdict(1, ok, f"seeds reaching 1e-4 within 2000 iterations (need >= 9): {detail}")


def test_criterion_2_identity_rank_3(verdict):
    results = {}
    for n in (16, 32, 64):
        x = np.eye(n)
        pattern = SparsityPattern.from_data(x)
        theta0 = nuclear_norm_init(x, pattern, 3, InitConfig(rank=3, seed=0))
        config = SolverConfig(rank=3, tol=1e-4, max_iter=1000)
        for a in ("a_nmd", "three_block"):
            rep = run_solver(a, x, theta0, config, pattern)
            results[(a, n)] = (rep.final_rel_error, rep.termination)
    ok = all(err <= 1e-4 for err, _ in results.values())
    detail = ", ".join(f"{a}@n={n}: {e:.3g} ({t})" for (a, n), (e, t) in results.items())
    verdict(2, ok, f"identity with r=3, final relative error (need <= 1e-4): {detail}")


def test_criterion_3_init_quality(verdict):
    rows8, errs8 = init_compare_rows(500, 500, 8, 10)
    rows16, _ = init_compare_rows(500, 500, 16, 10)
    m8 = {s: mean for s, mean, _, _ in rows8}
    m16 = {s: mean for s, mean, _, _ in rows16}
    wins = sum(a < b for a, b in zip(errs8["nuclear_norm"], errs8["tsvd"]))
    checks = [
        0.92 <= m8["random_scaled"] <= 0.98,
        0.37 <= m8["tsvd"] <= 0.43,
        0.33 <= m8["nuclear_norm"] <= 0.39,
        wins >= 8,
        0.33 <= m16["tsvd"] <= 0.39,
        0.29 <= m16["nuclear_norm"] <= 0.35,
    ]
    detail = (f"r=8 rand {m8['random_scaled']:.4f}, tsvd {m8['tsvd']:.4f}, nuclear {m8['nuclear_norm']:.4f}, "
              f"nuclear<tsvd on {wins}/10; r=16 tsvd {m16['tsvd']:.4f}, nuclear {m16['nuclear_norm']:.4f}")
    verdict(3, all(checks), detail)


def test_criterion_4_acceleration_ordering(verdict):
    iters = {a: [] for a in ("naive", "a_naive", "a_nmd")}
    config = SolverConfig(rank=32, tol=1e-4, max_iter=2000)
    for seed in range(5):
        x, pattern, theta0 = prepared(500, 500, 32, seed)
        for a in iters:
            iters[a].append(run_solver(a, x, theta0, config, pattern).iterations)
    mean = {a: float(np.mean(v)) for a, v in iters.items()}
    ok = mean["a_nmd"] < mean["a_naive"] < mean["naive"] and mean["naive"] / mean["a_nmd"] >= 2
    verdict(4, ok, f"mean iterations naive {mean['naive']:.1f}, a_naive {mean['a_naive']:.1f}, "
                   f"a_nmd {mean['a_nmd']:.1f}, naive/a_nmd {mean['naive'] / mean['a_nmd']:.2f}")


def test_criterion_5_three_block_iterations(verdict):
    config = SolverConfig(rank=32, tol=1e-4, max_iter=2000, beta_fixed=0.7)
    its = []
    for seed in range(5):
        x, pattern, theta0 = prepared(500, 500, 32, seed)
        rep = run_solver("three_block", x, theta0, config, pattern)
        its.append(rep.iterations if rep.termination == "tolerance_met" else float("inf"))
    mean = float(np.mean(its))
    verdict(5, 15 <= mean <= 40, f"mean 3B-NMD iterations {mean:.1f} (need 15..40), runs {its}")


def per_iteration_time(algorithm, x, pattern, theta0, r, iterations=12, repeats=3):
    config = SolverConfig(rank=r, tol=1e-300, max_iter=iterations, max_consecutive_rejections=10**6)
    samples = []
    for _ in range(repeats):
        trace = run_solver(algorithm, x, theta0, config, pattern).error_trace
        times = [t for _, t, _ in trace]
        samples.extend(np.diff(times[1:]))  # skip the first step (warm-up)
    return float(np.median(samples))


def test_criterion_6_per_iteration_cost(verdict):
    x, _, _ = generate_synthetic(SyntheticSpec(1000, 1000, 64, 0))
    pattern = SparsityPattern.from_data(x)
    ratios, times = {}, {}
    for r in (8, 16, 32, 64):
        theta0 = tsvd_init(x, r)
        t_a = per_iteration_time("a_nmd", x, pattern, theta0, r)
        t_b = per_iteration_time("three_block", x, pattern, theta0, r)
        times[r], ratios[r] = (t_a, t_b), t_a / t_b
    ok = times[64][1] < times[64][0] and ratios[64] > ratios[8]
    detail = ", ".join(f"r={r}: a_nmd {a * 1e3:.1f} ms, 3B {b * 1e3:.1f} ms, ratio {ratios[r]:.2f}"
                       for r, (a, b) in times.items())
    verdict(6, ok, detail)


def mnist_or_surrogate():
    path = os.environ.get("RELU_NMD_MNIST")
    if path:
        return subsample_rows(load_idx(path), 500, 0), "MNIST"
    return sparse_surrogate(500, 784, 32, 0.75, 0), "surrogate"


def test_criterion_7_beats_tsvd(verdict):
    x, source = mnist_or_surrogate()
    pattern = SparsityPattern.from_data(x)
    config = SolverConfig(rank=32, tol=1e-4, max_iter=100000, time_limit=20.0)
    theta0 = initialize(x, InitConfig(rank=32, seed=0), pattern)
    base = run_solver("tsvd_baseline", x, None, config, pattern).final_rel_error
    errs = {a: run_solver(a, x, theta0, config, pattern) for a in ("a_nmd", "three_block")}
    ok = all(rep.final_rel_error <= 0.9 * base for rep in errs.values())
    detail = f"{source}: tsvd {base:.4f}; " + ", ".join(
        f"{a} {rep.final_rel_error:.4f} ({rep.termination}, {rep.iterations} it)" for a, rep in errs.items())
    verdict(7, ok, detail + f"; bound {0.9 * base:.4f}")


PROPERTY_TESTS = [
    "tests/test_solvers.py::test_latent_constraint_and_rank_bound",
    "tests/test_solvers.py::test_naive_monotone_objective",
    "tests/test_solvers.py::test_a_nmd_accepted_errors_and_rollback",
    "tests/test_solvers.py::test_momentum_bounds_any_sequence",
    "tests/test_initialization.py::test_nuclear_norm_nonincreasing",
    "tests/test_initialization.py::test_projection_idempotent_and_nonexpansive",
    "tests/test_data.py::test_nnls_nonnegative_and_matches_oracle",
    "tests/test_linalg.py::test_eckart_young",
    "tests/test_linalg.py::test_ls_normal_equations_and_orthogonality",
]


def test_criterion_8_property_suites(verdict):
    root = TESTS.parent
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         "--hypothesis-seed=0", "--hypothesis-show-statistics", *PROPERTY_TESTS],
        cwd=root, capture_output=True, text=True,
    )
    passed = proc.stdout.count("passing examples")
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    # every hypothesis test reports its example counts; require >= 100 each
    counts = [int(line.split("-")[1].split("passing")[0])
              for line in proc.stdout.splitlines() if "passing examples" in line]
    ok = proc.returncode == 0 and len(counts) == len(PROPERTY_TESTS) and min(counts) >= 100
    verdict(8, ok, f"{len(PROPERTY_TESTS)} property tests, min examples {min(counts) if counts else 0}: {tail}")


def test_criterion_9_nmf_compression(verdict):
    g = make_rng(5)
    u = np.where(g.random((200, 50)) < 0.15, g.random((200, 50)), 0.0)
    x = u @ g.random((50, 300))
    pattern = SparsityPattern.from_data(u)
    config = SolverConfig(rank=20, tol=1e-4, max_iter=100000, time_limit=20.0)
    theta0 = initialize(u, InitConfig(rank=20, seed=0), pattern)
    rep = run_solver("a_nmd", u, theta0, config, pattern)
    e_anmd, ok1 = nmf_compression_error(x, np.maximum(rep.theta, 0))
    e_tsvd, ok2 = nmf_compression_error(x, np.maximum(tsvd_init(u, 20), 0))
    verdict(9, e_anmd <= e_tsvd,
            f"zero fraction {np.mean(u == 0):.3f}; e_NMF a_nmd {e_anmd:.3e} (basis error "
            f"{rep.final_rel_error:.2e}), TSVD {e_tsvd:.3e}; NNLS converged {ok1 and ok2}")


def test_criterion_10_bench_determinism(tmp_path, verdict):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        'algorithms = ["naive", "a_naive", "a_nmd", "three_block", "tsvd_baseline"]\n'
        "repeats = 3\nthreads = 3\n"
        '[data]\nkind = "synthetic"\nm = 120\nn = 100\nr = 6\n'
        '[solver]\nrank = 6\nmax_iter = 500\nclock = "logical"\n'
    )
    for name in ("a", "b"):
        assert main(["bench", "--config", str(cfg), "--outputs", str(tmp_path / name)]) == 0
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("summary.csv", "trace.csv"))
    verdict(10, same, "two bench runs produce byte-identical summary.csv and trace.csv")
