"""Experiment runner: (algorithm, seed) cells, summary/trace/error CSV files.

An experiment is described by a TOML file::

    algorithms = ["naive", "a_nmd"]
    repeats = 5
    seed = 0
    outputs = "results"
    threads = 1

    [data]
    kind = "synthetic"      # or "idx" / "csv"
    m = 200
    n = 200
    r = 16

    [init]
    strategy = "nuclear_norm"

    [solver]
    rank = 16
    tol = 1e-4
    max_iter = 2000

Run ``k`` (``k = 0 .. repeats-1``) uses seed ``seed + k`` both for the data
(synthetic matrix or image subsample) and for the initialisation.
"""

from __future__ import annotations

import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import SyntheticSpec, generate_synthetic, load_csv, load_idx, sparse_surrogate, subsample_rows
from .errors import ParameterError, ReluNMDError
from .initialization import InitConfig, factors_from_theta, initialize
from .solvers import SOLVERS, SolverConfig, SparsityPattern, tsvd_baseline

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ALGORITHMS = ("naive", "a_naive", "a_nmd", "three_block", "tsvd_baseline")
SUMMARY_COLUMNS = ("algorithm", "seed", "iterations", "elapsed_s", "final_rel_error", "termination")
TRACE_COLUMNS = ("algorithm", "seed", "iteration", "elapsed", "rel_error", "err_t")
ERROR_COLUMNS = ("algorithm", "seed", "error_type", "message")
OUTPUT_ENV = "RELU_NMD_OUTPUT_DIR"


@dataclass(frozen=True)
class DataSpec:
    kind: str = "synthetic"
    m: int = 100
    n: int = 100
    r: int = 5
    path: Optional[str] = None
    labels: Optional[str] = None
    rows: Optional[int] = None
    zero_fraction: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "surrogate", "idx", "csv"):
            raise ParameterError(f"unknown data kind {self.kind!r}")
        if self.kind in ("idx", "csv") and not self.path:
            raise ParameterError(f"data kind {self.kind!r} needs a path")

    def load(self, seed: int) -> np.ndarray:
        if self.kind == "synthetic":
            return generate_synthetic(SyntheticSpec(self.m, self.n, self.r, seed))[0]
        if self.kind == "surrogate":
            return sparse_surrogate(self.m, self.n, self.r, self.zero_fraction or 0.75, seed)
        if self.kind == "csv":
            return load_csv(self.path)
        dataset = load_idx(self.path, self.labels)
        if self.rows is None:
            return dataset.matrix
        return subsample_rows(dataset, self.rows, seed)


@dataclass(frozen=True)
class ExperimentSpec:
    data: DataSpec
    algorithms: tuple
    init: InitConfig
    solver: SolverConfig
    repeats: int = 1
    seed: int = 0
    outputs: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ParameterError("repeats must be >= 1")
        if not self.algorithms:
            raise ParameterError("at least one algorithm is required")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ParameterError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")
        if self.init.rank != self.solver.rank:
            raise ParameterError(f"init rank {self.init.rank} != solver rank {self.solver.rank}")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + k for k in range(self.repeats)]


def _pick(cls, table: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ParameterError(f"unknown keys in [{where}]: {sorted(unknown)}")
    return dict(table)


def spec_from_dict(raw: dict) -> ExperimentSpec:
    raw = dict(raw)
    top = {"data", "init", "solver", "algorithms", "repeats", "seed", "outputs", "threads"}
    unknown = set(raw) - top
    if unknown:
        raise ParameterError(f"unknown top-level keys: {sorted(unknown)}")
    solver = _pick(SolverConfig, raw.get("solver", {}), "solver")
    if "rank" not in solver:
        raise ParameterError("[solver] rank is required")
    init = _pick(InitConfig, raw.get("init", {}), "init")
    init.setdefault("rank", solver["rank"])
    init.pop("seed", None)  # per-run seeds come from the seed protocol
    return ExperimentSpec(
        data=DataSpec(**_pick(DataSpec, raw.get("data", {}), "data")),
        algorithms=tuple(raw.get("algorithms", ())),
        init=InitConfig(**init),
        solver=SolverConfig(**solver),
        repeats=int(raw.get("repeats", 1)),
        seed=int(raw.get("seed", 0)),
        outputs=str(raw.get("outputs", "results")),
        threads=int(raw.get("threads", 1)),
    )


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(f"{path}: {exc}") from None
    except TypeError as exc:
        raise ParameterError(f"{path}: {exc}") from None
    try:
        return spec_from_dict(raw)
    except TypeError as exc:
        raise ParameterError(f"{path}: {exc}") from None


@dataclass
class TraceRow:
    algorithm: str
    seed: int
    iteration: int
    elapsed: float
    rel_error: float
    err_t: float = float("nan")


def compute_err_traces(traces):
    """Subtract the smallest relative error of the whole set from every row."""
    traces = list(traces)
    if not traces:
        raise ParameterError("no trace rows")
    e_min = min(row.rel_error for row in traces)
    return [TraceRow(t.algorithm, t.seed, t.iteration, t.elapsed, t.rel_error, t.rel_error - e_min)
            for t in traces]


@dataclass
class CellResult:
    algorithm: str
    seed: int
    report: object = None
    error: Optional[BaseException] = None


@dataclass
class ExperimentResult:
    summary: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def run_solver(algorithm: str, x: np.ndarray, theta0: np.ndarray, config: SolverConfig,
               pattern: Optional[SparsityPattern] = None):
    """Run one named algorithm from a starting Theta."""
    if algorithm == "tsvd_baseline":
        return tsvd_baseline(x, config)
    if algorithm == "three_block":
        w0, h0 = factors_from_theta(theta0, config.rank)
        return SOLVERS[algorithm](x, pattern, w0, h0, config)
    if algorithm not in SOLVERS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    return SOLVERS[algorithm](x, pattern, theta0, config)


def _prepare(spec: ExperimentSpec, seed: int):
    x = spec.data.load(seed)
    pattern = SparsityPattern.from_data(x)
    needs_init = any(a != "tsvd_baseline" for a in spec.algorithms)
    theta0 = None
    if needs_init:
        init = InitConfig(**{**spec.init.__dict__, "seed": seed})
        theta0 = initialize(x, init, pattern)
    return x, pattern, theta0


def run_experiment(spec: ExperimentSpec, write: bool = True,
                   outputs: Optional[str] = None) -> ExperimentResult:
    """Run every (algorithm, seed) cell and write ``summary.csv``, ``trace.csv``, ``errors.csv``.

    Cells run on ``spec.threads`` worker threads; rows are sorted by
    (algorithm order, seed) before writing, so the files do not depend on
    the schedule. A failing cell is logged to ``errors.csv`` and skipped.
    """
    cells: list[CellResult] = []
    prepared = {}
    prep_errors = {}

    def prepare(seed):
        try:
            prepared[seed] = _prepare(spec, seed)
        except (ReluNMDError, OSError, ValueError) as exc:
            prep_errors[seed] = exc

    def run(algorithm, seed):
        cell = CellResult(algorithm, seed)
        if seed in prep_errors:
            cell.error = prep_errors[seed]
            return cell
        x, pattern, theta0 = prepared[seed]
        try:
            cell.report = run_solver(algorithm, x, theta0, spec.solver, pattern)
        except (ReluNMDError, ValueError, np.linalg.LinAlgError) as exc:
            cell.error = exc
        return cell

    with ThreadPoolExecutor(max_workers=spec.threads) as pool:
        list(pool.map(prepare, spec.seeds))
        jobs = [(a, s) for a in spec.algorithms for s in spec.seeds]
        cells = list(pool.map(lambda job: run(*job), jobs))

    order = {a: i for i, a in enumerate(spec.algorithms)}
    cells.sort(key=lambda c: (order[c.algorithm], c.seed))
    result = ExperimentResult()
    traces_by_seed: dict = {}
    for cell in cells:
        if cell.error is not None:
            result.errors.append((cell.algorithm, cell.seed, type(cell.error).__name__, str(cell.error)))
            continue
        rep = cell.report
        result.summary.append((cell.algorithm, cell.seed, rep.iterations, rep.elapsed,
                               rep.final_rel_error, rep.termination))
        traces_by_seed.setdefault(cell.seed, []).extend(
            TraceRow(cell.algorithm, cell.seed, it, t, e) for it, t, e in rep.error_trace
        )
    for algorithm in spec.algorithms:
        rows = [r for r in result.summary if r[0] == algorithm and r[1] >= 0]
        if rows:
            result.summary.append((
                algorithm, -1,
                float(np.mean([r[2] for r in rows])),
                float(np.mean([r[3] for r in rows])),
                float(np.mean([r[4] for r in rows])),
                "mean",
            ))
    # err(t) compares algorithms on the same data matrix, i.e. within one seed
    for seed in sorted(traces_by_seed):
        result.traces.extend(compute_err_traces(traces_by_seed[seed]))
    result.traces.sort(key=lambda t: (order[t.algorithm], t.seed, t.iteration))
    if write:
        write_results(result, outputs or output_dir(spec))
    return result


def output_dir(spec: ExperimentSpec) -> str:
    return os.environ.get(OUTPUT_ENV) or spec.outputs


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_results(result: ExperimentResult, outputs) -> Path:
    out = Path(outputs)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, result.summary)
    _write_csv(out / "trace.csv", TRACE_COLUMNS,
               [(t.algorithm, t.seed, t.iteration, t.elapsed, t.rel_error, t.err_t) for t in result.traces])
    _write_csv(out / "errors.csv", ERROR_COLUMNS, result.errors)
    return out
