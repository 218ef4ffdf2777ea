"""ReLU-NMD solvers on the latent model ``min ||Z - Theta||_F`` s.t. ``max(0, Z) = X``.

Four algorithms share one driver contract: each takes the data matrix, its
sparsity pattern, a starting point and a :class:`SolverConfig`, and returns a
:class:`SolveReport`.

* ``naive_nmd``: exact alternating minimisation (Z-update, then rank-r TSVD).
* ``a_naive_nmd``: the same with fixed Polyak momentum on Z.
* ``a_nmd``: Nesterov extrapolation of Z and Theta with an adaptive momentum
  parameter and rollback of rejected steps.
* ``three_block_nmd``: Theta = W H, with the TSVD replaced by two
  least-squares solves and fixed extrapolation.

Every solver reports a Theta of rank at most r. Where extrapolation makes the
internal Theta iterate a combination of several rank-r matrices, the reported
Theta (and the error trace / stopping test) use the last rank-r iterate.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError, RankDeficiencyWarning
from .linalg import as_matrix, relative_error, solve_ls_left, solve_ls_right, tsvd

TERMINATIONS = ("tolerance_met", "max_iter", "time_limit", "stalled")


@dataclass(frozen=True)
class SparsityPattern:
    """Partition of the entries of X into strictly positive and zero ones."""

    positive: np.ndarray  # boolean mask, True on I+

    @classmethod
    def from_data(cls, x) -> "SparsityPattern":
        x = as_matrix(x, "x")
        if (x < 0).any():
            raise ParameterError("data matrix must be nonnegative")
        mask = x > 0
        mask.setflags(write=False)
        return cls(mask)

    @property
    def zero(self) -> np.ndarray:
        return ~self.positive

    @property
    def shape(self) -> tuple[int, int]:
        return self.positive.shape

    @property
    def positives(self) -> frozenset:
        return frozenset(map(tuple, np.argwhere(self.positive).tolist()))

    @property
    def zeros(self) -> frozenset:
        return frozenset(map(tuple, np.argwhere(~self.positive).tolist()))


@dataclass(frozen=True)
class MomentumState:
    """Adaptive extrapolation parameter and its growth/shrink hyperparameters."""

    beta: float = 0.7
    beta_bar: float = 1.0
    beta_last_accepted: Optional[float] = None
    gamma_bar: float = 1.05
    gamma: float = 1.1
    eta: float = 2.5

    def __post_init__(self):
        if not 1 < self.gamma_bar < self.gamma < self.eta:
            raise ParameterError(
                "momentum hyperparameters must satisfy 1 < gamma_bar < gamma < eta, got "
                f"{self.gamma_bar}, {self.gamma}, {self.eta}"
            )
        if not 0 < self.beta <= self.beta_bar <= 1:
            raise ParameterError(
                f"need 0 < beta <= beta_bar <= 1, got beta={self.beta}, beta_bar={self.beta_bar}"
            )
        if self.beta_last_accepted is None:
            object.__setattr__(self, "beta_last_accepted", self.beta)


def momentum_update(state: MomentumState, error_decreased: bool) -> MomentumState:
    """Grow beta after a successful step, shrink it and tighten the cap after a failed one."""
    if error_decreased:
        return replace(
            state,
            beta=min(state.beta_bar, state.gamma * state.beta),
            beta_bar=min(1.0, state.gamma_bar * state.beta_bar),
            beta_last_accepted=state.beta,
        )
    return replace(state, beta=state.beta / state.eta, beta_bar=state.beta_last_accepted)


@dataclass(frozen=True)
class SolverConfig:
    rank: int
    tol: float = 1e-4
    max_iter: int = 1000
    time_limit: Optional[float] = None
    beta0: float = 0.7
    beta_fixed: float = 0.7
    alpha_polyak: float = 0.7
    max_consecutive_rejections: int = 50
    # A-NMD only: after this many rejections in a row, restart from the last
    # rank-r iterate (None keeps the plain rollback rule)
    restart_after: Optional[int] = None
    gamma_bar: float = 1.05
    gamma: float = 1.1
    eta: float = 2.5
    # "wall" measures seconds; "logical" counts iterations (reproducible traces)
    clock: str = "wall"

    def __post_init__(self):
        if isinstance(self.rank, bool) or not isinstance(self.rank, (int, np.integer)) or self.rank < 1:
            raise ParameterError(f"rank must be a positive integer, got {self.rank!r}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 0:
            raise ParameterError(f"max_iter must be nonnegative, got {self.max_iter}")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ParameterError(f"time_limit must be positive, got {self.time_limit}")
        for name in ("beta0", "beta_fixed", "alpha_polyak"):
            if not 0 <= getattr(self, name) < 1:
                raise ParameterError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if self.beta0 == 0:
            raise ParameterError("beta0 must be positive")
        if self.max_consecutive_rejections < 1:
            raise ParameterError("max_consecutive_rejections must be >= 1")
        if self.restart_after is not None and self.restart_after < 1:
            raise ParameterError("restart_after must be >= 1 or None")
        if self.clock not in ("wall", "logical"):
            raise ParameterError(f"clock must be 'wall' or 'logical', got {self.clock!r}")
        MomentumState(self.beta0, 1.0, None, self.gamma_bar, self.gamma, self.eta)


@dataclass
class SolveReport:
    algorithm: str
    theta: np.ndarray
    iterations: int
    elapsed: float
    termination: str
    error_trace: list = field(default_factory=list)  # (iteration, elapsed, rel_error)
    objective_trace: list = field(default_factory=list)
    rejection_log: list = field(default_factory=list)  # (iteration, beta_before, beta_after)
    restarts: list = field(default_factory=list)  # iterations at which A-NMD restarted
    w: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    @property
    def final_rel_error(self) -> float:
        return self.error_trace[-1][2]


def z_update(x, pattern: SparsityPattern, theta) -> np.ndarray:
    """Best Z for fixed Theta: X on I+, ``min(0, Theta)`` on I0."""
    x, theta = np.asarray(x, dtype=float), np.asarray(theta, dtype=float)
    if x.shape != theta.shape or pattern.shape != x.shape:
        raise ParameterError(f"shape mismatch: x {x.shape}, theta {theta.shape}, pattern {pattern.shape}")
    return np.where(pattern.positive, x, np.minimum(theta, 0.0))


def polyak_extrapolate(current, difference, alpha: float) -> np.ndarray:
    """``current + alpha * difference``; ``difference`` is the prior step ``Z^k - Z^(k-1)``."""
    current, difference = np.asarray(current, dtype=float), np.asarray(difference, dtype=float)
    if current.shape != difference.shape:
        raise ParameterError(f"shape mismatch: {current.shape} vs {difference.shape}")
    return current + alpha * difference


def nesterov_extrapolate(new, old, beta: float) -> np.ndarray:
    """``new + beta * (new - old)``."""
    new, old = np.asarray(new, dtype=float), np.asarray(old, dtype=float)
    if new.shape != old.shape:
        raise ParameterError(f"shape mismatch: {new.shape} vs {old.shape}")
    if beta < 0:
        raise ParameterError(f"beta must be nonnegative, got {beta}")
    return new + beta * (new - old)


class _Run:
    """Clock, error trace and stopping rule shared by the solvers."""

    def __init__(self, name: str, x: np.ndarray, config: SolverConfig):
        self.name = name
        self.x = x
        self.config = config
        self.trace: list = []
        self.objective: list = []
        self.termination = "max_iter"
        self._t0 = time.perf_counter()

    def elapsed(self, iteration: int) -> float:
        if self.config.clock == "logical":
            return float(iteration)
        return time.perf_counter() - self._t0

    def start(self, theta: np.ndarray) -> None:
        self.trace.append((0, 0.0, relative_error(self.x, theta)))

    def record(self, iteration: int, theta: np.ndarray) -> bool:
        """Log the error of ``theta``; True when the run should stop."""
        err = relative_error(self.x, theta)
        t = self.elapsed(iteration)
        self.trace.append((iteration, t, err))
        if err <= self.config.tol:
            self.termination = "tolerance_met"
            return True
        if self.config.time_limit is not None and t >= self.config.time_limit:
            self.termination = "time_limit"
            return True
        return False

    def report(self, theta, **kw) -> SolveReport:
        last = self.trace[-1]
        if last[2] <= self.config.tol:
            self.termination = "tolerance_met"  # e.g. max_iter=0 from an exact start
        return SolveReport(
            algorithm=self.name,
            theta=theta,
            iterations=last[0],
            elapsed=last[1],
            termination=self.termination,
            error_trace=self.trace,
            objective_trace=self.objective,
            **kw,
        )


def _prepare(x, pattern, theta0, config):
    x = as_matrix(x, "x")
    if pattern is None:
        pattern = SparsityPattern.from_data(x)
    elif pattern.shape != x.shape:
        raise ParameterError(f"pattern shape {pattern.shape} does not match x {x.shape}")
    if config.rank > min(x.shape):
        raise ParameterError(f"rank {config.rank} exceeds min dimension of x {x.shape}")
    theta0 = as_matrix(theta0, "theta0")
    if theta0.shape != x.shape:
        raise ParameterError(f"theta0 shape {theta0.shape} does not match x {x.shape}")
    return x, pattern, theta0


Callback = Optional[Callable[[dict], None]]


def naive_nmd(x, pattern, theta0, config: SolverConfig, *, callback: Callback = None) -> SolveReport:
    """Alternate the exact Z-update and the rank-r TSVD of Z."""
    x, pattern, theta = _prepare(x, pattern, theta0, config)
    run = _Run("naive", x, config)
    run.start(theta)
    for k in range(1, config.max_iter + 1):
        z = z_update(x, pattern, theta)
        theta = tsvd(z, config.rank).reconstruct()
        run.objective.append(float(np.linalg.norm(z - theta)))
        if callback:
            callback({"iteration": k, "z": z, "theta": theta})
        if run.record(k, theta):
            break
    return run.report(theta)


def a_naive_nmd(x, pattern, theta0, config: SolverConfig, *, callback: Callback = None) -> SolveReport:
    """Naive with Polyak momentum: ``Z <- Z + alpha (Z^k - Z^(k-1))`` before each TSVD."""
    x, pattern, theta = _prepare(x, pattern, theta0, config)
    run = _Run("a_naive", x, config)
    run.start(theta)
    z_curr = z_update(x, pattern, theta)
    z_prev = z_curr
    for k in range(1, config.max_iter + 1):
        z_hat = z_update(x, pattern, theta)
        z_new = polyak_extrapolate(z_hat, z_curr - z_prev, config.alpha_polyak)
        theta = tsvd(z_new, config.rank).reconstruct()
        z_prev, z_curr = z_curr, z_new
        run.objective.append(float(np.linalg.norm(z_new - theta)))
        if callback:
            callback({"iteration": k, "z": z_hat, "z_extrapolated": z_new, "theta": theta})
        if run.record(k, theta):
            break
    return run.report(theta)


def a_nmd(x, pattern, theta0, config: SolverConfig, *, callback: Callback = None) -> SolveReport:
    """Adaptive-momentum NMD.

    Each iteration extrapolates Z and Theta with the current beta and keeps
    the step only if ``||X - max(0, Theta)||_F`` strictly decreases;
    otherwise the iterates roll back and beta shrinks. After
    ``max_consecutive_rejections`` rejections in a row the run stops as
    ``stalled``.

    The extrapolated Theta can have rank up to 2r, and on data without an
    exact rank-r model its error may be out of reach for any later step. With
    ``config.restart_after`` set, that many rejections in a row reset Z and
    Theta to the last rank-r iterate (the accepted-error sequence then
    decreases strictly between restarts).
    """
    x, pattern, theta = _prepare(x, pattern, theta0, config)
    run = _Run("a_nmd", x, config)
    run.start(theta)
    state = MomentumState(config.beta0, 1.0, None, config.gamma_bar, config.gamma, config.eta)
    z = z_update(x, pattern, theta)
    certified = theta  # last rank-r TSVD output of an accepted step
    err = float(np.linalg.norm(x - np.maximum(theta, 0.0)))
    rejections_in_row = 0
    rejection_log = []
    restarts = []
    for k in range(1, config.max_iter + 1):
        z_hat = z_update(x, pattern, theta)
        z_new = nesterov_extrapolate(z_hat, z, state.beta)
        t = tsvd(z_new, config.rank).reconstruct()
        theta_new = nesterov_extrapolate(t, theta, state.beta)
        err_new = float(np.linalg.norm(x - np.maximum(theta_new, 0.0)))
        accepted = err_new < err
        beta_before = state.beta
        state = momentum_update(state, accepted)
        if accepted:
            z, theta, certified, err = z_new, theta_new, t, err_new
            rejections_in_row = 0
        else:
            rejection_log.append((k, beta_before, state.beta))
            rejections_in_row += 1
            if config.restart_after and rejections_in_row % config.restart_after == 0:
                theta = certified
                z = z_update(x, pattern, certified)
                err = float(np.linalg.norm(x - np.maximum(certified, 0.0)))
                restarts.append(k)
        run.objective.append(err)
        if callback:
            callback({
                "iteration": k, "z": z_hat, "z_extrapolated": z_new, "theta": theta,
                "certified": certified, "accepted": accepted, "state": state,
            })
        if run.record(k, certified):
            break
        if rejections_in_row >= config.max_consecutive_rejections:
            run.termination = "stalled"
            break
    return run.report(certified, rejection_log=rejection_log, restarts=restarts)


def three_block_nmd(x, pattern, w0, h0, config: SolverConfig, *, callback: Callback = None) -> SolveReport:
    """Three-block NMD: Z-update, then least squares for W and H, fixed extrapolation."""
    x = as_matrix(x, "x")
    w = as_matrix(w0, "w0")
    h = as_matrix(h0, "h0")
    m, n = x.shape
    r = config.rank
    if w.shape != (m, r) or h.shape != (r, n):
        raise ParameterError(f"expected w0 {(m, r)} and h0 {(r, n)}, got {w.shape} and {h.shape}")
    x, pattern, theta = _prepare(x, pattern, w @ h, config)
    run = _Run("three_block", x, config)
    run.start(theta)
    beta = config.beta_fixed
    z = z_update(x, pattern, theta)
    product = theta
    notes = []
    for k in range(1, config.max_iter + 1):
        z_hat = z_update(x, pattern, theta)
        z_new = nesterov_extrapolate(z_hat, z, beta)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RankDeficiencyWarning)
            w = solve_ls_left(z_new, h)
            h = solve_ls_right(z_new, w)
        notes.extend(f"iteration {k}: {c.message}" for c in caught)
        product = w @ h
        theta = nesterov_extrapolate(product, theta, beta)
        z = z_new
        run.objective.append(float(np.linalg.norm(z_new - product)))
        if callback:
            callback({"iteration": k, "z": z_hat, "z_extrapolated": z_new, "theta": theta,
                      "w": w, "h": h})
        if run.record(k, product):
            break
    return run.report(product, w=w, h=h, warnings=notes)


def tsvd_baseline(x, config: SolverConfig) -> SolveReport:
    """Rank-r TSVD of X itself, judged through the ReLU (no iterations)."""
    x = as_matrix(x, "x")
    theta = tsvd(x, config.rank).reconstruct()
    run = _Run("tsvd_baseline", x, config)
    run.start(theta)
    if run.trace[-1][2] <= config.tol:
        run.termination = "tolerance_met"
    return run.report(theta)


SOLVERS = {
    "naive": naive_nmd,
    "a_naive": a_naive_nmd,
    "a_nmd": a_nmd,
    "three_block": three_block_nmd,
}
