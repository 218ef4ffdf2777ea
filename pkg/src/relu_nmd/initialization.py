"""Starting points for the ReLU-NMD solvers.

Three strategies are available: a random rank-r matrix with optimal scaling,
the rank-r TSVD of X, and a few projected subgradient steps on the nuclear
norm over ``{Theta : Theta = X on I+, Theta <= 0 on I0}`` followed by a
rank-r truncation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import STREAM_INIT, standard_normal
from .errors import ParameterError
from .linalg import as_matrix, frobenius_inner, nuclear_norm, tsvd
from .solvers import SparsityPattern

STRATEGIES = ("random_scaled", "tsvd", "nuclear_norm")


@dataclass(frozen=True)
class InitConfig:
    strategy: str = "nuclear_norm"
    rank: int = 1
    seed: int = 0
    subgradient_iters: int = 3
    backtrack_shrink: float = 0.5
    backtrack_max: int = 20

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown init strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.rank < 1:
            raise ParameterError(f"rank must be >= 1, got {self.rank}")
        if self.subgradient_iters < 1:
            raise ParameterError("subgradient_iters must be >= 1")
        if not 0 < self.backtrack_shrink < 1:
            raise ParameterError("backtrack_shrink must lie in (0, 1)")
        if self.backtrack_max < 0:
            raise ParameterError("backtrack_max must be >= 0")


def optimal_scale(x, theta) -> float:
    """Minimiser over alpha of ``||X - alpha max(0, Theta)||_F``."""
    pos = np.maximum(as_matrix(theta, "theta"), 0.0)
    denom = float(np.einsum("ij,ij->", pos, pos))
    if denom == 0:
        raise ParameterError("max(0, theta) is identically zero; scale undefined")
    return frobenius_inner(x, pos) / denom


def random_scaled_init(x, r: int, seed: int) -> np.ndarray:
    """Random rank-r ``W @ H`` (standard normal factors) times its optimal scale."""
    x = as_matrix(x, "x")
    m, n = x.shape
    if not 1 <= r <= min(m, n):
        raise ParameterError(f"rank {r} outside [1, {min(m, n)}]")
    g = standard_normal(seed, m * r + r * n, STREAM_INIT)
    theta = g[: m * r].reshape(m, r) @ g[m * r:].reshape(r, n)
    try:
        alpha = optimal_scale(x, theta)
    except ParameterError:
        alpha = 1.0
    return alpha * theta


def tsvd_init(x, r: int) -> np.ndarray:
    return tsvd(as_matrix(x, "x"), r).reconstruct()


def project_feasible(theta, x, pattern: SparsityPattern) -> np.ndarray:
    """Euclidean projection onto ``{X on I+, <= 0 on I0}``."""
    theta = as_matrix(theta, "theta")
    if theta.shape != pattern.shape:
        raise ParameterError(f"shape mismatch: theta {theta.shape}, pattern {pattern.shape}")
    return np.where(pattern.positive, x, np.minimum(theta, 0.0))


def _svd(a):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, vt


def nuclear_norm_init(
    x,
    pattern: Optional[SparsityPattern],
    r: int,
    config: Optional[InitConfig] = None,
    *,
    iters: Optional[int] = None,
    history: Optional[list] = None,
) -> np.ndarray:
    """Projected subgradient steps on the nuclear norm, then rank-r truncation.

    Starts from the random scaled matrix. Each step moves along the
    subgradient ``U V^T`` of the current iterate (numerical rank, no
    orthogonal term), starting from the step ``||Theta||_F / ||U V^T||_F``
    and halving until the projected candidate has a smaller nuclear norm than
    the current feasible point (for the random start: its projection). If
    ``backtrack_max`` halvings do not produce a decrease, the step is zero and
    the iterate is just projected.

    ``iters`` overrides ``config.subgradient_iters`` (0 is allowed here).
    ``history``, when given, receives the nuclear norm of each feasible iterate.
    """
    x = as_matrix(x, "x")
    if pattern is None:
        pattern = SparsityPattern.from_data(x)
    config = config or InitConfig(rank=r)
    steps = config.subgradient_iters if iters is None else iters

    theta = random_scaled_init(x, r, config.seed)
    u, s, vt = _svd(theta)
    # the zero step: reference point for the first backtracking test
    nuc = nuclear_norm(project_feasible(theta, x, pattern))
    if history is not None:
        history.append(nuc)
    for _ in range(steps):
        if s[0] == 0:
            break
        keep = s > 1e-10 * s[0]
        y = u[:, keep] @ vt[keep]
        step = np.linalg.norm(theta) / np.linalg.norm(y)
        for _ in range(config.backtrack_max + 1):
            cand = project_feasible(theta - step * y, x, pattern)
            cu, cs, cvt = _svd(cand)
            if cs.sum() < nuc:
                break
            step *= config.backtrack_shrink
        else:
            cand = project_feasible(theta, x, pattern)
            cu, cs, cvt = _svd(cand)
        theta, u, s, vt, nuc = cand, cu, cs, cvt, float(cs.sum())
        if history is not None:
            history.append(nuc)
    k = min(r, s.shape[0])
    return (u[:, :k] * s[:k]) @ vt[:k]


def factors_from_theta(theta, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Balanced split for the three-block solver: ``W = U_r``, ``H = S_r V_r^T``."""
    res = tsvd(as_matrix(theta, "theta"), r)
    return res.u, res.singular_values[:, None] * res.v.T


def initialize(x, config: InitConfig, pattern: Optional[SparsityPattern] = None) -> np.ndarray:
    """Dispatch on ``config.strategy``; returns a starting Theta of rank <= r."""
    if config.strategy == "random_scaled":
        return random_scaled_init(x, config.rank, config.seed)
    if config.strategy == "tsvd":
        return tsvd_init(x, config.rank)
    return nuclear_norm_init(x, pattern, config.rank, config)
