"""Dense matrix kernels: truncated SVD, matrix least squares, ReLU and norms.

Matrices are plain 2-D ``float64`` numpy arrays. Public functions validate
their inputs (finite, two-dimensional) and never modify them in place.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import ConvergenceError, ParameterError, RankDeficiencyWarning

#: matrices whose smaller dimension is at most this use the Jacobi path
JACOBI_MAX_DIM = 64


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise ParameterError."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be two-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ParameterError(f"{name} has a zero dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class TsvdResult:
    """Rank-r factors ``a ~ u @ diag(singular_values) @ v.T``."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


@lru_cache(maxsize=None)
def _round_robin(k: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Tournament schedule: every column pair meets once, pairs disjoint per round."""
    players = list(range(k + (k % 2)))
    bye = k if k % 2 else None
    n = len(players)
    rounds = []
    for _ in range(n - 1):
        ps, qs = [], []
        for i in range(n // 2):
            p, q = players[i], players[n - 1 - i]
            if bye in (p, q):
                continue
            ps.append(min(p, q))
            qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _orthonormal_completion(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` not in ``keep`` by an orthonormal complement."""
    m, k = u.shape
    good = u[:, keep]
    q, _ = np.linalg.qr(np.hstack([good, np.eye(m)]), mode="complete")
    out = u.copy()
    out[:, ~keep] = q[:, good.shape[1]:good.shape[1] + int((~keep).sum())]
    return out


def _jacobi_columns(g: np.ndarray, tol: float, max_sweeps: int):
    """Rotate the columns of the square ``g`` (in place) until pairwise orthogonal.

    Returns ``(v, converged)`` with ``v`` the accumulated rotation.
    """
    k = g.shape[1]
    v = np.eye(k)
    if k == 1:
        return v, True
    rounds = _round_robin(k)
    # columns below this squared norm are numerically zero and never rotated
    negligible = (np.finfo(float).eps * np.linalg.norm(g)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p, r in rounds:
            gp, gq = g[:, p], g[:, r]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            active = (np.abs(gamma) > tol * np.sqrt(alpha) * np.sqrt(beta)) & (
                np.minimum(alpha, beta) > negligible)
            if not active.any():
                continue
            rotated = True
            safe = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * safe)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            g[:, p], g[:, r] = c * gp - s * gq, s * gp + c * gq
            vp, vq = v[:, p], v[:, r]
            v[:, p], v[:, r] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            return v, True
    return v, False


def jacobi_svd(a, tol: float = 1e-14, max_sweeps: int = 60):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    The input is first reduced by a column-pivoted QR, ``a P = Q R``, and the
    rotations orthogonalise the columns of the ``k x k`` matrix ``R^T``
    (``k = min(m, n)``); the pivoting makes the sweeps converge faster. All
    disjoint column pairs of a round-robin round are rotated at once.

    Returns ``(u, s, v)`` with ``s`` sorted in nonincreasing order.
    Raises ConvergenceError if ``max_sweeps`` sweeps leave some pair with
    cosine above ``tol``; the error's ``best`` holds the current factors.
    """
    a = as_matrix(a)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    k = a.shape[1]
    q, rr, piv = qr(a, mode="economic", pivoting=True)
    g = np.array(rr.T, order="C")
    rot, converged = _jacobi_columns(g, tol, max_sweeps)

    # R^T = G V^T with orthogonal-column G, so A = (Q V) diag(s) (P U_G)^T
    sigma = np.sqrt(np.einsum("ij,ij->j", g, g))
    order = np.argsort(-sigma, kind="stable")
    sigma, g, rot = sigma[order], g[:, order], rot[:, order]
    # columns this small carry no direction information
    keep = sigma > max(sigma[0] * np.finfo(float).eps * k, np.finfo(float).tiny)
    ug = np.zeros_like(g)
    ug[:, keep] = g[:, keep] / sigma[keep]
    if not keep.all():
        sigma = np.where(keep, sigma, 0.0)
        ug = _orthonormal_completion(ug, keep)
    u = q @ rot
    v = np.empty_like(ug)
    v[piv] = ug
    result = (v, sigma, u) if transposed else (u, sigma, v)
    if not converged:
        raise ConvergenceError(
            f"Jacobi SVD did not converge in {max_sweeps} sweeps", best=result
        )
    return result


def tsvd(
    a,
    r: int,
    tol: float = 1e-14,
    *,
    max_sweeps: int = 60,
    oversample: int = 10,
    power_iters: int = 2,
    seed: int = 0,
) -> TsvdResult:
    """Rank-r truncated SVD of ``a``.

    Small problems (``min(m, n) <= JACOBI_MAX_DIM``) are decomposed exactly by
    Jacobi rotations. Larger ones go through a randomized range finder with
    ``oversample`` extra columns and ``power_iters`` power iterations,
    followed by a Jacobi SVD of the projected ``(r + p) x n`` matrix. The
    sketch uses a fixed ``seed`` so repeated calls are bitwise identical.

    ``tol`` is the Jacobi orthogonality tolerance; if it cannot be met in
    ``max_sweeps`` sweeps, ConvergenceError carries the best TsvdResult.
    """
    a = as_matrix(a)
    m, n = a.shape
    if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or not 1 <= r <= min(m, n):
        raise ParameterError(f"rank r={r!r} outside [1, {min(m, n)}]")
    r = int(r)

    def _truncate(u, s, v):
        return TsvdResult(u[:, :r].copy(), s[:r].copy(), v[:, :r].copy())

    try:
        if min(m, n) <= JACOBI_MAX_DIM:
            return _truncate(*jacobi_svd(a, tol, max_sweeps))
        k = min(r + oversample, m, n)
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(a @ rng.standard_normal((n, k)))
        for _ in range(power_iters):
            q, _ = np.linalg.qr(a.T @ q)
            q, _ = np.linalg.qr(a @ q)
        ub, s, v = jacobi_svd(q.T @ a, tol, max_sweeps)
        return _truncate(q @ ub, s, v)
    except ConvergenceError as exc:
        best = exc.best
        if best is not None and best[0].shape[0] != m:
            best = (q @ best[0], best[1], best[2])
        raise ConvergenceError(str(exc), best=_truncate(*best) if best else None) from None


def solve_ls_right(z, w, rank_tol: float = 1e-10) -> np.ndarray:
    """Minimise ``||z - w @ h||_F`` over ``h`` (``w`` is m x r, result r x n).

    Uses a thin QR of ``w``. When ``w`` is numerically rank deficient (smallest
    singular value at most ``rank_tol`` times the largest) the minimum-norm
    solution is returned and a RankDeficiencyWarning is emitted.
    """
    z = as_matrix(z, "z")
    w = as_matrix(w, "w")
    if z.shape[0] != w.shape[0]:
        raise ParameterError(f"row mismatch: z {z.shape} vs w {w.shape}")
    q, rr = np.linalg.qr(w)
    sv = np.linalg.svd(rr, compute_uv=False)
    if w.shape[1] > w.shape[0] or sv[-1] <= rank_tol * sv[0]:
        warnings.warn(
            f"least-squares factor of shape {w.shape} is rank deficient "
            f"(sigma_min/sigma_max={sv[-1] / sv[0] if sv[0] else 0.0:.3g})",
            RankDeficiencyWarning,
            stacklevel=2,
        )
        return np.linalg.lstsq(w, z, rcond=rank_tol)[0]
    return solve_triangular(rr, q.T @ z)


def solve_ls_left(z, h, rank_tol: float = 1e-10) -> np.ndarray:
    """Minimise ``||z - w @ h||_F`` over ``w`` (``h`` is r x n, result m x r)."""
    z = as_matrix(z, "z")
    h = as_matrix(h, "h")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        w = solve_ls_right(z.T, h.T, rank_tol).T
    for item in caught:
        warnings.warn(item.message, item.category, stacklevel=2)
    return w


def relu(a) -> np.ndarray:
    return np.maximum(as_matrix(a), 0.0)


def frobenius_inner(a, b) -> float:
    a, b = as_matrix(a), as_matrix(b)
    _same_shape(a, b)
    return float(np.einsum("ij,ij->", a, b))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(as_matrix(a)))


def nuclear_norm(a) -> float:
    """Sum of singular values (LAPACK full SVD)."""
    return float(np.linalg.svd(as_matrix(a), compute_uv=False).sum())


def relative_error(x, theta) -> float:
    """``||x - max(0, theta)||_F / ||x||_F``."""
    x, theta = as_matrix(x, "x"), as_matrix(theta, "theta")
    _same_shape(x, theta)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ParameterError("relative error undefined for a zero data matrix")
    return float(np.linalg.norm(x - np.maximum(theta, 0.0)) / nx)
