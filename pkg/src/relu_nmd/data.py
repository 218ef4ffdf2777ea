"""Synthetic instances, IDX image files, CSV matrices and the NNLS-based NMF error."""

from __future__ import annotations

import csv
import gzip
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadMagicError,
    CsvParseError,
    DimensionOverflowError,
    EmptyMatrixError,
    LabelCountMismatchError,
    ParameterError,
    TruncatedPayloadError,
)
from .linalg import as_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
# refuse headers claiming more than this many payload bytes
IDX_MAX_BYTES = 1 << 34


# independent PCG64 streams derived from one user seed
STREAM_DATA = 0
STREAM_INIT = 1


def make_rng(seed: int, stream: int = STREAM_DATA) -> np.random.Generator:
    """PCG64 generator; all package randomness flows through this.

    ``stream`` selects an independent child sequence of ``seed`` so that data
    and initialisations drawn from the same seed are not correlated.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def standard_normal(seed_or_rng, size: int, stream: int = STREAM_DATA) -> np.ndarray:
    """``size`` i.i.d. N(0, 1) draws by Box-Muller on PCG64 uniforms."""
    if isinstance(seed_or_rng, np.random.Generator):
        rng = seed_or_rng
    else:
        rng = make_rng(seed_or_rng, stream)
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # in (0, 1], keeps log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:size]


@dataclass(frozen=True)
class SyntheticSpec:
    m: int
    n: int
    r: int
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.n, self.r) < 1:
            raise ParameterError(f"dimensions must be positive: {self}")
        if self.r > min(self.m, self.n):
            raise ParameterError(f"generative rank {self.r} exceeds min(m, n)")


def generate_synthetic(spec: SyntheticSpec):
    """``X = max(0, W H)`` with standard normal ``W`` (m x r) and ``H`` (r x n).

    Returns ``(x, w_true, h_true)``.
    """
    m, n, r = spec.m, spec.n, spec.r
    g = standard_normal(spec.seed, m * r + r * n)
    w = g[: m * r].reshape(m, r)
    h = g[m * r:].reshape(r, n)
    return np.maximum(w @ h, 0.0), w, h


def sparse_surrogate(m: int, n: int, r: int, zero_fraction: float, seed: int) -> np.ndarray:
    """``max(0, W H - t)`` with the shift ``t`` chosen to zero a given fraction."""
    _, w, h = generate_synthetic(SyntheticSpec(m, n, r, seed))
    wh = w @ h
    t = np.quantile(wh, zero_fraction)
    return np.maximum(wh - t, 0.0)


@dataclass(frozen=True)
class ImageDataset:
    matrix: np.ndarray  # one flattened image per row, values in [0, 1]
    image_height: int
    image_width: int
    labels: Optional[np.ndarray] = None


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, ndims: int, what: str):
    header = 4 + 4 * ndims
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{what}: file shorter than the magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{what}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedPayloadError(f"{what}: header truncated")
    dims = struct.unpack(f">{ndims}I", raw[4:header])
    total = 1
    for d in dims:
        total *= d
    if total > IDX_MAX_BYTES:
        raise DimensionOverflowError(f"{what}: dimensions {dims} exceed {IDX_MAX_BYTES} bytes")
    payload = raw[header:]
    if len(payload) < total:
        raise TruncatedPayloadError(f"{what}: expected {total} payload bytes, found {len(payload)}")
    return dims, np.frombuffer(payload, dtype=np.uint8, count=total)


def load_idx(images_path, labels_path=None) -> ImageDataset:
    """Read an IDX image file (and optional label file); gzip is handled transparently."""
    dims, pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, "images")
    count, height, width = dims
    matrix = pixels.reshape(count, height * width).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        (nlabels,), raw_labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, "labels")
        if nlabels != count:
            raise LabelCountMismatchError(f"{count} images but {nlabels} labels")
        labels = raw_labels.astype(np.int64)
    return ImageDataset(matrix, height, width, labels)


def write_idx(images: np.ndarray, path, labels: Optional[np.ndarray] = None, labels_path=None) -> None:
    """Write uint8 images (count x height x width) and optional labels as IDX."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ParameterError("images must have shape (count, height, width)")
    Path(path).write_bytes(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


def subsample_rows(dataset: ImageDataset, count: int, seed: int) -> np.ndarray:
    """Pick ``count`` distinct rows (sorted) with a seeded generator."""
    total = dataset.matrix.shape[0]
    if not 1 <= count <= total:
        raise ParameterError(f"cannot sample {count} rows from {total}")
    rows = np.sort(make_rng(seed).choice(total, size=count, replace=False))
    return dataset.matrix[rows]


def save_csv(matrix, path) -> None:
    """Write one row per line, comma separated, 17 significant digits."""
    matrix = as_matrix(matrix)
    buf = io.StringIO()
    for row in matrix:
        buf.write(",".join(format(v, ".17g") for v in row))
        buf.write("\n")
    Path(path).write_text(buf.getvalue())


def load_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            row = []
            for col, token in enumerate(fields, start=1):
                try:
                    value = float(token)
                except ValueError:
                    raise CsvParseError(f"not a number: {token!r}", lineno, col) from None
                if not np.isfinite(value):
                    raise CsvParseError(f"non-finite value {token!r}", lineno, col)
                row.append(value)
            if rows and len(row) != len(rows[0]):
                raise CsvParseError(
                    f"expected {len(rows[0])} fields, found {len(row)}", lineno, len(row)
                )
            rows.append(row)
    if not rows:
        raise EmptyMatrixError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


@dataclass
class NNLSResult:
    v: np.ndarray
    converged: bool
    iterations: int
    kkt_residual: float


def _projected_gradient_norm(v, grad):
    pg = np.where(v > 0, grad, np.minimum(grad, 0.0))
    return float(np.linalg.norm(pg))


def nnls(a, b, tol: float = 1e-8, max_iter: int = 5000) -> NNLSResult:
    """Nonnegative least squares ``min_{V >= 0} ||B - A V||_F`` for all columns at once.

    Accelerated projected gradient with step ``1/L`` (``L = ||A^T A||_2``)
    and a function-value restart of the momentum. Stops when the projected
    gradient norm is at most ``tol * ||A^T B||_F``. The returned ``v`` is
    always entrywise nonnegative, converged or not.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ParameterError(f"row mismatch: a {a.shape}, b {b.shape}")
    gram = a.T @ a
    atb = a.T @ b
    lipschitz = float(np.linalg.norm(gram, 2))
    if lipschitz == 0:
        raise ParameterError("a is identically zero")
    threshold = tol * max(float(np.linalg.norm(atb)), np.finfo(float).tiny)

    def objective(v):
        return float(np.einsum("ij,ij->", v, gram @ v) - 2 * np.einsum("ij,ij->", v, atb))

    v = np.maximum(np.linalg.lstsq(a, b, rcond=None)[0], 0.0)
    y, t, f_v = v, 1.0, objective(v)
    residual = _projected_gradient_norm(v, gram @ v - atb)
    for it in range(1, max_iter + 1):
        if residual <= threshold:
            return NNLSResult(v, True, it - 1, residual)
        v_new = np.maximum(y - (gram @ y - atb) / lipschitz, 0.0)
        f_new = objective(v_new)
        if f_new > f_v:
            # momentum overshot: restart from a plain projected gradient step
            y, t = v, 1.0
            v_new = np.maximum(v - (gram @ v - atb) / lipschitz, 0.0)
            f_new = objective(v_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = v_new + ((t - 1.0) / t_new) * (v_new - v)
        v, t, f_v = v_new, t_new, f_new
        residual = _projected_gradient_norm(v, gram @ v - atb)
    return NNLSResult(v, residual <= threshold, max_iter, residual)


def nmf_compression_error(x, u_hat, tol: float = 1e-8, max_iter: int = 5000):
    """``min_{V >= 0} ||X - max(0, U_hat) V||_F / ||X||_F``.

    Returns ``(error, converged)``. A zero basis gives error 1.
    """
    x = as_matrix(x, "x")
    basis = np.maximum(as_matrix(u_hat, "u_hat"), 0.0)
    if basis.shape[0] != x.shape[0]:
        raise ParameterError(f"basis has {basis.shape[0]} rows, data has {x.shape[0]}")
    nx = float(np.linalg.norm(x))
    if nx == 0:
        raise ParameterError("data matrix is zero")
    if not basis.any():
        return 1.0, True
    res = nnls(basis, x, tol, max_iter)
    return float(np.linalg.norm(x - basis @ res.v)) / nx, res.converged
