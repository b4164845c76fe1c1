"""Hyperboloid (Lorentz) model: lift, Lorentzian inner product, distance, kernel matrix.

A Euclidean vector ``v`` is lifted to the forward sheet as
``(sqrt(1 + |v|^2), v)``. For two sheet points the Lorentzian product is
``B = x0*y0 - <x, y>`` and the hyperbolic distance is ``acosh(B)``.

``B`` is never formed as written. For points on the sheet

    B - 1 = ((x - y)·(x - y) - (x0 - y0)^2) / 2

which is exact algebra but avoids the cancellation between ``x0*y0`` and
``<x, y>`` that costs ~|v|^2 ulps for large vectors. The distance is then
``log1p(g + sqrt(g*(g + 2)))`` with ``g = B - 1`` so small distances keep
full relative precision. All sums run left to right with one accumulator;
the compiled kernels and the scalar functions share the same code paths,
so results are bit-identical however the matrix is partitioned.
"""

from __future__ import annotations

import enum
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Optional, Union

import numpy as np
from numba import njit

from .errors import (
    AsymmetricMatrix,
    DimensionMismatch,
    DomainError,
    InvalidVector,
    NumericalError,
)

# B in [1 - CLAMP_TOL, 1) is rounding and snaps to 1; anything lower is an error
CLAMP_TOL = 1e-9
_LN2 = math.log(2.0)
# beyond this acosh(z) = log(2z) to double precision, and z*z may overflow
_ACOSH_LARGE = 2.0**28

KERNEL_MAGIC = b"HKM1"


class KernelKind(str, enum.Enum):
    HYPERBOLOID = "hyperboloid"
    EUCLIDEAN = "euclidean"


class PSDMode(str, enum.Enum):
    CLIP = "clip"
    SHIFT = "shift"


_KIND_CODES = {KernelKind.HYPERBOLOID: 0, KernelKind.EUCLIDEAN: 1}
_ADJ_CODES = {None: 0, PSDMode.CLIP: 1, PSDMode.SHIFT: 2}


@dataclass(frozen=True)
class HyperboloidPoint:
    x0: float
    spatial: np.ndarray

    @property
    def dim(self) -> int:
        return self.spatial.shape[0]

    def sheet_residual(self) -> float:
        """|x0^2 - |x|^2 - 1| relative to max(1, x0^2)."""
        sq = _sq_norm(self.spatial)
        return abs(self.x0 * self.x0 - sq - 1.0) / max(1.0, self.x0 * self.x0)


@dataclass(frozen=True)
class KernelMatrix:
    """Dense symmetric pairwise matrix.

    ``adjustment`` records a PSD treatment (``None`` for the raw distances);
    ``diag_shift`` is the amount added to the diagonal by ``PSDMode.SHIFT``.
    """

    data: np.ndarray
    kind: KernelKind
    adjustment: Optional[PSDMode] = None
    diag_shift: float = 0.0

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind] | (_ADJ_CODES[self.adjustment] << 4)


# ---------------------------------------------------------------- compiled cores


@njit(cache=True, nogil=True)
def _sq_norm(v):
    s = 0.0
    for t in range(v.shape[0]):
        s += v[t] * v[t]
    return s


@njit(cache=True, nogil=True)
def _lift_x0(v):
    return math.sqrt(1.0 + _sq_norm(v))


@njit(cache=True, nogil=True)
def _lift_rows(V):
    out = np.empty(V.shape[0])
    for i in range(V.shape[0]):
        out[i] = _lift_x0(V[i])
    return out


@njit(cache=True, nogil=True)
def _gap(x0a, a, x0b, b):
    """B(X, Y) - 1 for two sheet points, before clamping."""
    s = 0.0
    for t in range(a.shape[0]):
        d = a[t] - b[t]
        s += d * d
    d0 = x0a - x0b
    return 0.5 * (s - d0 * d0)


@njit(cache=True, nogil=True)
def _acosh1p(g):
    """acosh(1 + g) for g >= 0."""
    if g > _ACOSH_LARGE:
        return math.log1p(g) + _LN2
    return math.log1p(g + math.sqrt(g * (g + 2.0)))


@njit(cache=True, nogil=True)
def _euclid(a, b):
    s = 0.0
    for t in range(a.shape[0]):
        d = a[t] - b[t]
        s += d * d
    return math.sqrt(s)


@njit(cache=True, nogil=True)
def _kernel_rows(x0, V, rows, hyperbolic, tol, out, err):
    """Fill out[i, j] and out[j, i] for each i in ``rows`` and every j >= i.

    Cell (i, j) with i <= j belongs to row i only, so disjoint row sets never
    write the same cell. On a domain violation the pair is stored in ``err``
    and the block stops.
    """
    n = V.shape[0]
    for r in range(rows.shape[0]):
        i = rows[r]
        out[i, i] = 0.0
        for j in range(i + 1, n):
            if hyperbolic:
                g = _gap(x0[i], V[i], x0[j], V[j])
                if g < 0.0:
                    if g < -tol:
                        err[0] = i
                        err[1] = j
                        return
                    g = 0.0
                val = _acosh1p(g)
            else:
                val = _euclid(V[i], V[j])
            out[i, j] = val
            out[j, i] = val


@njit(cache=True, nogil=True)
def _gap_pairs(x0, V, I, J):
    out = np.empty(I.shape[0])
    for p in range(I.shape[0]):
        out[p] = _gap(x0[I[p]], V[I[p]], x0[J[p]], V[J[p]])
    return out


# ---------------------------------------------------------------- scalar API


def _as_vector(v) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidVector(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidVector("vector contains non-finite entries")
    return arr


def lift(v) -> HyperboloidPoint:
    """Place ``v`` on the forward sheet: x0 = sqrt(1 + |v|^2)."""
    arr = _as_vector(v)
    x0 = _lift_x0(arr)
    if not math.isfinite(x0):
        raise InvalidVector("squared norm overflows")
    return HyperboloidPoint(x0, arr)


def _check_pair(X: HyperboloidPoint, Y: HyperboloidPoint):
    if X.dim != Y.dim:
        raise DimensionMismatch(f"points have spatial dimensions {X.dim} and {Y.dim}")


def _clamped_gap(X: HyperboloidPoint, Y: HyperboloidPoint) -> float:
    _check_pair(X, Y)
    g = _gap(X.x0, X.spatial, Y.x0, Y.spatial)
    if g < 0.0:
        if g < -CLAMP_TOL:
            raise DomainError(f"Lorentzian product {1.0 + g!r} < 1; inputs are not on the sheet")
        g = 0.0
    return g


def lorentz_inner(X: HyperboloidPoint, Y: HyperboloidPoint) -> float:
    """x0*y0 - sum(x_i*y_i), which is >= 1 on the forward sheet."""
    return 1.0 + _clamped_gap(X, Y)


def acosh_stable(z: float) -> float:
    """Inverse hyperbolic cosine that stays accurate as z -> 1+."""
    z = float(z)
    if not z >= 1.0:
        raise DomainError(f"acosh argument {z!r} < 1")
    return _acosh1p(z - 1.0)


def distance(X: HyperboloidPoint, Y: HyperboloidPoint) -> float:
    """Geodesic distance on the sheet, acosh(B(X, Y))."""
    return _acosh1p(_clamped_gap(X, Y))


def euclidean_distance(a, b) -> float:
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vectors have lengths {a.shape[0]} and {b.shape[0]}")
    return _euclid(a, b)


# ---------------------------------------------------------------- batch API


def _as_rows(spectra, lift_scale: float = 1.0) -> np.ndarray:
    V = np.asarray(spectra, dtype=np.float64)
    if V.ndim != 2:
        raise InvalidVector(f"expected an n x d matrix, got shape {V.shape}")
    if lift_scale != 1.0:
        V = V * float(lift_scale)
    V = np.ascontiguousarray(V)
    if not np.all(np.isfinite(V)):
        bad = int(np.argwhere(~np.isfinite(V))[0, 0])
        raise InvalidVector(f"row {bad} contains non-finite entries")
    return V


def lift_rows(spectra, lift_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Lift every row; returns (x0 vector, spatial matrix)."""
    V = _as_rows(spectra, lift_scale)
    x0 = _lift_rows(V)
    if not np.all(np.isfinite(x0)):
        raise InvalidVector("a row's squared norm overflows")
    return x0, V


def gap_pairs(x0: np.ndarray, V: np.ndarray, I, J) -> np.ndarray:
    """Unclamped B - 1 for row pairs (I[p], J[p]) of lifted data."""
    I = np.ascontiguousarray(I, dtype=np.int64)
    J = np.ascontiguousarray(J, dtype=np.int64)
    return _gap_pairs(x0, V, I, J)


def _row_blocks(n: int, n_blocks: int) -> list[np.ndarray]:
    """Split rows 0..n-1 into contiguous blocks of roughly equal upper-triangle work."""
    if n == 0:
        return []
    n_blocks = max(1, min(n_blocks, n))
    work = np.arange(n, 0, -1, dtype=np.float64)
    bounds = np.searchsorted(np.cumsum(work), np.linspace(0, work.sum(), n_blocks + 1)[1:-1])
    edges = np.unique(np.concatenate(([0], bounds, [n])))
    return [np.arange(a, b, dtype=np.int64) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def kernel_matrix(
    spectra,
    kind: KernelKind | str = KernelKind.HYPERBOLOID,
    workers: int = 1,
    lift_scale: float = 1.0,
) -> KernelMatrix:
    """Pairwise distance matrix over the rows of ``spectra``.

    Only the upper triangle is evaluated; each value is mirrored into the
    lower triangle and the diagonal is zero. ``lift_scale`` multiplies the
    rows before lifting (both kinds, so the two stay comparable).
    """
    kind = KernelKind(kind)
    if kind is KernelKind.HYPERBOLOID:
        x0, V = lift_rows(spectra, lift_scale)
    else:
        V = _as_rows(spectra, lift_scale)
        x0 = np.ones(V.shape[0])
    n = V.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    hyperbolic = kind is KernelKind.HYPERBOLOID
    blocks = _row_blocks(n, 4 * workers if workers > 1 else 1)
    errs = [np.full(2, -1, dtype=np.int64) for _ in blocks]

    def run(b):
        _kernel_rows(x0, V, blocks[b], hyperbolic, CLAMP_TOL, out, errs[b])

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(blocks))))
    else:
        for b in range(len(blocks)):
            run(b)

    for err in errs:
        if err[0] >= 0:
            i, j = int(err[0]), int(err[1])
            g = _gap(x0[i], V[i], x0[j], V[j])
            raise DomainError(f"Lorentzian product {1.0 + g!r} < 1", pair=(i, j))
    return KernelMatrix(out, kind)


# ---------------------------------------------------------------- PSD treatment


def min_eigenvalue(A: np.ndarray) -> float:
    try:
        return float(np.linalg.eigvalsh(A)[0]) if A.shape[0] else 0.0
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc


def psd_adjust(K: KernelMatrix, mode: PSDMode | str = PSDMode.CLIP,
               epsilon: Optional[float] = None) -> KernelMatrix:
    """Make the kernel usable as a PSD operator.

    ``SHIFT`` adds ``|lambda_min| + epsilon`` to the diagonal when the
    matrix is indefinite; off-diagonal entries are untouched.
    ``CLIP`` leaves the data alone and tags the matrix so kernel PCA
    discards the negative part of the spectrum.
    """
    mode = PSDMode(mode)
    data = K.data
    if not np.array_equal(data, data.T):
        raise AsymmetricMatrix("kernel matrix is not symmetric")
    if mode is PSDMode.CLIP:
        return KernelMatrix(data, K.kind, PSDMode.CLIP, K.diag_shift)

    lam_min = min_eigenvalue(data)
    if lam_min >= 0.0:
        return KernelMatrix(data, K.kind, PSDMode.SHIFT, K.diag_shift)
    if epsilon is None:
        epsilon = 1e-9 * max(1.0, abs(lam_min))
    elif not epsilon > 0:
        raise ValueError("epsilon must be positive")
    shift = abs(lam_min) + epsilon
    shifted = data.copy()
    shifted[np.diag_indices_from(shifted)] += shift
    return KernelMatrix(shifted, K.kind, PSDMode.SHIFT, K.diag_shift + shift)


# ---------------------------------------------------------------- file formats


def write_kernel_binary(K: KernelMatrix, dest: Union[str, Path, BinaryIO]) -> None:
    """Write ``HKM1 | u64 n | u8 kind | f64 diag_shift | n*n f64``, all little-endian."""
    payload = (KERNEL_MAGIC
               + struct.pack("<QBd", K.n, K.kind_code, K.diag_shift)
               + np.ascontiguousarray(K.data, dtype="<f8").tobytes())
    if isinstance(dest, (str, Path)):
        Path(dest).write_bytes(payload)
    else:
        dest.write(payload)


def read_kernel_binary(src: Union[str, Path, BinaryIO, bytes]) -> KernelMatrix:
    if isinstance(src, (str, Path)):
        buf = Path(src).read_bytes()
    elif isinstance(src, bytes):
        buf = src
    else:
        buf = src.read()
    header = 4 + struct.calcsize("<QBd")
    if len(buf) < header or buf[:4] != KERNEL_MAGIC:
        raise ValueError("not an HKM1 kernel file")
    n, code, shift = struct.unpack_from("<QBd", buf, 4)
    if len(buf) != header + 8 * n * n:
        raise ValueError(f"HKM1 payload size does not match n={n}")
    data = np.frombuffer(buf, dtype="<f8", offset=header).reshape(n, n).astype(np.float64)
    kinds = {v: k for k, v in _KIND_CODES.items()}
    adjs = {v: k for k, v in _ADJ_CODES.items()}
    try:
        kind, adj = kinds[code & 0x0F], adjs[code >> 4]
    except KeyError:
        raise ValueError(f"unknown kernel kind code {code}") from None
    return KernelMatrix(data, kind, adj, shift)


def format_kernel_csv(K: KernelMatrix) -> str:
    out = io.StringIO()
    np.savetxt(out, K.data, fmt="%.17g", delimiter=",")
    return out.getvalue()
