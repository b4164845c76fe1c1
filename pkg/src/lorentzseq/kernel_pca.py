"""Kernel PCA on a precomputed (possibly indefinite) pairwise matrix."""

from __future__ import annotations

import enum
import io
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricMatrix,
    DegenerateKernel,
    EmptyMatrix,
    InvalidComponents,
    NumericalError,
)
from .hyperboloid import KernelKind, KernelMatrix, PSDMode, psd_adjust

# eigenvalues within this fraction of the largest |eigenvalue| count as zero
RETAIN_RTOL = 1e-10
SYMMETRY_RTOL = 1e-12


class KPCATransform(str, enum.Enum):
    RAW = "raw"
    MDS = "mds"


@dataclass(frozen=True)
class Embedding:
    """Kernel-PCA scores: column j is sqrt(lambda_j) times eigenvector j.

    ``spectrum`` holds every eigenvalue of the centered kernel (descending)
    for scree plots; ``eigenvalues`` only the retained ones.
    """

    coords: np.ndarray
    eigenvalues: np.ndarray
    dropped_negative: int
    spectrum: np.ndarray
    transform: KPCATransform = KPCATransform.RAW
    psd_mode: PSDMode = PSDMode.CLIP
    diag_shift: float = 0.0

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def m(self) -> int:
        return self.coords.shape[1]

    @property
    def degenerate(self) -> bool:
        return self.m == 0


def _as_square(K) -> np.ndarray:
    A = K.data if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def center_kernel(K) -> np.ndarray:
    """Double-center: subtract row and column means, add back the grand mean."""
    A = _as_square(K)
    n = A.shape[0]
    if n == 0:
        raise EmptyMatrix("cannot center an empty kernel")
    col_means = A.mean(axis=0)
    # axis-0 and axis-1 reductions round differently; reuse to keep symmetry exact
    row_means = col_means if np.array_equal(A, A.T) else A.mean(axis=1)
    grand = col_means.mean()
    return (A - (row_means[:, None] + col_means[None, :])) + grand


def eigendecompose_symmetric(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Each eigenvector is signed so its largest-magnitude entry (first one on
    ties) is positive.
    """
    A = _as_square(A)
    n = A.shape[0]
    if n == 0:
        return np.empty(0), np.empty((0, 0))
    scale = np.max(np.abs(A))
    if scale > 0 and np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * scale:
        raise AsymmetricMatrix("matrix is not symmetric")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver did not converge: {exc}") from exc
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[pivots, np.arange(n)] < 0, -1.0, 1.0)
    V *= signs
    return w, V


def kernel_operand(K, transform: KPCATransform | str = KPCATransform.RAW) -> np.ndarray:
    """The matrix kernel PCA decomposes: the distances as-is, or -D*D/2 for MDS."""
    A = _as_square(K)
    if KPCATransform(transform) is KPCATransform.MDS:
        return -0.5 * (A * A)
    return A


def project(
    K,
    m: int,
    psd_mode: PSDMode | str = PSDMode.CLIP,
    transform: KPCATransform | str = KPCATransform.RAW,
    epsilon: Optional[float] = None,
) -> Embedding:
    """Embed the n items of ``K`` in at most ``m`` dimensions.

    Under ``SHIFT`` the diagonal of the operand (after ``transform``) is
    raised to make it PSD before centering. Components whose eigenvalue
    does not exceed ``RETAIN_RTOL * max|lambda|`` are dropped. If none
    survive, a :class:`DegenerateKernel` warning is issued and the returned
    embedding has zero columns.
    """
    if m < 1:
        raise InvalidComponents(f"number of components must be >= 1, got {m}")
    psd_mode = PSDMode(psd_mode)
    transform = KPCATransform(transform)
    A = kernel_operand(K, transform)
    n = A.shape[0]
    if n == 0:
        raise EmptyMatrix("cannot embed an empty kernel")
    if m > n:
        raise InvalidComponents(f"requested {m} components for {n} items")

    shift = 0.0
    if psd_mode is PSDMode.SHIFT:
        kind = K.kind if isinstance(K, KernelMatrix) else KernelKind.HYPERBOLOID
        adjusted = psd_adjust(KernelMatrix(A, kind), PSDMode.SHIFT, epsilon)
        A, shift = adjusted.data, adjusted.diag_shift

    lam, V = eigendecompose_symmetric(center_kernel(A))
    tol = RETAIN_RTOL * float(np.max(np.abs(lam))) if lam.size else 0.0
    positive = int(np.count_nonzero(lam > tol))
    dropped = int(np.count_nonzero(lam < -tol))
    keep = min(m, positive)
    coords = V[:, :keep] * np.sqrt(lam[:keep])
    if keep == 0:
        warnings.warn(
            f"no eigenvalue of the centered kernel exceeds {tol:.3g}; "
            "the embedding is empty (the mds transform avoids this for distance matrices)",
            DegenerateKernel,
            stacklevel=2,
        )
    return Embedding(coords, lam[:keep].copy(), dropped, lam, transform, psd_mode, shift)


def format_embedding_tsv(emb: Embedding, ids: Sequence[str]) -> str:
    if len(ids) != emb.n:
        raise ValueError("one id per embedding row is required")
    out = io.StringIO()
    out.write("\t".join(["id"] + [f"c{j + 1}" for j in range(emb.m)]) + "\n")
    for seq_id, row in zip(ids, emb.coords):
        out.write("\t".join([seq_id] + [repr(float(x)) for x in row]) + "\n")
    return out.getvalue()


def format_eigenvalues_csv(emb: Embedding) -> str:
    out = io.StringIO()
    out.write("index,eigenvalue,retained\n")
    for j, lam in enumerate(emb.spectrum):
        out.write(f"{j + 1},{float(lam)!r},{int(j < emb.m)}\n")
    return out.getvalue()
