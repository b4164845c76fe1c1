"""Built-in invariant suite run by ``lorentzseq selfcheck``.

Each check draws random inputs from a seeded stream and compares the
library against an independent computation. ``inject`` names checks
whose computed values are deliberately corrupted, to prove the harness
can fail.
"""

from __future__ import annotations

import decimal
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .classify_eval import knn_classify
from .hyperboloid import (
    acosh_stable,
    distance,
    gap_pairs,
    kernel_matrix,
    lift,
    lift_rows,
    lorentz_inner,
    min_eigenvalue,
    psd_adjust,
    PSDMode,
)
from .kernel_pca import eigendecompose_symmetric
from .rng import SELFCHECK, make_rng


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _random_spectra(rng, count, max_dim=256, max_norm=1e4):
    """Random vectors of varying dimension with log-uniform norms up to ``max_norm``."""
    out = []
    for _ in range(count):
        d = int(rng.integers(1, max_dim + 1))
        v = rng.standard_normal(d)
        nv = np.linalg.norm(v)
        if nv == 0:
            v[0], nv = 1.0, 1.0
        out.append(v * (10 ** rng.uniform(-3, math.log10(max_norm)) / nv))
    return out


def _padded(vectors, dim):
    M = np.zeros((len(vectors), dim))
    for i, v in enumerate(vectors):
        M[i, :v.size] = v
    return M


def check_sheet_membership(rng, corrupt):
    worst, where = 0.0, None
    for i, v in enumerate(_random_spectra(rng, 2000)):
        X = lift(v)
        x0 = X.x0 * (1 + 1e-6) if corrupt else X.x0
        sq = float(np.sum(v.astype(np.longdouble) ** 2))
        r = abs(x0 * x0 - sq - 1.0) / max(1.0, x0 * x0)
        if r > worst:
            worst, where = r, i
    return worst <= 1e-9, f"max relative residual {worst:.3g} (vector {where})"


def check_lorentz_lower_bound(rng, corrupt):
    dim = 64
    V = _padded(_random_spectra(rng, 2000, max_dim=dim), dim)
    x0, V = lift_rows(V)
    I = rng.integers(0, V.shape[0], 20000)
    J = rng.integers(0, V.shape[0], 20000)
    g = gap_pairs(x0, V, I, J)
    if corrupt:
        g = g - 1e-6
    p = int(np.argmin(g))
    return g[p] >= -1e-9, f"min B-1 = {g[p]:.3g} at pair ({I[p]}, {J[p]})"


def check_self_inner(rng, corrupt):
    worst = 0.0
    for v in _random_spectra(rng, 2000):
        X = lift(v)
        b = lorentz_inner(X, X) + (1e-6 if corrupt else 0.0)
        worst = max(worst, abs(b - 1.0))
    return worst <= 1e-9, f"max |B(X,X) - 1| = {worst:.3g}"


def check_metric_axioms(rng, corrupt):
    dim = 32
    pts = [lift(v) for v in _padded(_random_spectra(rng, 3000, max_dim=dim, max_norm=50), dim)]
    for t in range(1000):
        X, Y, Z = pts[3 * t], pts[3 * t + 1], pts[3 * t + 2]
        dxy, dyx = distance(X, Y), distance(Y, X)
        dxz, dyz = distance(X, Z), distance(Y, Z)
        if corrupt:
            dxz += 10.0 * (dxy + dyz) + 1.0
        if min(dxy, dxz, dyz) < 0:
            return False, f"negative distance in triple {t}"
        if dxy != dyx:
            return False, f"asymmetric distance in triple {t}: {dxy!r} vs {dyx!r}"
        if distance(X, X) != 0.0:
            return False, f"d(X, X) != 0 in triple {t}"
        if dxz > dxy + dyz + 1e-9:
            return False, f"triangle inequality fails in triple {t}: {dxz!r} > {dxy!r} + {dyz!r}"
    return True, "1000 triples"


def _acosh_reference(z: float) -> decimal.Decimal:
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        dz = decimal.Decimal(z)
        return (dz + (dz * dz - 1).sqrt()).ln()


def check_acosh_identity(rng, corrupt):
    grid = 1.0 + np.logspace(-14, 12, 400)
    worst, where = 0.0, None
    for z in grid:
        got = acosh_stable(float(z))
        if corrupt:
            got *= 1 + 1e-9
        ref = _acosh_reference(float(z))
        rel = float(abs((decimal.Decimal(got) - ref) / ref))
        if rel > worst:
            worst, where = rel, float(z)
    identity = abs(acosh_stable(math.cosh(2.0)) - 2.0)
    ok = worst <= 1e-12 and identity <= 1e-12
    return ok, f"max relative error {worst:.3g} at z={where!r}; |acosh(cosh 2) - 2| = {identity:.3g}"


def _exhaustive_knn(train, labels, point, k):
    dists = sorted((math.sqrt(sum((a - b) ** 2 for a, b in zip(row, point))), i)
                   for i, row in enumerate(train))[:k]
    votes, sums = {}, {}
    for d, i in dists:
        votes[labels[i]] = votes.get(labels[i], 0) + 1
        sums[labels[i]] = sums.get(labels[i], 0.0) + d
    return min(votes, key=lambda lab: (-votes[lab], sums[lab], lab))


def check_knn_oracle(rng, corrupt):
    X = rng.standard_normal((200, 4))
    y = [f"c{int(v)}" for v in rng.integers(0, 4, 200)]
    train, test = X[:150], X[150:]
    for k in (1, 3, 5):
        got = knn_classify(train, y[:150], test, k).labels
        if corrupt:
            got = list(reversed(got))
        for t, point in enumerate(test):
            want = _exhaustive_knn(train.tolist(), y, point.tolist(), k)
            if got[t] != want:
                return False, f"neighbors={k}, test point {t}: got {got[t]}, oracle {want}"
    return True, "200 points x neighbors {1, 3, 5}"


def check_eigen_residuals(rng, corrupt):
    for trial in range(20):
        n = int(rng.integers(1, 51))
        B = rng.standard_normal((n, n))
        A = (B + B.T) / 2
        lam, V = eigendecompose_symmetric(A)
        if corrupt:
            lam = lam + 1e-3
        fro = np.linalg.norm(A)
        res = np.linalg.norm(A @ V - V * lam, axis=0).max()
        orth = np.abs(V.T @ V - np.eye(n)).max()
        if res > 1e-8 * fro or orth > 1e-9 or np.any(np.diff(lam) > 0):
            return False, f"trial {trial} (n={n}): residual {res:.3g}, orthogonality {orth:.3g}"
    return True, "20 random symmetric matrices, n <= 50"


def check_kernel_determinism(rng, corrupt):
    S = rng.random((120, 64))
    S /= S.sum(axis=1, keepdims=True)
    a = kernel_matrix(S, workers=1).data
    b = kernel_matrix(S, workers=4).data
    if corrupt:
        b = b.copy()
        b[0, 1] = np.nextafter(b[0, 1], np.inf)
    if not np.array_equal(a, b):
        i, j = np.argwhere(a != b)[0]
        return False, f"1 vs 4 workers differ at ({i}, {j})"
    if not np.array_equal(a, a.T) or np.any(np.diag(a) != 0):
        return False, "kernel not exactly symmetric with zero diagonal"
    return True, "120 x 120, 1 vs 4 workers"


def check_psd_shift(rng, corrupt):
    for trial in range(10):
        n = int(rng.integers(2, 60))
        S = rng.random((n, 16))
        K = kernel_matrix(S)
        adj = psd_adjust(K, PSDMode.SHIFT)
        data = adj.data.copy()
        if corrupt:
            data[np.diag_indices(n)] -= 2 * adj.diag_shift
        off = ~np.eye(n, dtype=bool)
        if not np.array_equal(data[off], K.data[off]):
            return False, f"trial {trial}: off-diagonal entries changed"
        lam = min_eigenvalue(data)
        if lam < 0:
            return False, f"trial {trial} (n={n}): lambda_min {lam:.3g} < 0 after shift"
    return True, "10 random distance matrices"


CHECKS: dict[str, Callable] = {
    "sheet_membership": check_sheet_membership,
    "lorentz_lower_bound": check_lorentz_lower_bound,
    "self_inner": check_self_inner,
    "metric_axioms": check_metric_axioms,
    "acosh_identity": check_acosh_identity,
    "knn_oracle": check_knn_oracle,
    "eigen_residuals": check_eigen_residuals,
    "kernel_determinism": check_kernel_determinism,
    "psd_shift": check_psd_shift,
}


def run_selfcheck(seed: int = 0, inject: Optional[Iterable[str]] = None) -> list[CheckResult]:
    inject = set(inject or ())
    unknown = inject - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    results = []
    for idx, (name, fn) in enumerate(CHECKS.items()):
        t0 = time.perf_counter()
        try:
            ok, detail = fn(make_rng(seed, SELFCHECK, idx), name in inject)
        except Exception as exc:  # a crash is a failed property, not a crashed suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
