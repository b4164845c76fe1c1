"""Splitting, classifiers, metrics, significance test and class heatmaps."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import ConfigError, EmptyEvaluation, NoTrainingData, SplitInfeasible
from .rng import SPLIT, make_rng

METRICS = (
    "accuracy",
    "precision_weighted",
    "recall_weighted",
    "f1_weighted",
    "f1_macro",
    "roc_auc_ovr",
)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    runs: int = 5
    base_seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test fraction must lie in (0, 1), got {self.test_fraction}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.base_seed < 0:
            raise ConfigError("seed must be non-negative")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels: Sequence[str], spec: SplitSpec,
                     run_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/test partition for one run.

    Each class of size c >= 2 sends round(c * test_fraction) members to the
    test side, clamped to [1, c - 1]. Singleton classes stay in training.
    """
    n = len(labels)
    if n < 2:
        raise SplitInfeasible(f"need at least 2 samples, got {n}")
    rng = make_rng(spec.base_seed, SPLIT, run_index)
    labels = list(labels)

    if not spec.stratified:
        n_test = min(max(_round_half_up(n * spec.test_fraction), 1), n - 1)
        perm = rng.permutation(n)
        return np.sort(perm[n_test:]), np.sort(perm[:n_test])

    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    if all(len(members) == 1 for members in by_class.values()):
        raise SplitInfeasible("every class has a single member")

    train, test = [], []
    singletons = []
    for lab in sorted(by_class):
        members = np.asarray(by_class[lab])
        if members.size == 1:
            singletons.append(lab)
            train.extend(members.tolist())
            continue
        n_test = min(max(_round_half_up(members.size * spec.test_fraction), 1), members.size - 1)
        perm = rng.permutation(members)
        test.extend(perm[:n_test].tolist())
        train.extend(perm[n_test:].tolist())
    if singletons:
        warnings.warn(f"classes with one member kept in training only: {singletons}",
                      stacklevel=2)
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


_CHUNK_ELEMS = 4_000_000


class Prediction(NamedTuple):
    labels: list
    scores: np.ndarray  # one row per test point, columns follow ``classes``
    classes: list


def _pairwise_euclidean(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # coordinate-by-coordinate accumulation fixes the rounding, so exact ties are reproducible
    sq = np.zeros((A.shape[0], B.shape[0]))
    for t in range(A.shape[1]):
        d = A[:, t, None] - B[None, :, t]
        sq += d * d
    return np.sqrt(sq)


def _check_train(train_X, train_y):
    train_X = np.asarray(train_X, dtype=np.float64)
    if train_X.ndim == 1:
        train_X = train_X[:, None]
    if train_X.shape[0] == 0:
        raise NoTrainingData("training set is empty")
    if len(train_y) != train_X.shape[0]:
        raise ValueError("one label per training row is required")
    return train_X


def _as_test(test_X, dim):
    test_X = np.asarray(test_X, dtype=np.float64)
    if test_X.ndim == 1:
        test_X = test_X[:, None] if dim == 1 else test_X[None, :]
    if test_X.shape[1] != dim:
        raise ValueError(f"test rows have {test_X.shape[1]} columns, training rows {dim}")
    return test_X


def knn_classify(train_X, train_y: Sequence[str], test_X, neighbors: int = 5) -> Prediction:
    """Majority vote among the ``neighbors`` nearest training rows (Euclidean).

    Equal distances are ordered by training index. A tied vote goes to the
    label with the smaller summed neighbor distance, then to the
    lexicographically smaller label. Scores are vote fractions.
    """
    train_X = _check_train(train_X, train_y)
    test_X = _as_test(test_X, train_X.shape[1])
    if not 1 <= neighbors <= train_X.shape[0]:
        raise ConfigError(f"neighbors must lie in [1, {train_X.shape[0]}], got {neighbors}")
    train_y = list(train_y)
    classes = sorted(set(train_y))
    col = {c: j for j, c in enumerate(classes)}
    preds = []
    scores = np.zeros((test_X.shape[0], len(classes)))
    # keep the (chunk, n_train) distance block near 32 MB
    chunk = max(1, _CHUNK_ELEMS // train_X.shape[0])
    for start in range(0, test_X.shape[0], chunk):
        D = _pairwise_euclidean(test_X[start:start + chunk], train_X)
        order = np.argsort(D, axis=1, kind="stable")[:, :neighbors]
        for r in range(D.shape[0]):
            votes: Counter = Counter()
            dist_sum: dict[str, float] = {}
            for idx in order[r]:
                lab = train_y[idx]
                votes[lab] += 1
                dist_sum[lab] = dist_sum.get(lab, 0.0) + float(D[r, idx])
            best = min(votes, key=lambda lab: (-votes[lab], dist_sum[lab], lab))
            preds.append(best)
            for lab, v in votes.items():
                scores[start + r, col[lab]] = v / neighbors
    return Prediction(preds, scores, classes)


def nearest_centroid_classify(train_X, train_y: Sequence[str], test_X) -> Prediction:
    """Assign each test row to the class with the nearest mean; ties go to the smaller label.

    Scores are one-hot on the predicted class.
    """
    train_X = _check_train(train_X, train_y)
    test_X = _as_test(test_X, train_X.shape[1])
    train_y = np.asarray(list(train_y), dtype=object)
    classes = sorted(set(train_y.tolist()))
    centroids = np.vstack([train_X[train_y == c].mean(axis=0) for c in classes])
    D = _pairwise_euclidean(test_X, centroids)
    # classes are sorted, so argmin's first-index rule is the lexicographic tie-break
    best = np.argmin(D, axis=1)
    scores = np.zeros((test_X.shape[0], len(classes)))
    scores[np.arange(test_X.shape[0]), best] = 1.0
    return Prediction([classes[b] for b in best], scores, classes)


def binary_auc(scores, positive) -> float:
    """Area under the ROC curve via the rank-sum statistic; tied scores count half."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = stats.rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion(predictions: Sequence[str], truth: Sequence[str]):
    labels = sorted(set(truth) | set(predictions))
    pos = {lab: i for i, lab in enumerate(labels)}
    C = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for p, t in zip(predictions, truth):
        C[pos[t], pos[p]] += 1
    return labels, C


def evaluate(predictions: Sequence[str], truth: Sequence[str], scores=None,
             classes: Optional[Sequence[str]] = None) -> dict:
    """Accuracy, support-weighted precision/recall/F1, macro F1 and one-vs-rest AUC.

    Per-class ratios with a zero denominator are 0. Labels that only appear
    among the predictions get their own confusion row (with zero support).
    ``scores`` columns follow ``classes``; AUC averages over the classes
    present in ``truth`` and is NaN without scores.
    """
    predictions, truth = list(predictions), list(truth)
    if len(predictions) != len(truth):
        raise ValueError("predictions and truth differ in length")
    if not truth:
        raise EmptyEvaluation("nothing to evaluate")
    labels, C = confusion(predictions, truth)
    tp = np.diag(C).astype(np.float64)
    support = C.sum(axis=1).astype(np.float64)
    predicted = C.sum(axis=0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = support + predicted
        f1 = np.where(denom > 0, 2.0 * tp / denom, 0.0)
    n = float(len(truth))
    block = {
        "accuracy": float(tp.sum() / n),
        "precision_weighted": float((precision * support).sum() / n),
        "recall_weighted": float((recall * support).sum() / n),
        "f1_weighted": float((f1 * support).sum() / n),
        "f1_macro": float(f1.mean()),
        "roc_auc_ovr": float("nan"),
    }
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        if classes is None or scores.shape != (len(truth), len(classes)):
            raise ValueError("scores need one column per entry of classes")
        if not np.allclose(scores.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("score rows must sum to 1")
        present = set(truth)
        truth_arr = np.asarray(truth, dtype=object)
        aucs = [binary_auc(scores[:, j], truth_arr == c)
                for j, c in enumerate(classes) if c in present]
        aucs = [a for a in aucs if not math.isnan(a)]
        if aucs:
            block["roc_auc_ovr"] = float(np.mean(aucs))
    return block


class TTestResult(NamedTuple):
    statistic: float
    pvalue: float
    df: float


def t_test_summary(mean1: float, sd1: float, n1: int,
                   mean2: float, sd2: float, n2: int) -> TTestResult:
    """Welch's two-sample t-test from summary statistics (two-sided)."""
    if sd1 < 0 or sd2 < 0:
        raise ValueError("standard deviations must be non-negative")
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs at least 2 observations")
    a = sd1 * sd1 / n1
    b = sd2 * sd2 / n2
    diff = mean1 - mean2
    if a + b == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, 1.0, float("nan"))
        return TTestResult(math.copysign(math.inf, diff), 0.0, float("nan"))
    t = diff / math.sqrt(a + b)
    df = (a + b) ** 2 / (a * a / (n1 - 1) + b * b / (n2 - 1))
    p = 2.0 * special.stdtr(df, -abs(t))
    return TTestResult(t, min(1.0, float(p)), df)


@dataclass(frozen=True)
class Heatmap:
    classes: list
    values: np.ndarray

    def to_csv(self) -> str:
        rows = ["," + ",".join(self.classes)]
        for c, row in zip(self.classes, self.values):
            rows.append(c + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(rows) + "\n"


def class_heatmap(coords, labels: Sequence[str]) -> Heatmap:
    """Mean pairwise cosine similarity between (and within) classes, min-max scaled to [0, 1].

    Within a class, self-pairs are excluded; a class with a single row gets
    1 on the diagonal. Zero rows are dropped. A constant matrix maps to all ones.
    """
    X = np.asarray(coords, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ValueError("one label per embedding row is required")
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    nonzero = norms > 0
    if not nonzero.all():
        warnings.warn(f"{int((~nonzero).sum())} zero-norm rows excluded from the heatmap",
                      stacklevel=2)
    labels = np.asarray(list(labels), dtype=object)
    U = X[nonzero] / norms[nonzero, None]
    labels = labels[nonzero]
    classes = sorted(set(labels.tolist()))
    if not classes:
        raise ValueError("no non-zero embedding rows to compare")

    # sum_{i in a, j in b} u_i.u_j = (sum_a u).(sum_b u)
    sums = np.vstack([U[labels == c].sum(axis=0) for c in classes])
    counts = np.array([np.count_nonzero(labels == c) for c in classes], dtype=np.float64)
    self_dots = np.array([np.einsum("ij,ij->", U[labels == c], U[labels == c]) for c in classes])
    c = len(classes)
    H = np.empty((c, c))
    for a in range(c):
        for b in range(a, c):
            if a == b:
                if counts[a] == 1:
                    H[a, a] = 1.0
                else:
                    H[a, a] = (sums[a] @ sums[a] - self_dots[a]) / (counts[a] * (counts[a] - 1))
            else:
                H[a, b] = H[b, a] = (sums[a] @ sums[b]) / (counts[a] * counts[b])
    lo, hi = H.min(), H.max()
    if hi - lo <= 0:
        H = np.ones_like(H)
    else:
        H = (H - lo) / (hi - lo)
    return Heatmap(classes, H)


@dataclass
class EvalReport:
    """Per-run metric blocks with their mean and sample standard deviation.

    Wall-clock timings are kept apart (``timings``) so the serialized
    report is reproducible byte for byte.
    """

    per_run: list
    config: dict
    timings: list
    notes: dict

    @property
    def runs(self) -> int:
        return len(self.per_run)

    def summary(self, metric: str) -> tuple[float, float]:
        vals = np.array([r[metric] for r in self.per_run], dtype=np.float64)
        if np.isnan(vals).any():
            return float("nan"), float("nan")
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        return mean, sd

    @property
    def mean(self) -> dict:
        return {m: self.summary(m)[0] for m in METRICS}

    @property
    def sd(self) -> dict:
        return {m: self.summary(m)[1] for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mean": {m: _json_float(v) for m, v in self.mean.items()},
            "notes": self.notes,
            "per_run": [{m: _json_float(r[m]) for m in METRICS} for r in self.per_run],
            "runs": self.runs,
            "sd": {m: _json_float(v) for m, v in self.sd.items()},
        }

    def timing_summary(self) -> dict:
        out = {"per_run": self.timings}
        for key in ("train_time_sec", "pipeline_time_sec"):
            vals = np.array([t[key] for t in self.timings], dtype=np.float64)
            out[key] = {"mean": float(vals.mean()),
                        "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
        return out

    def metrics_tsv(self) -> str:
        cols = ["run", *METRICS, "train_time_sec", "pipeline_time_sec"]
        lines = ["\t".join(cols)]
        for i, (r, t) in enumerate(zip(self.per_run, self.timings)):
            vals = [str(i)] + [repr(float(r[m])) for m in METRICS]
            vals += [repr(float(t["train_time_sec"])), repr(float(t["pipeline_time_sec"]))]
            lines.append("\t".join(vals))
        return "\n".join(lines) + "\n"


def _json_float(v: float):
    return None if v is None or math.isnan(v) else float(v)
