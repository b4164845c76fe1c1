"""End-to-end experiment: spectra -> kernel -> kernel PCA -> repeated classification.

The kernel and its embedding are built once over all rows (the
transductive protocol); each run only re-splits and re-trains.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classify_eval import (
    EvalReport,
    SplitSpec,
    class_heatmap,
    evaluate,
    knn_classify,
    nearest_centroid_classify,
    stratified_split,
)
from .errors import ConfigError, DegenerateKernel, LorentzSeqError
from .hyperboloid import KernelKind, KernelMatrix, PSDMode, kernel_matrix, psd_adjust
from .io_sequences import Alphabet, AmbiguityPolicy, SequenceRecord, dataset_stats
from .kernel_pca import Embedding, KPCATransform, project
from .spectrum import spectrum_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    k: int = 3
    alphabet: str = "dna"
    ambiguity: AmbiguityPolicy = AmbiguityPolicy.MASK_KMERS
    normalize: bool = True
    lift_scale: float = 1.0
    kernel: KernelKind = KernelKind.HYPERBOLOID
    psd: PSDMode = PSDMode.CLIP
    kpca_transform: KPCATransform = KPCATransform.RAW
    components: int = 100
    classifier: str = "knn"
    neighbors: int = 5
    split: SplitSpec = field(default_factory=SplitSpec)
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.components < 1:
            raise ConfigError(f"components must be >= 1, got {self.components}")
        if self.neighbors < 1:
            raise ConfigError(f"neighbors must be >= 1, got {self.neighbors}")
        if not (self.lift_scale > 0 and np.isfinite(self.lift_scale)):
            raise ConfigError(f"lift scale must be positive, got {self.lift_scale}")
        if self.classifier not in ("knn", "centroid"):
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        Alphabet.parse(self.alphabet)
        for name, enum_type in (("ambiguity", AmbiguityPolicy), ("kernel", KernelKind),
                                ("psd", PSDMode), ("kpca_transform", KPCATransform)):
            object.__setattr__(self, name, enum_type(getattr(self, name)))

    def echo(self) -> dict:
        """JSON-ready view; ``threads`` is left out since results do not depend on it."""
        out = asdict(self)
        out.pop("threads")
        out["split"] = asdict(self.split)
        for key in ("ambiguity", "kernel", "psd", "kpca_transform"):
            out[key] = out[key].value
        return out


@dataclass
class Prepared:
    ids: list
    labels: list
    spectra: np.ndarray
    kernel: KernelMatrix  # after psd_adjust
    embedding: Embedding
    notes: dict
    seconds: float


def prepare(records: Sequence[SequenceRecord], config: ExperimentConfig) -> Prepared:
    """Spectra, kernel matrix and kernel-PCA embedding over all records."""
    t0 = time.perf_counter()
    alphabet = Alphabet.parse(config.alphabet)
    n = len(records)
    if n < 2:
        raise ConfigError(f"need at least 2 sequences, got {n}")
    spectra = spectrum_matrix(records, config.k, alphabet, config.ambiguity,
                              config.normalize, workers=config.threads)
    raw = kernel_matrix(spectra, config.kernel, workers=config.threads,
                        lift_scale=config.lift_scale)
    adjusted = psd_adjust(raw, config.psd)
    m = min(config.components, n - 1)

    notes: dict = {"components_requested": config.components}
    stats = dataset_stats(list(records), config.k)
    short = stats.pop("shorter_than_k")
    notes["sequences_shorter_than_k"] = len(short)
    notes["zero_spectrum_rows"] = int(np.count_nonzero(~spectra.any(axis=1)))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateKernel)
        emb = project(raw, m, config.psd, config.kpca_transform)
    transform_used = config.kpca_transform
    if emb.degenerate and config.kpca_transform is KPCATransform.RAW:
        logger.warning("raw kernel PCA retained no component; falling back to the mds transform")
        emb = project(raw, m, config.psd, KPCATransform.MDS)
        transform_used = KPCATransform.MDS
    elif emb.degenerate:
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
    if emb.degenerate:
        raise LorentzSeqError("kernel PCA produced an empty embedding")

    notes["kpca_transform_used"] = transform_used.value
    notes["components_retained"] = emb.m
    notes["eigenvalues_dropped_negative"] = emb.dropped_negative
    notes["kernel_diag_shift"] = adjusted.diag_shift
    notes["embedding_diag_shift"] = emb.diag_shift
    notes["dataset"] = stats
    return Prepared(
        ids=[r.id for r in records],
        labels=[r.label for r in records],
        spectra=spectra,
        kernel=adjusted,
        embedding=emb,
        notes=notes,
        seconds=time.perf_counter() - t0,
    )


def evaluate_runs(prepared: Prepared, config: ExperimentConfig) -> EvalReport:
    labels = prepared.labels
    if any(lab is None for lab in labels):
        raise ConfigError("every record needs a label for classification")
    X = prepared.embedding.coords
    per_run, timings = [], []
    for run in range(config.split.runs):
        try:
            train, test = stratified_split(labels, config.split, run)
            train_y = [labels[i] for i in train]
            truth = [labels[i] for i in test]
            t0 = time.perf_counter()
            if config.classifier == "knn":
                k = min(config.neighbors, len(train))
                pred = knn_classify(X[train], train_y, X[test], k)
            else:
                pred = nearest_centroid_classify(X[train], train_y, X[test])
            fit = time.perf_counter() - t0
            per_run.append(evaluate(pred.labels, truth, pred.scores, pred.classes))
        except LorentzSeqError as exc:
            exc.args = (f"run {run}: {exc}",)
            raise
        timings.append({"train_time_sec": fit, "pipeline_time_sec": fit + prepared.seconds})
    report_config = config.echo()
    return EvalReport(per_run=per_run, config=report_config, timings=timings,
                      notes=prepared.notes)


def run_experiment(records: Sequence[SequenceRecord], config: ExperimentConfig) -> EvalReport:
    return evaluate_runs(prepare(records, config), config)


def heatmap_for(prepared: Prepared):
    return class_heatmap(prepared.embedding.coords, prepared.labels)
