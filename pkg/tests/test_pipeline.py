import json

import numpy as np
import pytest

from lorentzseq.classify_eval import SplitSpec
from lorentzseq.errors import ConfigError
from lorentzseq.io_sequences import SequenceRecord
from lorentzseq.pipeline import ExperimentConfig, heatmap_for, prepare, run_experiment
from lorentzseq.synth import mutation_tree_dataset


@pytest.fixture(scope="module")
def small():
    return mutation_tree_dataset(n=60, length=120, clades=3, seed=3)


def test_synthetic_dataset_shape():
    recs = mutation_tree_dataset(n=10, length=50, clades=4, seed=1)
    assert [r.id for r in recs][:2] == ["seq01", "seq02"]
    assert sorted({r.label for r in recs}) == ["clade_0", "clade_1", "clade_2", "clade_3"]
    assert all(len(r.residues) == 50 for r in recs)
    again = mutation_tree_dataset(n=10, length=50, clades=4, seed=1)
    assert recs == again


def test_single_run_sd_zero(small):
    rep = run_experiment(small, ExperimentConfig(split=SplitSpec(runs=1)))
    assert rep.runs == 1 and rep.sd["accuracy"] == 0.0


def test_deterministic_report(small):
    cfg = ExperimentConfig(split=SplitSpec(runs=3, base_seed=7))
    a = json.dumps(run_experiment(small, cfg).to_dict(), sort_keys=True)
    b = json.dumps(run_experiment(small, cfg).to_dict(), sort_keys=True)
    assert a == b


def test_threads_do_not_change_results(small):
    a = run_experiment(small, ExperimentConfig(split=SplitSpec(runs=2), threads=1)).to_dict()
    b = run_experiment(small, ExperimentConfig(split=SplitSpec(runs=2), threads=4)).to_dict()
    assert a == b


def test_raw_falls_back_to_mds(small):
    prepared = prepare(small, ExperimentConfig())
    assert prepared.notes["kpca_transform_used"] == "mds"
    assert prepared.embedding.m >= 1
    assert prepared.notes["components_retained"] == prepared.embedding.m


def test_explicit_mds_and_shift(small):
    prepared = prepare(small, ExperimentConfig(kpca_transform="mds", psd="shift", components=5))
    assert prepared.notes["kpca_transform_used"] == "mds"
    assert prepared.notes["kernel_diag_shift"] > 0
    assert prepared.embedding.m == 5 and prepared.embedding.dropped_negative == 0


@pytest.mark.parametrize("kernel", ["hyperboloid", "euclidean"])
@pytest.mark.parametrize("classifier", ["knn", "centroid"])
def test_separates_clades(small, kernel, classifier):
    rep = run_experiment(small, ExperimentConfig(kernel=kernel, classifier=classifier))
    assert rep.runs == 5 and rep.mean["accuracy"] >= 0.9
    assert len(rep.timings) == 5


def test_short_sequences_noted():
    recs = [SequenceRecord(f"s{i}", "ACGTACGTAC"[: 2 + i], "ab"[i % 2]) for i in range(8)]
    prepared = prepare(recs, ExperimentConfig(k=3, components=3))
    assert prepared.notes["sequences_shorter_than_k"] == 1
    assert prepared.notes["zero_spectrum_rows"] == 1


def test_heatmap(small):
    h = heatmap_for(prepare(small, ExperimentConfig()))
    assert h.classes == ["clade_0", "clade_1", "clade_2"]
    off = h.values[~np.eye(3, dtype=bool)].reshape(3, 2)
    assert np.all(np.diag(h.values)[:, None] > off)


def test_unlabeled_records_rejected():
    recs = [SequenceRecord("a", "ACGT"), SequenceRecord("b", "ACGA")]
    with pytest.raises(ConfigError):
        run_experiment(recs, ExperimentConfig(components=1))


@pytest.mark.parametrize("kw", [{"k": 0}, {"components": 0}, {"classifier": "svm"},
                                {"lift_scale": 0.0}, {"kernel": "cosine"}])
def test_invalid_config(kw):
    with pytest.raises((ConfigError, ValueError)):
        ExperimentConfig(**kw)
