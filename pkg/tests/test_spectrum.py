from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentzseq.errors import InvalidKmer
from lorentzseq.io_sequences import Alphabet, AmbiguityPolicy, SequenceRecord
from lorentzseq.spectrum import (
    compute_spectrum,
    format_spectrum_tsv,
    kmer_index,
    kmer_strings,
    read_spectrum_binary,
    spectrum_matrix,
    write_spectrum_binary,
)

DNA = Alphabet.dna()


def naive_counts(seq, k, alphabet):
    """Hash-map window counter used as the oracle."""
    counts = Counter(seq[i:i + k] for i in range(len(seq) - k + 1))
    vec = np.zeros(len(alphabet) ** k)
    for kmer, c in counts.items():
        if all(ch in alphabet.index for ch in kmer):
            vec[kmer_strings(alphabet, k).index(kmer)] += c
    return vec


@pytest.mark.parametrize("kmer,idx", [("AA", 0), ("CG", 6), ("GT", 11)])
def test_kmer_index(kmer, idx):
    assert kmer_index(kmer, DNA) == idx


def test_kmer_index_rejects_foreign():
    with pytest.raises(InvalidKmer):
        kmer_index("AN", DNA)


def test_kmer_index_bijective():
    strings = kmer_strings(DNA, 3)
    assert [kmer_index(s, DNA) for s in strings] == list(range(64))


def test_acgt_k2_raw():
    v = compute_spectrum(SequenceRecord("s", "ACGT"), 2, DNA, normalize=False).counts
    expected = np.zeros(16)
    expected[[1, 6, 11]] = 1
    assert np.array_equal(v, expected)


def test_aaaa_normalized():
    v = compute_spectrum("AAAA", 2, DNA, normalize=True).counts
    assert v[0] == 1.0 and v[1:].sum() == 0


def test_masking_skips_windows():
    v = compute_spectrum("ACXGT", 2, DNA, AmbiguityPolicy.MASK_KMERS, normalize=False).counts
    assert np.array_equal(v, naive_counts("ACXGT", 2, DNA))
    assert np.flatnonzero(v).tolist() == [kmer_index("AC", DNA), kmer_index("GT", DNA)]


def test_reject_policy_raises():
    with pytest.raises(InvalidKmer):
        compute_spectrum("ACXGT", 2, DNA, AmbiguityPolicy.REJECT)


def test_short_sequence_is_zero():
    s = compute_spectrum("AC", 3, DNA, normalize=True)
    assert s.dim == 64 and not s.counts.any()


def test_order_sensitivity():
    assert not np.array_equal(compute_spectrum("AC", 2, DNA).counts,
                              compute_spectrum("CA", 2, DNA).counts)


def test_matrix_examples():
    recs = [SequenceRecord("a", "ACGT"), SequenceRecord("b", "AAAA")]
    M = spectrum_matrix(recs, 1, DNA, normalize=False)
    assert M.tolist() == [[1, 1, 1, 1], [4, 0, 0, 0]]
    assert spectrum_matrix([], 2, DNA).shape == (0, 16)


def test_row_sums_equal_window_count():
    rng = np.random.default_rng(5)
    recs = [SequenceRecord(str(i), "".join(rng.choice(list("ACGT"), rng.integers(3, 120))))
            for i in range(50)]
    M = spectrum_matrix(recs, 3, DNA, normalize=False)
    assert M.sum(axis=1).tolist() == [len(r.residues) - 2 for r in recs]


def test_workers_give_identical_bytes():
    rng = np.random.default_rng(6)
    recs = [SequenceRecord(str(i), "".join(rng.choice(list("ACGTN"), 300))) for i in range(40)]
    a = spectrum_matrix(recs, 4, DNA, workers=1)
    b = spectrum_matrix(recs, 4, DNA, workers=4)
    assert a.tobytes() == b.tobytes()


@settings(max_examples=150, deadline=None)
@given(st.text(alphabet="ACGTNX", max_size=200), st.integers(1, 4))
def test_agrees_with_hashmap_oracle(seq, k):
    got = compute_spectrum(seq, k, DNA, normalize=False).counts
    assert np.array_equal(got, naive_counts(seq, k, DNA))


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="ACGTN", max_size=100), st.integers(1, 4))
def test_normalized_sums_to_one(seq, k):
    v = compute_spectrum(seq, k, DNA, normalize=True).counts
    assert np.all(v >= 0)
    if v.any():
        assert abs(v.sum() - 1.0) <= 1e-9


def test_protein_and_sparse_path(monkeypatch):
    import lorentzseq.spectrum as spectrum

    prot = Alphabet.protein()
    dense = compute_spectrum("ACDEFGHIKLMNPQRSTVWYACD", 3, prot, normalize=False).counts
    monkeypatch.setattr(spectrum, "SPARSE_DIM", 10)
    sparse = compute_spectrum("ACDEFGHIKLMNPQRSTVWYACD", 3, prot, normalize=False).counts
    assert np.array_equal(dense, sparse) and dense.sum() == 21


def test_exports_round_trip():
    M = np.array([[0.25, 0.75, 0, 0], [1, 0, 0, 0.5]])
    assert np.array_equal(read_spectrum_binary(write_spectrum_binary(M)), M)
    tsv = format_spectrum_tsv(M, ["a", "b"], DNA, 1).splitlines()
    assert tsv[0] == "id\tA\tC\tG\tT"
    assert tsv[1].split("\t")[0] == "a" and float(tsv[2].split("\t")[4]) == 0.5
