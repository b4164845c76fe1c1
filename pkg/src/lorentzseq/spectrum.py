"""k-mer spectrum features.

A sequence over an alphabet of size ``s`` maps to a vector of length
``s**k`` whose entry at the base-``s`` rank of a k-mer counts the sliding
windows equal to that k-mer.
"""

from __future__ import annotations

import itertools
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidKmer
from .io_sequences import Alphabet, AmbiguityPolicy, SequenceRecord

# above this many coordinates rows are counted sparsely and scattered
SPARSE_DIM = 10**6


@dataclass(frozen=True)
class KmerSpectrum:
    k: int
    counts: np.ndarray
    normalized: bool

    @property
    def dim(self) -> int:
        return self.counts.shape[0]


def spectrum_dim(alphabet: Alphabet, k: int) -> int:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    dim = len(alphabet) ** k
    if dim >= 2**62:
        raise ConfigError(f"|alphabet|^k = {len(alphabet)}^{k} does not fit a 64-bit index")
    return dim


def kmer_index(kmer: str, alphabet: Alphabet) -> int:
    base = len(alphabet)
    idx = 0
    for c in kmer:
        rank = alphabet.index.get(c)
        if rank is None:
            raise InvalidKmer(f"k-mer {kmer!r} contains {c!r}, which is not in the alphabet")
        idx = idx * base + rank
    return idx


def kmer_strings(alphabet: Alphabet, k: int) -> list[str]:
    """All k-mers in index order."""
    spectrum_dim(alphabet, k)
    return ["".join(p) for p in itertools.product(alphabet.symbols, repeat=k)]


def _lookup_table(alphabet: Alphabet):
    if not all(ord(s) < 128 for s in alphabet.symbols):
        return None
    lut = np.full(256, -1, dtype=np.int64)
    for s, r in alphabet.index.items():
        lut[ord(s)] = r
    return lut


def _encode(residues: str, alphabet: Alphabet, lut) -> np.ndarray:
    if lut is not None:
        try:
            raw = np.frombuffer(residues.encode("ascii"), dtype=np.uint8)
            return lut[raw]
        except UnicodeEncodeError:
            pass
    return np.fromiter((alphabet.index.get(c, -1) for c in residues),
                       dtype=np.int64, count=len(residues))


def _window_indices(codes: np.ndarray, k: int, base: int, policy: AmbiguityPolicy,
                    seq_id: str) -> np.ndarray:
    """Base-``base`` ranks of every all-valid window of length ``k``."""
    n_windows = codes.shape[0] - k + 1
    if n_windows <= 0:
        return np.empty(0, dtype=np.int64)
    invalid = codes < 0
    if invalid.any():
        if policy is AmbiguityPolicy.REJECT:
            pos = int(np.argmax(invalid))
            raise InvalidKmer(f"sequence {seq_id!r}: non-alphabet residue at position {pos}")
        codes = np.where(invalid, 0, codes)
    idx = np.zeros(n_windows, dtype=np.int64)
    for t in range(k):
        idx *= base
        idx += codes[t:t + n_windows]
    if invalid.any():
        bad = np.concatenate(([0], np.cumsum(invalid, dtype=np.int64)))
        keep = (bad[k:] - bad[:-k]) == 0
        idx = idx[keep]
    return idx


def _count_row(residues, seq_id, k, alphabet, policy, normalize, lut, dim) -> np.ndarray:
    codes = _encode(residues, alphabet, lut)
    idx = _window_indices(codes, k, len(alphabet), policy, seq_id)
    if dim > SPARSE_DIM:
        row = np.zeros(dim, dtype=np.float64)
        uniq, cnt = np.unique(idx, return_counts=True)
        row[uniq] = cnt
    else:
        row = np.bincount(idx, minlength=dim).astype(np.float64)
    if normalize and idx.shape[0] > 0:
        row /= idx.shape[0]
    return row


def compute_spectrum(
    seq: SequenceRecord | str,
    k: int,
    alphabet: Alphabet,
    policy: AmbiguityPolicy = AmbiguityPolicy.MASK_KMERS,
    normalize: bool = True,
) -> KmerSpectrum:
    """Count (or, with ``normalize``, take frequencies of) the valid k-mer windows.

    Sequences with no valid window give an all-zero vector.
    """
    dim = spectrum_dim(alphabet, k)
    policy = AmbiguityPolicy(policy)
    if isinstance(seq, SequenceRecord):
        residues, seq_id = seq.residues, seq.id
    else:
        residues, seq_id = seq, "<string>"
    row = _count_row(residues, seq_id, k, alphabet, policy, normalize,
                     _lookup_table(alphabet), dim)
    return KmerSpectrum(k=k, counts=row, normalized=normalize)


def spectrum_matrix(
    records: Sequence[SequenceRecord],
    k: int,
    alphabet: Alphabet,
    policy: AmbiguityPolicy = AmbiguityPolicy.MASK_KMERS,
    normalize: bool = True,
    workers: int = 1,
) -> np.ndarray:
    """Stack spectra row-wise, preserving record order."""
    dim = spectrum_dim(alphabet, k)
    policy = AmbiguityPolicy(policy)
    lut = _lookup_table(alphabet)
    out = np.zeros((len(records), dim), dtype=np.float64)

    def fill(i):
        rec = records[i]
        out[i] = _count_row(rec.residues, rec.id, k, alphabet, policy, normalize, lut, dim)

    if workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(len(records))))
    else:
        for i in range(len(records)):
            fill(i)
    return out


SPECTRUM_MAGIC = b"HSM1"


def format_spectrum_tsv(S: np.ndarray, ids: Sequence[str], alphabet: Alphabet, k: int) -> str:
    """One row per sequence; the header names each column's k-mer."""
    if S.shape[0] != len(ids):
        raise ValueError("one id per spectrum row is required")
    lines = ["\t".join(["id", *kmer_strings(alphabet, k)])]
    for seq_id, row in zip(ids, S):
        lines.append("\t".join([seq_id, *(repr(float(x)) for x in row)]))
    return "\n".join(lines) + "\n"


def write_spectrum_binary(S: np.ndarray) -> bytes:
    """``HSM1 | u64 rows | u64 cols | rows*cols f64``, little-endian, row-major."""
    S = np.ascontiguousarray(S, dtype="<f8")
    return SPECTRUM_MAGIC + struct.pack("<QQ", *S.shape) + S.tobytes()


def read_spectrum_binary(buf: bytes) -> np.ndarray:
    if buf[:4] != SPECTRUM_MAGIC:
        raise ValueError("not an HSM1 spectrum file")
    rows, cols = struct.unpack_from("<QQ", buf, 4)
    if len(buf) != 20 + 8 * rows * cols:
        raise ValueError("HSM1 payload size does not match its header")
    return np.frombuffer(buf, dtype="<f8", offset=20).reshape(rows, cols).astype(np.float64)
