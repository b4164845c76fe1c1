"""FASTA / label-table parsing and residue validation."""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Optional, Union

from .errors import (
    ConfigError,
    DuplicateLabel,
    EmptyInput,
    InvalidResidue,
    MalformedFasta,
    MalformedRow,
    MissingLabel,
)

logger = logging.getLogger(__name__)

DNA = "ACGT"
PROTEIN = "ACDEFGHIKLMNPQRSTVWY"

ByteSource = Union[bytes, str, BinaryIO]


class AmbiguityPolicy(str, enum.Enum):
    REJECT = "reject"
    MASK_KMERS = "mask"


@dataclass(frozen=True)
class Alphabet:
    """Ordered residue alphabet; ``index`` maps each symbol to its rank."""

    symbols: tuple
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if len(symbols) < 2:
            raise ConfigError("alphabet needs at least 2 symbols")
        if len(set(symbols)) != len(symbols):
            raise ConfigError(f"alphabet symbols are not unique: {''.join(symbols)!r}")
        for s in symbols:
            if len(s) != 1 or s.isspace() or s == ">":
                raise ConfigError(f"invalid alphabet symbol {s!r}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "index", {s: i for i, s in enumerate(symbols)})

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, char):
        return char in self.index

    @property
    def name(self) -> str:
        chars = "".join(self.symbols)
        if chars == DNA:
            return "dna"
        if chars == PROTEIN:
            return "protein"
        return f"custom:{chars}"

    @classmethod
    def dna(cls) -> "Alphabet":
        return cls(tuple(DNA))

    @classmethod
    def protein(cls) -> "Alphabet":
        return cls(tuple(PROTEIN))

    @classmethod
    def parse(cls, spec: str) -> "Alphabet":
        """Build from a CLI spelling: ``dna``, ``protein`` or ``custom:<chars>``."""
        low = spec.lower()
        if low == "dna":
            return cls.dna()
        if low == "protein":
            return cls.protein()
        if low.startswith("custom:"):
            return cls(tuple(spec[len("custom:"):].upper()))
        raise ConfigError(f"unknown alphabet {spec!r} (expected dna, protein or custom:<chars>)")


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    residues: str
    label: Optional[str] = None


def _read_bytes(source: ByteSource) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, str):
        return source.encode()
    data = source.read()
    return data.encode() if isinstance(data, str) else data


def parse_fasta(source: ByteSource) -> list[SequenceRecord]:
    """Parse FASTA text into records.

    The id is the header up to the first whitespace; sequence lines are
    concatenated and uppercased. Blank lines are ignored.
    """
    data = _read_bytes(source)
    text = data.decode("utf-8")
    if not text.strip():
        raise EmptyInput("FASTA input is empty")

    records = []
    seq_id = None
    header_line = 0
    chunks: list[str] = []

    def flush():
        if not chunks:
            raise MalformedFasta(f"header {seq_id!r} has no sequence lines", header_line)
        records.append(SequenceRecord(seq_id, "".join(chunks).upper()))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            if seq_id is not None:
                flush()
            fields = line[1:].split(maxsplit=1)
            if not fields:
                raise MalformedFasta("header has an empty id", lineno)
            seq_id = fields[0]
            header_line = lineno
            chunks = []
        else:
            if seq_id is None:
                raise MalformedFasta("sequence data before the first '>' header", lineno)
            chunks.append(line)
    flush()
    return records


def read_fasta(path: Union[str, Path]) -> list[SequenceRecord]:
    with open(path, "rb") as fh:
        return parse_fasta(fh)


def format_fasta(records: Iterable[SequenceRecord], width: int = 60) -> str:
    out = io.StringIO()
    for rec in records:
        out.write(f">{rec.id}\n")
        seq = rec.residues
        for start in range(0, len(seq), width):
            out.write(seq[start:start + width] + "\n")
    return out.getvalue()


def load_labels(source: ByteSource) -> dict[str, str]:
    """Read a two-column ``id,label`` table; a leading ``id,label`` header is skipped."""
    text = _read_bytes(source).decode("utf-8-sig")
    labels: dict[str, str] = {}
    first_data = True
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        fields = [f.strip() for f in row]
        if len(fields) != 2:
            raise MalformedRow(lineno, ",".join(row))
        if first_data and [f.lower() for f in fields] == ["id", "label"]:
            first_data = False
            continue
        first_data = False
        seq_id, label = fields
        if not seq_id:
            raise MalformedRow(lineno, ",".join(row))
        if seq_id in labels:
            raise DuplicateLabel(seq_id)
        labels[seq_id] = label
    return labels


def read_labels(path: Union[str, Path]) -> dict[str, str]:
    with open(path, "rb") as fh:
        return load_labels(fh)


def validate_records(
    records: Iterable[SequenceRecord],
    labels: Optional[Mapping[str, str]],
    alphabet: Alphabet,
    policy: AmbiguityPolicy = AmbiguityPolicy.MASK_KMERS,
) -> list[SequenceRecord]:
    """Attach labels and check residues against ``alphabet``.

    ``labels=None`` admits unlabeled records (spectrum/kernel stages only).
    Under ``MASK_KMERS`` foreign characters are kept and later skipped by
    the spectrum counter.
    """
    policy = AmbiguityPolicy(policy)
    out = []
    n_ambiguous = 0
    for rec in records:
        if not rec.id:
            raise MalformedFasta("record with empty id")
        if not rec.residues:
            raise MalformedFasta(f"record {rec.id!r} has no residues")
        bad = next((i for i, c in enumerate(rec.residues) if c not in alphabet.index), None)
        if bad is not None:
            if policy is AmbiguityPolicy.REJECT:
                raise InvalidResidue(rec.id, bad, rec.residues[bad])
            n_ambiguous += 1
        if labels is not None:
            if rec.id not in labels:
                raise MissingLabel(rec.id)
            rec = replace(rec, label=labels[rec.id])
        out.append(rec)
    if n_ambiguous:
        logger.info("%d sequences contain non-alphabet residues; k-mers over them are masked",
                    n_ambiguous)
    return out


def dataset_stats(records: list[SequenceRecord], k: Optional[int] = None) -> dict:
    """Summary in the shape of a dataset table row: size, classes, length range."""
    lengths = [len(r.residues) for r in records]
    classes = sorted({r.label for r in records if r.label is not None})
    stats = {
        "n": len(records),
        "classes": len(classes),
        "class_names": classes,
        "max_length": max(lengths) if lengths else 0,
        "min_length": min(lengths) if lengths else 0,
        "mean_length": round(sum(lengths) / len(lengths), 6) if lengths else 0.0,
    }
    if k is not None:
        stats["shorter_than_k"] = sorted(r.id for r in records if len(r.residues) < k)
    return stats
