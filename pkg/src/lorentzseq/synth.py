"""Synthetic labeled sequences from a simulated mutation tree.

A random root sequence seeds one child per clade (per-site substitution
probability ``mu_between``); each clade then grows a binary tree of
``depth`` levels whose edges substitute with probability ``mu_within``.
Leaves are labeled with their top-level clade.
"""

from __future__ import annotations

import numpy as np

from .io_sequences import Alphabet, SequenceRecord
from .rng import SYNTH, make_rng


def mutate(codes: np.ndarray, mu: float, n_symbols: int, rng: np.random.Generator) -> np.ndarray:
    """Substitute each site with probability ``mu`` by a different, uniformly chosen symbol."""
    hit = rng.random(codes.shape[0]) < mu
    out = codes.copy()
    out[hit] = (codes[hit] + rng.integers(1, n_symbols, size=int(hit.sum()))) % n_symbols
    return out


def _grow(node, count, level, depth, mu, n_symbols, rng):
    if level == depth or count == 1:
        return [mutate(node, mu, n_symbols, rng) for _ in range(count)]
    left = (count + 1) // 2
    leaves = []
    for part in (left, count - left):
        if part:
            child = mutate(node, mu, n_symbols, rng)
            leaves.extend(_grow(child, part, level + 1, depth, mu, n_symbols, rng))
    return leaves


def mutation_tree_dataset(
    n: int = 400,
    length: int = 300,
    clades: int = 4,
    mu_within: float = 0.02,
    mu_between: float = 0.15,
    alphabet: Alphabet | None = None,
    seed: int = 0,
    depth: int = 1,
) -> list[SequenceRecord]:
    if alphabet is None:
        alphabet = Alphabet.dna()
    if n < clades or clades < 1:
        raise ValueError("need at least one sequence per clade")
    if length < 1 or depth < 1:
        raise ValueError("length and depth must be positive")
    for mu in (mu_within, mu_between):
        if not 0.0 <= mu <= 1.0:
            raise ValueError("substitution probabilities must lie in [0, 1]")
    s = len(alphabet)
    rng = make_rng(seed, SYNTH)
    root = rng.integers(0, s, size=length)
    symbols = np.array(alphabet.symbols)
    width = len(str(n))
    records = []
    for c in range(clades):
        size = n // clades + (1 if c < n % clades else 0)
        clade_root = mutate(root, mu_between, s, rng)
        for leaf in _grow(clade_root, size, 1, depth, mu_within, s, rng):
            idx = len(records) + 1
            records.append(SequenceRecord(f"seq{idx:0{width}d}", "".join(symbols[leaf]),
                                          f"clade_{c}"))
    return records
