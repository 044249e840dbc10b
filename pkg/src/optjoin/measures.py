"""Alphabets, symbol sequences and sparse measures on k-blocks.

Blocks are stored as rows of a small unsigned-integer array (one byte per
symbol for alphabets of up to 256 tokens), sorted lexicographically.  The
row bytes double as hashable keys, so block length is not limited by the
machine word.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError

MASS_TOL = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Alphabet:
    """Ordered set of distinct string tokens; token ``i`` has id ``i``."""

    tokens: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        toks = tuple(str(t) for t in self.tokens)
        if len(toks) == 0:
            raise InputError("alphabet must contain at least one token")
        index = {t: i for i, t in enumerate(toks)}
        if len(index) != len(toks):
            raise InputError("alphabet tokens must be distinct")
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def dtype(self) -> np.dtype:
        """Storage dtype for symbol ids (big-endian so bytes sort lexicographically)."""
        return np.dtype(np.uint8) if self.size <= 256 else np.dtype(">u2")

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)

    def id_of(self, token) -> int:
        try:
            return self._index[str(token)]
        except KeyError:
            raise InputError(f'unknown token "{token}"') from None

    def encode(self, tokens: Iterable) -> np.ndarray:
        return np.array([self.id_of(t) for t in tokens], dtype=self.dtype)

    def decode(self, ids) -> list:
        return [self.tokens[int(i)] for i in ids]

    @classmethod
    def range(cls, size: int) -> "Alphabet":
        """Alphabet with tokens ``"0"..str(size-1)``."""
        return cls(tuple(str(i) for i in range(size)))

    @classmethod
    def pairs(cls, x: "Alphabet", y: "Alphabet") -> "Alphabet":
        """Product alphabet; pair ``(i, j)`` gets id ``i * |Y| + j``."""
        return cls(tuple(f"{a}|{b}" for a in x.tokens for b in y.tokens))


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """A finite sequence of symbol ids over an alphabet."""

    alphabet: Alphabet
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 1:
            raise InputError("sequence data must be one-dimensional")
        if data.size and (data.min() < 0 or data.max() >= self.alphabet.size):
            raise InputError("sequence contains ids outside the alphabet")
        object.__setattr__(self, "data", _freeze(data.astype(self.alphabet.dtype)))

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    def __len__(self):
        return self.n

    def tokens(self) -> list:
        return self.alphabet.decode(self.data)


def read_alphabet(path) -> Alphabet:
    """Read an alphabet file with one token per line (line index = id)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    toks = [ln.strip() for ln in lines]
    if any(not t for t in toks):
        raise InputError(f"{path}: blank line inside alphabet file")
    return Alphabet(tuple(toks))


def sequence_from_tokens(tokens: Sequence, alphabet: Alphabet | None = None) -> SymbolSequence:
    """Build a sequence from tokens, inferring the alphabet by first occurrence."""
    tokens = [str(t) for t in tokens]
    if alphabet is None:
        if not tokens:
            raise InputError("empty sequence")
        alphabet = Alphabet(tuple(dict.fromkeys(tokens)))
    return SymbolSequence(alphabet, alphabet.encode(tokens))


def ingest_sequence(path, alphabet: Alphabet | None = None) -> SymbolSequence:
    """Read a whitespace-separated token file.

    Parameters
    ----------
    path : path-like
        UTF-8 text file.
    alphabet : Alphabet, optional
        Fixed alphabet.  Unknown tokens raise :class:`InputError`.  When omitted
        the alphabet is inferred in order of first occurrence.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    tokens = path.read_text(encoding="utf-8").split()
    if not tokens:
        raise InputError(f"{path}: empty sequence file")
    return sequence_from_tokens(tokens, alphabet)


def write_sequence(seq: SymbolSequence, path) -> None:
    Path(path).write_text(" ".join(seq.tokens()) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# block aggregation helpers


def _row_keys(blocks: np.ndarray) -> np.ndarray:
    """View each row of a C-contiguous 2-d array as one opaque (void) scalar."""
    blocks = np.ascontiguousarray(blocks)
    return blocks.view(np.dtype((np.void, blocks.dtype.itemsize * blocks.shape[1]))).ravel()


def group_blocks(blocks: np.ndarray, weights: np.ndarray):
    """Merge duplicate rows of ``blocks`` summing ``weights``.

    Returns the unique rows in lexicographic order and the summed weights.
    Zero sums are kept.
    """
    blocks = np.ascontiguousarray(blocks)
    weights = np.asarray(weights)
    if blocks.shape[0] == 0:
        return blocks, weights
    if blocks.shape[1] == 0:
        return blocks[:1], np.array([weights.sum()], dtype=weights.dtype)
    keys = _row_keys(blocks)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    sums = np.add.reduceat(weights[order], starts)
    return blocks[order[starts]], sums


def _encode_codes(blocks: np.ndarray, size: int) -> np.ndarray:
    codes = np.zeros(blocks.shape[0], dtype=np.int64)
    for j in range(blocks.shape[1]):
        codes = codes * size + blocks[:, j]
    return codes


def _decode_codes(codes: np.ndarray, size: int, k: int, dtype) -> np.ndarray:
    out = np.empty((codes.shape[0], k), dtype=dtype)
    rem = codes.copy()
    for j in range(k - 1, -1, -1):
        out[:, j] = rem % size
        rem //= size
    return out


class BlockMeasure:
    """Probability measure on k-blocks with finite support.

    Parameters
    ----------
    alphabet : Alphabet
    blocks : ndarray, shape (m, k)
        Distinct blocks, sorted lexicographically.
    masses : ndarray, shape (m,)
        Strictly positive masses summing to one.
    counts, denominator : optional
        Exact integer representation ``masses = counts / denominator`` when
        the measure comes from counting (used by exact solvers).

    Use :meth:`from_blocks` or :meth:`from_dict` to build one from raw data.
    """

    __slots__ = ("alphabet", "k", "blocks", "masses", "counts", "denominator", "_lookup")

    def __init__(self, alphabet, blocks, masses, counts=None, denominator=None, *, validate=True):
        blocks = np.asarray(blocks)
        masses = np.asarray(masses, dtype=float)
        if blocks.ndim != 2 or masses.shape != (blocks.shape[0],):
            raise InputError("blocks must be (m, k) and masses (m,)")
        if blocks.shape[1] < 1:
            raise InputError("block length k must be at least 1")
        if validate:
            if blocks.shape[0] == 0:
                raise InputError("measure has empty support")
            if not np.all(masses > 0):
                raise InputError("atom masses must be strictly positive")
            if abs(masses.sum() - 1.0) > MASS_TOL * max(1, blocks.shape[0]) ** 0.5:
                raise InputError(f"masses sum to {masses.sum()!r}, not 1")
            if blocks.min() < 0 or blocks.max() >= alphabet.size:
                raise InputError("block contains ids outside the alphabet")
        self.alphabet = alphabet
        self.k = int(blocks.shape[1])
        self.blocks = _freeze(blocks.astype(alphabet.dtype, copy=False))
        self.masses = _freeze(masses)
        self.counts = None if counts is None else _freeze(np.asarray(counts, dtype=np.int64))
        self.denominator = None if denominator is None else int(denominator)
        self._lookup = None

    # construction -------------------------------------------------------
    @classmethod
    def from_blocks(cls, alphabet: Alphabet, blocks, weights, *, normalize: bool = False) -> "BlockMeasure":
        """Aggregate (possibly repeated, unsorted) blocks with weights."""
        blocks = np.asarray(blocks, dtype=alphabet.dtype)
        if blocks.ndim == 1:
            blocks = blocks[:, None]
        weights = np.asarray(weights, dtype=float)
        ub, w = group_blocks(blocks, weights)
        keep = w > 0
        ub, w = ub[keep], w[keep]
        if normalize:
            w = w / w.sum()
        return cls(alphabet, ub, w)

    @classmethod
    def from_dict(cls, alphabet: Alphabet, atoms: Mapping, *, normalize: bool = False) -> "BlockMeasure":
        """Build from ``{block_tuple: mass}`` where blocks are id tuples."""
        if not atoms:
            raise InputError("measure has empty support")
        keys = list(atoms)
        blocks = np.array([tuple(np.atleast_1d(b)) for b in keys], dtype=np.int64)
        return cls.from_blocks(alphabet, blocks, [atoms[b] for b in keys], normalize=normalize)

    @classmethod
    def point_mass(cls, alphabet: Alphabet, block) -> "BlockMeasure":
        return cls(alphabet, np.asarray([block], dtype=alphabet.dtype), [1.0], [1], 1)

    # views --------------------------------------------------------------
    @property
    def support_size(self) -> int:
        return int(self.blocks.shape[0])

    def __len__(self):
        return self.support_size

    def keys(self) -> list:
        """Canonical byte encoding of each atom's block."""
        return [r.tobytes() for r in self.blocks]

    def index_of(self, block) -> int:
        """Row index of ``block`` in :attr:`blocks`, or -1 when absent."""
        if self._lookup is None:
            self._lookup = {key: i for i, key in enumerate(self.keys())}
        key = np.asarray(block, dtype=self.alphabet.dtype).tobytes()
        return self._lookup.get(key, -1)

    def mass_of(self, block) -> float:
        i = self.index_of(block)
        return 0.0 if i < 0 else float(self.masses[i])

    def as_dict(self) -> dict:
        """``{block_tuple: mass}`` with integer ids."""
        return {tuple(int(v) for v in b): float(m) for b, m in zip(self.blocks, self.masses)}

    def token_atoms(self) -> list:
        """List of ``(token_list, mass)`` pairs."""
        return [(self.alphabet.decode(b), float(m)) for b, m in zip(self.blocks, self.masses)]

    def marginal(self, start: int, stop: int) -> "BlockMeasure":
        """Law of coordinates ``start:stop`` (0-based, half open)."""
        if not 0 <= start < stop <= self.k:
            raise InputError("invalid coordinate range")
        if start == 0 and stop == self.k:
            return self
        b, w = group_blocks(self.blocks[:, start:stop], self.masses)
        return BlockMeasure(self.alphabet, b, w, validate=False)

    def same_space(self, other: "BlockMeasure") -> bool:
        return self.alphabet == other.alphabet and self.k == other.k

    def __eq__(self, other):
        return (
            isinstance(other, BlockMeasure)
            and self.same_space(other)
            and np.array_equal(self.blocks, other.blocks)
            and np.array_equal(self.masses, other.masses)
        )

    __hash__ = None

    def __repr__(self):
        return f"BlockMeasure(|X|={self.alphabet.size}, k={self.k}, atoms={self.support_size})"


def empirical_block_measure(seq: SymbolSequence, k: int) -> BlockMeasure:
    """Sliding-window k-block frequencies of ``seq``.

    Each of the ``n - k + 1`` windows contributes mass ``1 / (n - k + 1)``.
    Integer counts are retained on the result.
    """
    k = int(k)
    n = seq.n
    if k < 1:
        raise InputError("k must be at least 1")
    if k > n:
        raise InputError("k exceeds sequence length")
    nwin = n - k + 1
    size = seq.alphabet.size
    data = seq.data
    if k * np.log2(max(size, 2)) < 62:
        # integer codes give the same (lexicographic) order and are much faster to sort
        codes = np.zeros(nwin, dtype=np.int64)
        for j in range(k):
            codes *= size
            codes += data[j : j + nwin]
        uc, counts = np.unique(codes, return_counts=True)
        blocks = _decode_codes(uc, size, k, seq.alphabet.dtype)
    else:
        windows = sliding_window_view(data, k)
        blocks, counts = group_blocks(windows, np.ones(nwin, dtype=np.int64))
    counts = counts.astype(np.int64)
    return BlockMeasure(seq.alphabet, blocks, counts / nwin, counts, nwin)


def _aligned(a: BlockMeasure, b: BlockMeasure):
    if not a.same_space(b):
        raise InputError("measures must share alphabet and block length")
    blocks = np.concatenate([a.blocks, b.blocks])
    w = np.concatenate([a.masses, -b.masses])
    return group_blocks(blocks, w)


def l1_distance(a: BlockMeasure, b: BlockMeasure) -> float:
    """Sum of absolute mass differences over the union of supports."""
    _, diff = _aligned(a, b)
    return float(np.abs(diff).sum())


def entropy(m: BlockMeasure) -> float:
    """Shannon entropy in nats."""
    p = m.masses
    return float(-(p * np.log(p)).sum())
