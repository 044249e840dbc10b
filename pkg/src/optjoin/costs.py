"""Single-letter costs, their k-step sums and adapted pseudometrics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InputError
from .measures import Alphabet


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Nonnegative cost matrix ``c(x, y)`` on ``X x Y``."""

    x_alphabet: Alphabet
    y_alphabet: Alphabet
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        shape = (self.x_alphabet.size, self.y_alphabet.size)
        if mat.shape != shape:
            raise InputError(f"cost matrix has shape {mat.shape}, expected {shape}")
        if not np.all(np.isfinite(mat)):
            raise InputError("cost matrix must be finite")
        if np.any(mat < 0):
            raise InputError("cost matrix must be nonnegative")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def sup_norm(self) -> float:
        return float(self.matrix.max())

    def transpose(self) -> "CostSpec":
        return CostSpec(self.y_alphabet, self.x_alphabet, self.matrix.T)

    def to_json(self) -> dict:
        return {
            "x_tokens": list(self.x_alphabet.tokens),
            "y_tokens": list(self.y_alphabet.tokens),
            "matrix": self.matrix.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CostSpec":
        try:
            return cls(Alphabet(obj["x_tokens"]), Alphabet(obj["y_tokens"]), obj["matrix"])
        except KeyError as exc:
            raise InputError(f"cost JSON missing field {exc}") from None

    def __eq__(self, other):
        return (
            isinstance(other, CostSpec)
            and self.x_alphabet == other.x_alphabet
            and self.y_alphabet == other.y_alphabet
            and np.array_equal(self.matrix, other.matrix)
        )

    __hash__ = None


def hamming_cost(alphabet: Alphabet, y_alphabet: Alphabet | None = None) -> CostSpec:
    """0-1 cost ``1(x != y)``; tokens are compared by value across alphabets."""
    y_alphabet = alphabet if y_alphabet is None else y_alphabet
    mat = np.array([[float(a != b) for b in y_alphabet.tokens] for a in alphabet.tokens])
    return CostSpec(alphabet, y_alphabet, mat)


def load_cost(spec, x_alphabet: Alphabet, y_alphabet: Alphabet) -> CostSpec:
    """Resolve ``"hamming"``, a JSON path, or a JSON dict to a cost on the given alphabets.

    A cost read from JSON may list tokens in a different order or be a superset
    of the data alphabets; it is reindexed onto ``x_alphabet`` x ``y_alphabet``.
    """
    if isinstance(spec, CostSpec):
        obj = spec.to_json()
    elif isinstance(spec, str) and spec == "hamming":
        return hamming_cost(x_alphabet, y_alphabet)
    elif isinstance(spec, dict):
        obj = spec
    else:
        path = Path(spec)
        if not path.is_file():
            raise InputError(f"{path}: no such cost file")
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    full = CostSpec.from_json(obj)
    try:
        rows = [full.x_alphabet.id_of(t) for t in x_alphabet.tokens]
        cols = [full.y_alphabet.id_of(t) for t in y_alphabet.tokens]
    except InputError as exc:
        raise InputError(f"cost does not cover the data alphabet: {exc}") from None
    return CostSpec(x_alphabet, y_alphabet, full.matrix[np.ix_(rows, cols)])


def k_step_cost(c: CostSpec, x_block, y_block) -> float:
    """``sum_l c(x_l, y_l)`` for equal-length id blocks."""
    xb = np.asarray(x_block, dtype=np.intp).ravel()
    yb = np.asarray(y_block, dtype=np.intp).ravel()
    if xb.shape != yb.shape:
        raise InputError("blocks must have equal length")
    if xb.size == 0:
        raise InputError("blocks must be nonempty")
    return float(c.matrix[xb, yb].sum())


def adapted_cost(c: CostSpec, side: str = "x") -> CostSpec:
    """Adapted pseudometric ``c_X(x, x') = max_y |c(x, y) - c(x', y)|``.

    ``side="y"`` gives ``c_Y(y, y') = max_x |c(x, y) - c(x, y')|``.
    """
    if side in ("x", "X"):
        m, alph = c.matrix, c.x_alphabet
    elif side in ("y", "Y"):
        m, alph = c.matrix.T, c.y_alphabet
    else:
        raise InputError("side must be 'x' or 'y'")
    d = np.abs(m[:, None, :] - m[None, :, :]).max(axis=2)
    return CostSpec(alph, alph, d)


class AdditiveCost:
    """Block-level oracle ``c_k(x, y) = sum_l c(x_l, y_l)``.

    Works for any block length; with ``k = 1`` it is just the letter matrix,
    which is how plain (non-block) transport instances are expressed.
    """

    additive = True

    def __init__(self, letter: CostSpec):
        self.letter = letter

    @property
    def matrix(self) -> np.ndarray:
        return self.letter.matrix

    def __call__(self, x_block, y_block) -> float:
        return k_step_cost(self.letter, x_block, y_block)

    def pairs(self, xb: np.ndarray, yb: np.ndarray) -> np.ndarray:
        """Costs of row-aligned block pairs, shapes ``(N, k)`` -> ``(N,)``."""
        m = self.letter.matrix
        out = np.zeros(xb.shape[0])
        for j in range(xb.shape[1]):
            out += m[xb[:, j], yb[:, j]]
        return out

    def dense(self, xb: np.ndarray, yb: np.ndarray) -> np.ndarray:
        """Cost matrix between all rows of ``xb`` and all rows of ``yb``."""
        m = self.letter.matrix
        out = np.zeros((xb.shape[0], yb.shape[0]))
        for j in range(xb.shape[1]):
            out += m[np.ix_(xb[:, j], yb[:, j])]
        return out

    def transpose(self) -> "AdditiveCost":
        return AdditiveCost(self.letter.transpose())


class CallableCost:
    """Wrap an arbitrary ``f(x_block, y_block) -> float`` as a block oracle."""

    additive = False

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, x_block, y_block) -> float:
        return float(self.fn(x_block, y_block))

    def pairs(self, xb, yb) -> np.ndarray:
        return np.array([self.fn(u, v) for u, v in zip(xb, yb)], dtype=float)

    def dense(self, xb, yb) -> np.ndarray:
        return np.array([[self.fn(u, v) for v in yb] for u in xb], dtype=float)

    def transpose(self) -> "CallableCost":
        fn = self.fn
        return CallableCost(lambda u, v: fn(v, u))


def as_block_cost(cost):
    """Accept a :class:`CostSpec`, block oracle or plain callable."""
    if isinstance(cost, CostSpec):
        return AdditiveCost(cost)
    if hasattr(cost, "dense") and hasattr(cost, "pairs"):
        return cost
    if callable(cost):
        return CallableCost(cost)
    raise InputError("unsupported cost specification")
