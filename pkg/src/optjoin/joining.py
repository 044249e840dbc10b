"""Stationary block processes built from a block law.

A block process with period ``p`` concatenates independent draws from a law on
``p``-blocks and starts at a uniformly random phase in ``0..p-1``.  A coupling
of two k-block measures, optionally followed by a fixed gap block of length
``g``, yields a stationary joining of the two block processes with
``p = k + g``.  All queries are computed from the period law; the infinite
process is never materialized.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .costs import CostSpec
from .errors import BudgetExceeded, InputError
from .measures import Alphabet, BlockMeasure, SymbolSequence, entropy, group_blocks
from .ot.entropic import EntropicPlan
from .ot.exact import TransportPlan

ATOM_BUDGET = 2**22


class BlockProcess:
    """Stationary process obtained by phase-randomized iid concatenation of ``law``.

    Parameters
    ----------
    law : BlockMeasure
        Law of one period; its block length is the period ``p``.
    """

    def __init__(self, law: BlockMeasure):
        self.law = law
        self.alphabet = law.alphabet
        self.period = law.k
        self._segments = lru_cache(maxsize=None)(self._segment)

    def _segment(self, lo: int, hi: int):
        if lo == 0 and hi == self.period:
            return self.law.blocks, self.law.masses
        return group_blocks(self.law.blocks[:, lo:hi], self.law.masses)

    def _window(self, start: int, m: int, budget: int):
        """Law of coordinates ``start..start+m-1`` when a period begins at 0."""
        p = self.period
        pieces = []
        pos, remaining = start, m
        while remaining > 0:
            hi = min(p, pos + remaining)
            pieces.append((pos, hi))
            remaining -= hi - pos
            pos = 0
        blocks, w = self._segments(*pieces[0])
        for lo, hi in pieces[1:]:
            sb, sw = self._segments(lo, hi)
            if blocks.shape[0] * sb.shape[0] > budget:
                raise BudgetExceeded(f"marginal of order {m} exceeds atom budget {budget}")
            blocks = np.hstack([np.repeat(blocks, sb.shape[0], axis=0), np.tile(sb, (blocks.shape[0], 1))])
            w = np.outer(w, sw).ravel()
        return blocks, w

    def finite_marginal(self, m: int, budget: int = ATOM_BUDGET) -> BlockMeasure:
        """Exact law of ``m`` consecutive coordinates (average over the ``p`` phases)."""
        if m < 1:
            raise InputError("m must be at least 1")
        parts_b, parts_w = [], []
        total = 0
        for s in range(self.period):
            b, w = self._window(s, m, budget)
            total += b.shape[0]
            if total > budget * 4:
                raise BudgetExceeded(f"marginal of order {m} exceeds atom budget {budget}")
            parts_b.append(b)
            parts_w.append(w)
        blocks, w = group_blocks(np.concatenate(parts_b), np.concatenate(parts_w) / self.period)
        keep = w > 0
        return BlockMeasure(self.alphabet, blocks[keep], w[keep], validate=False)

    def entropy_rate(self) -> float:
        """``H(law) / p`` in nats per symbol."""
        return entropy(self.law) / self.period

    def sample(self, length: int, rng_seed) -> np.ndarray:
        """Symbol ids of a trajectory; deterministic in ``rng_seed``."""
        if length < 1:
            raise InputError("length must be at least 1")
        rng = np.random.default_rng(rng_seed)
        p = self.period
        s = int(rng.integers(p))
        nblocks = -(-(s + length) // p)
        cdf = np.cumsum(self.law.masses)
        idx = np.searchsorted(cdf, rng.random(nblocks) * cdf[-1], side="right")
        idx = np.minimum(idx, self.law.support_size - 1)
        return self.law.blocks[idx].ravel()[s:s + length]


def block_process(measure: BlockMeasure, gap_block=None) -> BlockProcess:
    """Block process of ``measure``, optionally followed by a fixed gap block each period."""
    if gap_block is None or len(gap_block) == 0:
        return BlockProcess(measure)
    gap = np.asarray(gap_block, dtype=measure.alphabet.dtype)
    if gap.min() < 0 or gap.max() >= measure.alphabet.size:
        raise InputError("gap block has ids outside the alphabet")
    blocks = np.hstack([measure.blocks, np.tile(gap, (measure.support_size, 1))])
    return BlockProcess(BlockMeasure(measure.alphabet, blocks, measure.masses, validate=False))


def product_measure(first: BlockMeasure, second: BlockMeasure, budget: int = ATOM_BUDGET) -> BlockMeasure:
    """Independent concatenation: law of ``(U, V)`` with ``U ~ first``, ``V ~ second``."""
    if first.alphabet != second.alphabet:
        raise InputError("product of measures on different alphabets")
    m1, m2 = first.support_size, second.support_size
    if m1 * m2 > budget:
        raise BudgetExceeded(f"product measure has {m1 * m2} atoms, budget {budget}")
    blocks = np.hstack([np.repeat(first.blocks, m2, axis=0), np.tile(second.blocks, (m1, 1))])
    return BlockMeasure(first.alphabet, blocks, np.outer(first.masses, second.masses).ravel(),
                        validate=False)


def gap_block_process(block_law: BlockMeasure, gap_law: BlockMeasure) -> BlockProcess:
    """Process alternating k-blocks from ``block_law`` with independent gap blocks from ``gap_law``."""
    return BlockProcess(product_measure(block_law, gap_law))


@dataclass(frozen=True)
class GapSpec:
    """Fixed gap block pair of length ``g`` appended after each k-block."""

    g: int
    x_block: tuple
    y_block: tuple

    def __post_init__(self):
        if self.g < 1 or len(self.x_block) != self.g or len(self.y_block) != self.g:
            raise InputError("gap blocks must both have length g >= 1")


class BlockJoining:
    """Stationary joining induced by a coupling of k-block measures.

    Parameters
    ----------
    block_law : TransportPlan or EntropicPlan
        Coupling of the two k-block measures.
    gap : GapSpec, optional
    eta : float
        Regularization used to obtain ``block_law`` (0 for exact plans).
    """

    def __init__(self, block_law, gap: GapSpec | None = None, eta: float = 0.0):
        plan = block_law.plan if isinstance(block_law, EntropicPlan) else block_law
        if plan is None:
            raise InputError("joining requires a materialized plan")
        if isinstance(block_law, EntropicPlan):
            eta = block_law.eta
        self.block_law = block_law
        self.plan = plan
        self.x_alphabet = plan.row_measure.alphabet
        self.y_alphabet = plan.col_measure.alphabet
        if plan.row_measure.k != plan.col_measure.k:
            raise InputError("coupled blocks must have equal length")
        self.k = plan.row_measure.k
        self.gap = gap
        self.g = 0 if gap is None else gap.g
        self.eta = float(eta)
        self.pair_alphabet = Alphabet.pairs(self.x_alphabet, self.y_alphabet)
        ny = self.y_alphabet.size
        pairs = plan.row_blocks().astype(np.int64) * ny + plan.col_blocks()
        if gap is not None:
            gx = np.asarray(gap.x_block, dtype=np.int64)
            gy = np.asarray(gap.y_block, dtype=np.int64)
            if gx.max() >= self.x_alphabet.size or gy.max() >= ny or min(gx.min(), gy.min()) < 0:
                raise InputError("gap block has ids outside the alphabets")
            pairs = np.hstack([pairs, np.tile(gx * ny + gy, (pairs.shape[0], 1))])
        keep = plan.masses > 0
        blocks, w = group_blocks(pairs[keep].astype(self.pair_alphabet.dtype), plan.masses[keep])
        self.process = BlockProcess(BlockMeasure(self.pair_alphabet, blocks, w, validate=False))

    @property
    def period(self) -> int:
        return self.k + self.g

    def _split(self, blocks: np.ndarray):
        ny = self.y_alphabet.size
        b = blocks.astype(np.int64)
        return b // ny, b % ny

    def finite_marginal(self, m: int, budget: int = ATOM_BUDGET) -> BlockMeasure:
        """Law of ``m`` consecutive symbol pairs, over the pair alphabet."""
        return self.process.finite_marginal(m, budget)

    def side_marginal(self, m: int, side: str = "x", budget: int = ATOM_BUDGET) -> BlockMeasure:
        """Projection of :meth:`finite_marginal` onto one coordinate process."""
        lam = self.finite_marginal(m, budget)
        xs, ys = self._split(lam.blocks)
        if side == "x":
            return BlockMeasure.from_blocks(self.x_alphabet, xs, lam.masses)
        if side == "y":
            return BlockMeasure.from_blocks(self.y_alphabet, ys, lam.masses)
        raise InputError("side must be 'x' or 'y'")

    def expected_cost(self, c: CostSpec) -> float:
        """``sum c(x, y) lambda_1(x, y)`` from the one-dimensional marginal."""
        lam = self.finite_marginal(1)
        xs, ys = self._split(lam.blocks[:, 0])
        return float(lam.masses @ c.matrix[xs, ys])

    def block_entropy_rate(self) -> float:
        """Entropy rate of the joining, ``H(block law) / (k + g)``."""
        return self.process.entropy_rate()

    def sample_trajectory(self, length: int, rng_seed) -> tuple[SymbolSequence, SymbolSequence]:
        ids = self.process.sample(length, rng_seed)
        xs, ys = self._split(ids)
        return SymbolSequence(self.x_alphabet, xs), SymbolSequence(self.y_alphabet, ys)

    def __eq__(self, other):
        return (
            isinstance(other, BlockJoining)
            and self.k == other.k
            and self.gap == other.gap
            and self.x_alphabet == other.x_alphabet
            and self.y_alphabet == other.y_alphabet
            and self.process.law == other.process.law
        )

    __hash__ = None

    def to_json(self) -> dict:
        gap = None
        if self.gap is not None:
            gap = {"x": self.x_alphabet.decode(self.gap.x_block),
                   "y": self.y_alphabet.decode(self.gap.y_block)}
        return {"k": self.k, "g": self.g, "eta": self.eta, "plan": self.plan.to_json(), "gap_block": gap}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, obj: dict) -> "BlockJoining":
        try:
            plan_obj = obj["plan"]
            xa = Alphabet(plan_obj["x_tokens"])
            ya = Alphabet(plan_obj["y_tokens"])
            rows = plan_obj["rows"]
            xb = np.array([xa.encode(r["x_block"]) for r in rows], dtype=xa.dtype)
            yb = np.array([ya.encode(r["y_block"]) for r in rows], dtype=ya.dtype)
            mass = np.array([r["mass"] for r in rows], dtype=float)
            k = int(obj["k"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed joining JSON: {exc}") from None
        if xb.shape[1] != k or yb.shape[1] != k:
            raise InputError("block lengths in joining JSON do not match k")
        rm = BlockMeasure.from_blocks(xa, xb, mass, normalize=True)
        cm = BlockMeasure.from_blocks(ya, yb, mass, normalize=True)
        ri = np.array([rm.index_of(b) for b in xb], dtype=np.intp)
        ci = np.array([cm.index_of(b) for b in yb], dtype=np.intp)
        f = g = None
        duals = plan_obj.get("duals")
        if duals:
            f = np.zeros(rm.support_size)
            g = np.zeros(cm.support_size)
            for d in duals["f"]:
                f[rm.index_of(xa.encode(d["x_block"]))] = d["value"]
            for d in duals["g"]:
                g[cm.index_of(ya.encode(d["y_block"]))] = d["value"]
        plan = TransportPlan(rm, cm, ri, ci, mass, float(plan_obj.get("cost_value", float("nan"))), f, g)
        gap = None
        if obj.get("gap_block"):
            gb = obj["gap_block"]
            gap = GapSpec(int(obj["g"]), tuple(int(v) for v in xa.encode(gb["x"])),
                          tuple(int(v) for v in ya.encode(gb["y"])))
        return cls(plan, gap, float(obj.get("eta", 0.0)))


def build_block_joining(plan, gap: GapSpec | None = None) -> BlockJoining:
    """Wrap a (regularized) coupling as the stationary joining it induces."""
    return BlockJoining(plan, gap)
