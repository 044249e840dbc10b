"""Exact optimal transport between block measures.

Two network formulations feed the same simplex kernel:

* bipartite: one arc per pair of atoms, for arbitrary block costs;
* layered: for additive costs ``c_k``, a k-level network whose node at level
  ``j`` is (first ``j`` symbols of a target block, last ``k - j`` symbols of a
  source block).  Each source/target pair is joined by exactly one path, of
  cost ``c_k(x, y)``, and the arc count grows like ``k (|P| + |S|)`` instead of
  ``m * m'``.  This is what makes k = 12 full-support laws tractable.

Empirical measures carry integer counts; supplies are then scaled to a common
integer denominator so the simplex runs on exact integers in float64.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..costs import AdditiveCost, as_block_cost
from ..errors import BudgetExceeded, InputError, SolverError
from ..measures import BlockMeasure
from ._netsimplex import OPTIMAL, network_simplex

DEFAULT_BUDGET = 20_000 * 20_000
_EXACT_INT_LIMIT = 2**50


@dataclass(eq=False)
class TransportPlan:
    """Sparse coupling of two block measures.

    Attributes
    ----------
    row_measure, col_measure : BlockMeasure
    rows, cols : ndarray of int
        Atom indices into ``row_measure.blocks`` / ``col_measure.blocks``.
    masses : ndarray
        Mass of each entry, strictly positive.
    cost_value : float
        ``sum(masses * cost(rows, cols))``.
    dual_row, dual_col : ndarray or None
        Kantorovich potentials aligned with the atoms of each marginal.
    """

    row_measure: BlockMeasure
    col_measure: BlockMeasure
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    cost_value: float
    dual_row: np.ndarray | None = None
    dual_col: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_entries(self) -> int:
        return int(self.masses.shape[0])

    def row_blocks(self) -> np.ndarray:
        return self.row_measure.blocks[self.rows]

    def col_blocks(self) -> np.ndarray:
        return self.col_measure.blocks[self.cols]

    def entries(self) -> dict:
        """``{(x_block_tuple, y_block_tuple): mass}``."""
        rb, cb = self.row_blocks(), self.col_blocks()
        return {
            (tuple(int(v) for v in rb[i]), tuple(int(v) for v in cb[i])): float(self.masses[i])
            for i in range(self.n_entries)
        }

    def dense(self) -> np.ndarray:
        """Plan as an ``(m, m')`` matrix over the marginals' atom orders."""
        out = np.zeros((self.row_measure.support_size, self.col_measure.support_size))
        np.add.at(out, (self.rows, self.cols), self.masses)
        return out

    def marginal_errors(self) -> tuple[float, float]:
        """Largest per-atom deviation of the row and column sums."""
        r = np.bincount(self.rows, self.masses, minlength=self.row_measure.support_size)
        c = np.bincount(self.cols, self.masses, minlength=self.col_measure.support_size)
        return (float(np.abs(r - self.row_measure.masses).max()),
                float(np.abs(c - self.col_measure.masses).max()))

    def recompute_cost(self, cost) -> float:
        cost = as_block_cost(cost)
        return float(self.masses @ cost.pairs(self.row_blocks(), self.col_blocks()))

    def to_json(self) -> dict:
        ra, ca = self.row_measure.alphabet, self.col_measure.alphabet
        rb, cb = self.row_blocks(), self.col_blocks()
        out = {
            "x_tokens": list(ra.tokens),
            "y_tokens": list(ca.tokens),
            "rows": [
                {"x_block": ra.decode(rb[i]), "y_block": ca.decode(cb[i]), "mass": float(self.masses[i])}
                for i in range(self.n_entries)
            ],
            "cost_value": float(self.cost_value),
        }
        if self.dual_row is not None:
            out["duals"] = {
                "f": [{"x_block": ra.decode(b), "value": float(v)}
                      for b, v in zip(self.row_measure.blocks, self.dual_row)],
                "g": [{"y_block": ca.decode(b), "value": float(v)}
                      for b, v in zip(self.col_measure.blocks, self.dual_col)],
            }
        return out


def _check_budget(m: int, mp: int, budget: int) -> None:
    if m * mp > budget:
        raise BudgetExceeded(f"support product {m}x{mp} exceeds budget {budget}")


def _integer_supplies(a: BlockMeasure, b: BlockMeasure):
    """Common-denominator integer supplies, or ``None`` when unavailable."""
    if a.counts is None or b.counts is None:
        return None
    L = math.lcm(a.denominator, b.denominator)
    if L > _EXACT_INT_LIMIT:
        return None
    sa = a.counts * (L // a.denominator)
    sb = b.counts * (L // b.denominator)
    return sa.astype(float), sb.astype(float), float(L)


def _supplies(a, b):
    ints = _integer_supplies(a, b)
    if ints is not None:
        return ints
    return np.asarray(a.masses, float), np.asarray(b.masses, float), 1.0


def _run_simplex(n_nodes, src, dst, cost, supply, scale):
    maxc = float(np.abs(cost).max()) if cost.size else 0.0
    eps = 1e-12 * max(1.0, maxc)
    feas = 1e-9 * max(1.0, scale)
    max_piv = 50 * (n_nodes + src.shape[0]) + 10_000
    flow, pi, status, pivots = network_simplex(
        n_nodes, src.astype(np.int64), dst.astype(np.int64), cost.astype(float),
        supply.astype(float), eps, feas, max_piv)
    if status != OPTIMAL:
        raise SolverError(f"network simplex failed with status {status}")
    return flow, pi, pivots


# ---------------------------------------------------------------------------
# bipartite formulation


def _solve_bipartite(a, b, cost):
    m, mp = a.support_size, b.support_size
    C = cost.dense(a.blocks, b.blocks)
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise InputError("cost must be finite and nonnegative on the supports")
    sa, sb, L = _supplies(a, b)
    src = np.repeat(np.arange(m), mp)
    dst = m + np.tile(np.arange(mp), m)
    flow, pi, pivots = _run_simplex(m + mp, src, dst, C.ravel(), np.r_[sa, -sb], L)
    pos = np.flatnonzero(flow > 0)
    rows, cols = src[pos], dst[pos] - m
    value = float(flow[pos] @ C.ravel()[pos]) / L
    f, g = -pi[:m], pi[m:]
    return rows, cols, flow[pos] / L, value, f, g, {"network": "bipartite", "pivots": int(pivots)}


# ---------------------------------------------------------------------------
# layered formulation for additive costs


def _unique_rows(arr):
    """Unique rows (lexicographic) and inverse indices; width 0 gives one row."""
    if arr.shape[1] == 0:
        return arr[:1], np.zeros(arr.shape[0], dtype=np.intp)
    keys = np.ascontiguousarray(arr).view(np.dtype((np.void, arr.dtype.itemsize * arr.shape[1]))).ravel()
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    return arr[first], inv.ravel()


def layered_network(A: np.ndarray, B: np.ndarray, letter: np.ndarray):
    """Build the layered network for ``c_k`` between row sets ``A`` and ``B``.

    Returns ``(n_nodes, src, dst, cost, src_offset, sink_offset)``; level-0
    node ``i`` is ``A[i]`` and level-k node ``j`` is ``sink_offset + j``.
    """
    k = A.shape[1]
    pinv, sinv, psym, sfirst = [], [], [], []
    for j in range(k + 1):
        P, pi_ = _unique_rows(B[:, :j])
        S, si_ = _unique_rows(A[:, j:])
        pinv.append(pi_)
        sinv.append(si_)
        psym.append(P[:, j - 1].astype(np.intp) if j > 0 else None)
        sfirst.append(S[:, 0].astype(np.intp) if j < k else None)
    sizes_p = [int(x.max()) + 1 for x in pinv]
    sizes_s = [int(x.max()) + 1 for x in sinv]
    offsets = np.zeros(k + 2, dtype=np.int64)
    for j in range(k + 1):
        offsets[j + 1] = offsets[j] + sizes_p[j] * sizes_s[j]
    srcs, dsts, costs = [], [], []
    for j in range(1, k + 1):
        parent = np.empty(sizes_p[j], dtype=np.int64)
        parent[pinv[j]] = pinv[j - 1]
        tail = np.empty(sizes_s[j - 1], dtype=np.int64)
        tail[sinv[j - 1]] = sinv[j]
        ns_prev, ns = sizes_s[j - 1], sizes_s[j]
        p = np.arange(sizes_p[j])[:, None]
        sp = np.arange(ns_prev)[None, :]
        srcs.append((offsets[j - 1] + parent[p] * ns_prev + sp).ravel())
        dsts.append((offsets[j] + p * ns + tail[sp]).ravel())
        costs.append(letter[sfirst[j - 1][sp], psym[j][p]].ravel())
    return (int(offsets[-1]), np.concatenate(srcs), np.concatenate(dsts),
            np.concatenate(costs), 0, int(offsets[k]))


def layered_arc_count(A: np.ndarray, B: np.ndarray) -> int:
    k = A.shape[1]
    total = 0
    for j in range(1, k + 1):
        total += _unique_rows(B[:, :j])[0].shape[0] * _unique_rows(A[:, j - 1:])[0].shape[0]
    return total


@njit(cache=True)
def _split_level(seg_node, seg_src, seg_mass, arc_node, arc_dst, arc_flow, tol):
    """Route segments (grouped by node) along positive-flow arcs (grouped by node)."""
    ns = seg_node.shape[0]
    na = arc_node.shape[0]
    cap = ns + na
    out_node = np.empty(cap, np.int64)
    out_src = np.empty(cap, np.int64)
    out_mass = np.empty(cap)
    rem_arc = arc_flow.copy()
    n_out = 0
    i = 0
    j = 0
    while i < ns:
        node = seg_node[i]
        while j < na and arc_node[j] < node:
            j += 1
        rem = seg_mass[i]
        while rem > tol and j < na and arc_node[j] == node:
            take = min(rem, rem_arc[j])
            if take > 0:
                out_node[n_out] = arc_dst[j]
                out_src[n_out] = seg_src[i]
                out_mass[n_out] = take
                n_out += 1
            rem -= take
            rem_arc[j] -= take
            if rem_arc[j] <= tol:
                j += 1
        i += 1
    return out_node[:n_out], out_src[:n_out], out_mass[:n_out]


def _decompose(flow, src, dst, n_sources, sink_offset, supply_a, tol):
    """Path decomposition of a layered flow into (source, sink, mass) triples."""
    pos = np.flatnonzero(flow > tol)
    order = np.lexsort((pos, src[pos]))
    pos = pos[order]
    a_node, a_dst, a_flow = src[pos], dst[pos], flow[pos]
    seg_node = np.arange(n_sources, dtype=np.int64)
    seg_src = np.arange(n_sources, dtype=np.int64)
    seg_mass = np.asarray(supply_a, dtype=float).copy()
    while True:
        if seg_node.size and seg_node.min() >= sink_offset:
            break
        seg_node, seg_src, seg_mass = _split_level(seg_node, seg_src, seg_mass,
                                                   a_node, a_dst, a_flow, tol)
        o = np.lexsort((seg_src, seg_node))
        seg_node, seg_src, seg_mass = seg_node[o], seg_src[o], seg_mass[o]
        if seg_node.size > 1:
            new = np.r_[True, (np.diff(seg_node) != 0) | (np.diff(seg_src) != 0)]
            starts = np.flatnonzero(new)
            seg_mass = np.add.reduceat(seg_mass, starts)
            seg_node, seg_src = seg_node[starts], seg_src[starts]
    return seg_src, seg_node - sink_offset, seg_mass


def _solve_layered(a, b, cost: AdditiveCost):
    letter = np.asarray(cost.matrix, dtype=float)
    A = a.blocks.astype(np.intp)
    B = b.blocks.astype(np.intp)
    n_nodes, src, dst, arc_cost, _, sink_off = layered_network(A, B, letter)
    m, mp = a.support_size, b.support_size
    sa, sb, L = _supplies(a, b)
    supply = np.zeros(n_nodes)
    supply[:m] = sa
    supply[sink_off:sink_off + mp] = -sb
    flow, pi, pivots = _run_simplex(n_nodes, src, dst, arc_cost, supply, L)
    tol = 0.5 if L > 1 else 1e-15
    rows, cols, mass = _decompose(flow, src, dst, m, sink_off, sa, tol)
    o = np.lexsort((cols, rows))
    rows, cols, mass = rows[o], cols[o], mass[o]
    pc = cost.pairs(A[rows], B[cols])
    value = float(mass @ pc) / L
    f, g = -pi[:m], pi[sink_off:sink_off + mp]
    info = {"network": "layered", "nodes": n_nodes, "arcs": int(src.shape[0]), "pivots": int(pivots)}
    return rows, cols, mass / L, value, f, g, info


def _product_plan(a, b, cost):
    m, mp = a.support_size, b.support_size
    rows = np.repeat(np.arange(m), mp)
    cols = np.tile(np.arange(mp), m)
    masses = a.masses[rows] * b.masses[cols]
    C = cost.dense(a.blocks, b.blocks)
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise InputError("cost must be finite and nonnegative on the supports")
    value = float(masses @ C.ravel())
    if m == 1:
        f, g = np.zeros(1), C[0].copy()
    else:
        f, g = C[:, 0].copy(), np.zeros(1)
    return rows, cols, masses, value, f, g, {"network": "product"}


def solve_ot(a: BlockMeasure, b: BlockMeasure, cost, *, budget: int = DEFAULT_BUDGET,
             method: str = "auto") -> TransportPlan:
    """Exact optimal coupling of ``a`` and ``b``.

    Parameters
    ----------
    a, b : BlockMeasure
    cost : CostSpec, block oracle or callable
        A :class:`CostSpec` is read as the additive block cost ``c_k``.
    budget : int
        Maximum allowed ``|supp a| * |supp b|``.
    method : {"auto", "bipartite", "layered"}

    Returns
    -------
    TransportPlan
        Optimal plan with dual potentials; entries are ordered by (row, col).
    """
    cost = as_block_cost(cost)
    m, mp = a.support_size, b.support_size
    _check_budget(m, mp, budget)
    if m == 1 or mp == 1:
        res = _product_plan(a, b, cost)
    else:
        use_layered = False
        if method == "layered" or method == "auto":
            ok = getattr(cost, "additive", False) and a.k == b.k
            if method == "layered" and not ok:
                raise InputError("layered network requires an additive cost and equal block lengths")
            use_layered = ok and (method == "layered" or (a.k > 1 and layered_arc_count(a.blocks, b.blocks) < m * mp))
        elif method != "bipartite":
            raise InputError(f"unknown method {method!r}")
        res = _solve_layered(a, b, cost) if use_layered else _solve_bipartite(a, b, cost)
    rows, cols, masses, value, f, g, info = res
    # pin the additive constant of the potentials
    shift = f[0]
    f = f - shift
    g = g + shift
    return TransportPlan(a, b, rows.astype(np.intp), cols.astype(np.intp), masses, value, f, g, info)


def ot_cost(a: BlockMeasure, b: BlockMeasure, cost, **kw) -> float:
    """Optimal transport cost ``T_c(a, b)``."""
    return solve_ot(a, b, cost, **kw).cost_value


def dual_gap(plan: TransportPlan) -> float:
    """Primal value minus the dual value of the plan's potentials."""
    if plan.dual_row is None or plan.dual_col is None:
        raise InputError("plan carries no dual potentials")
    dual = float(plan.dual_row @ plan.row_measure.masses + plan.dual_col @ plan.col_measure.masses)
    return float(plan.cost_value - dual)


def dual_feasibility_violation(plan: TransportPlan, cost) -> float:
    """Largest ``f(u) + g(v) - c(u, v)`` over all support pairs (dense check)."""
    cost = as_block_cost(cost)
    C = cost.dense(plan.row_measure.blocks, plan.col_measure.blocks)
    return float((plan.dual_row[:, None] + plan.dual_col[None, :] - C).max())


@dataclass
class CycleReport:
    """Result of a cyclical-monotonicity check."""

    violations: list
    cycles_checked: int
    exhaustive: bool

    @property
    def ok(self) -> bool:
        return not self.violations


def check_cyclical_monotonicity(plan: TransportPlan, cost, max_cycle: int = 4, trials: int = 1000,
                                rng_seed: int = 0, tol: float = 1e-9) -> CycleReport:
    """Look for cycles of support points whose cyclic reassignment lowers cost.

    Supports with at most 8 points are enumerated exhaustively (all cycles of
    length 2..max_cycle up to rotation); larger supports are sampled.  Each
    violation is reported as ``(entry_indices, excess)``.
    """
    if max_cycle < 2:
        raise InputError("max_cycle must be at least 2")
    npts = plan.n_entries
    if npts == 0:
        raise InputError("plan has no entries")
    cost = as_block_cost(cost)
    C = cost.dense(plan.row_blocks(), plan.col_blocks())
    diag = np.diag(C)
    violations = []
    checked = 0

    def check(cyc):
        nonlocal checked
        checked += 1
        cyc = list(cyc)
        nxt = cyc[1:] + cyc[:1]
        excess = diag[cyc].sum() - C[cyc, nxt].sum()
        if excess > tol:
            violations.append((tuple(int(i) for i in cyc), float(excess)))

    exhaustive = npts <= 8
    if exhaustive:
        for length in range(2, min(max_cycle, npts) + 1):
            for first in range(npts):
                rest = [i for i in range(first + 1, npts)]
                for tail in itertools.permutations(rest, length - 1):
                    check((first,) + tail)
    else:
        rng = np.random.default_rng(rng_seed)
        for _ in range(trials):
            length = int(rng.integers(2, min(max_cycle, npts) + 1))
            check(rng.choice(npts, size=length, replace=False))
    return CycleReport(violations, checked, exhaustive)
