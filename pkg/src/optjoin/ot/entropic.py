"""Entropy-regularized transport by log-domain Sinkhorn iterations.

With potentials ``f, g`` the plan is ``exp((f(u) + g(v) - c(u, v)) / eta)`` and,
once its marginals are exact, ``sum c dpi - eta H(pi) = <f, a> + <g, b>``.

Two back ends share the update rule:

* dense, over ``supp(a) x supp(b)``, returning an explicit plan;
* grid, for additive costs ``c_k``: both measures are embedded in the full
  product grid and the soft-min over ``Y^k`` is applied one coordinate at a
  time.  This never forms the ``|X|^k x |Y|^k`` kernel and is used for exact
  block laws, where supports are large but the alphabet is tiny.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import entr

from ..costs import as_block_cost
from ..errors import BudgetExceeded, InputError
from ..measures import BlockMeasure
from .exact import DEFAULT_BUDGET, TransportPlan

GRID_BUDGET = 2**24
NEWTON_AFTER = 200
NEWTON_MAX_COLS = 2048
GRID_PATIENCE = 400


def logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    """Stable ``log(sum(exp(x)))`` along ``axis``; all ``-inf`` slices give ``-inf``."""
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - mx), axis=axis, keepdims=True)) + mx
    return np.squeeze(out, axis=axis)


@dataclass(eq=False)
class EntropicPlan:
    """Result of :func:`solve_entropic_ot`.

    ``plan`` is ``None`` when the grid back end was used (the dense plan is
    never formed); ``regularized_value`` is then the dual value.
    """

    row_measure: BlockMeasure
    col_measure: BlockMeasure
    eta: float
    regularized_value: float
    cost_value: float
    entropy: float
    f: np.ndarray
    g: np.ndarray
    iterations: int
    marginal_violation: float
    converged: bool
    plan: TransportPlan | None = None
    info: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iter"

    def to_json(self) -> dict:
        out = self.plan.to_json() if self.plan is not None else {}
        ra, ca = self.row_measure.alphabet, self.col_measure.alphabet
        out.update({
            "eta": float(self.eta),
            "regularized_value": float(self.regularized_value),
            "cost_value": float(self.cost_value),
            "iterations": int(self.iterations),
            "marginal_violation": float(self.marginal_violation),
            "status": self.status,
            "potentials": {
                "f": [{"x_block": ra.decode(b), "value": float(v)}
                      for b, v in zip(self.row_measure.blocks, self.f)],
                "g": [{"y_block": ca.decode(b), "value": float(v)}
                      for b, v in zip(self.col_measure.blocks, self.g)],
            },
        })
        return out


def c_eta_transform(g, cost_matrix, eta: float) -> np.ndarray:
    """Soft (c, eta)-transform ``-eta log sum_v exp((g(v) - c(u, v)) / eta)``.

    Parameters
    ----------
    g : array_like, shape (m',)
    cost_matrix : array_like, shape (m, m')
        ``c(u, v)`` for every row point ``u`` and column point ``v``.
    eta : float
    """
    if eta <= 0:
        raise InputError("eta must be positive")
    g = np.asarray(g, dtype=float)
    C = np.asarray(cost_matrix, dtype=float)
    return -eta * logsumexp((g[None, :] - C) / eta, axis=1)


def semidual_value(a: BlockMeasure, b: BlockMeasure, g, cost, eta: float) -> float:
    """Semidual objective ``sum (eta log a + g~) a + sum g b`` at column potential ``g``."""
    if eta <= 0:
        raise InputError("eta must be positive")
    cost = as_block_cost(cost)
    C = cost.dense(a.blocks, b.blocks)
    gt = c_eta_transform(g, C, eta)
    ga = eta * np.log(a.masses) + gt
    return float(ga @ a.masses + np.asarray(g, float) @ b.masses)


def _round_to_coupling(P, a, b):
    """Scale rows and columns down, then add a rank-one correction (stays positive)."""
    x = np.minimum(a / P.sum(axis=1), 1.0)
    P = P * x[:, None]
    y = np.minimum(b / P.sum(axis=0), 1.0)
    P = P * y[None, :]
    er = a - P.sum(axis=1)
    ec = b - P.sum(axis=0)
    s = er.sum()
    if s > 0:
        P = P + np.outer(np.maximum(er, 0), np.maximum(ec, 0)) / s
    return P


def _sinkhorn_stage(K, la, lb, eta, tol, max_iter, g):
    r = logsumexp(K + g[None, :] / eta, axis=1)
    f = eta * (la - r)
    viol = np.inf
    it = 0
    while it < max_iter:
        it += 1
        f = eta * (la - r)
        g = eta * (lb - logsumexp(K + f[:, None] / eta, axis=0))
        r = logsumexp(K + g[None, :] / eta, axis=1)
        viol = float(np.abs(np.exp(f / eta + r) - np.exp(la)).sum())
        if viol <= tol:
            break
    return f, g, it, viol


def _newton_polish(K, la, lb, eta, tol, max_iter, g):
    """Newton ascent on the semidual in ``g``; rows are kept exact throughout.

    Sinkhorn slows to a crawl when the kernel is close to a permutation (near
    identical marginals, small eta); the semidual stays smooth there, so a
    few Newton steps finish the job.
    """
    a, b = np.exp(la), np.exp(lb)
    ridge = 1e-13 / eta

    def evaluate(h):
        S = K + h[None, :] / eta
        lse = logsumexp(S, axis=1)
        pi = np.exp(S - lse[:, None])
        col = a @ pi
        return float(h @ b + a @ (eta * (la - lse))), pi, b - col

    F, pi, grad = evaluate(g)
    it = 0
    while it < max_iter and np.abs(grad).sum() > tol / 2:
        it += 1
        P = a[:, None] * pi
        H = (np.diag(P.sum(axis=0)) - P.T @ pi) / eta
        H[np.diag_indices_from(H)] += ridge
        try:
            d = scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, ValueError):
            d = np.linalg.lstsq(H, grad, rcond=None)[0]
        d -= d.mean()
        slope = float(grad @ d)
        t = 1.0
        while True:
            F2, pi2, grad2 = evaluate(g + t * d)
            if F2 >= F + 1e-4 * t * slope or np.abs(grad2).sum() < np.abs(grad).sum() or t < 1e-12:
                break
            t /= 2
        if t < 1e-12:
            break
        g = g + t * d
        F, pi, grad = F2, pi2, grad2
    return g, it


def _solve_stage(K, la, lb, eta, tol, max_iter, g):
    """Sinkhorn sweeps, switching to Newton if ``NEWTON_AFTER`` sweeps do not suffice."""
    total = 0
    if K.shape[1] <= NEWTON_MAX_COLS and max_iter > NEWTON_AFTER + 1:
        f, g, total, viol = _sinkhorn_stage(K, la, lb, eta, tol, NEWTON_AFTER, g)
        if viol <= tol:
            return f, g, total, viol
        g, it = _newton_polish(K, la, lb, eta, tol, max_iter - total - 1, g)
        total += it
    f, g, it, viol = _sinkhorn_stage(K, la, lb, eta, tol, max_iter - total, g)
    return f, g, total + it, viol


def _sinkhorn_dense(C, a, b, eta, tol, max_iter, g0):
    """Sinkhorn with eta-scaling: coarse stages at larger eta warm-start the final one."""
    la, lb = np.log(a), np.log(b)
    g = np.zeros(C.shape[1]) if g0 is None else np.asarray(g0, float).copy()
    stages = []
    if g0 is None:
        e = float(C.max()) / 4
        while e > 4 * eta:
            stages.append(e)
            e /= 4
    total = 0
    for e in stages:
        if max_iter - total <= 1:
            break
        _, g, it, _ = _solve_stage(-C / e, la, lb, e, max(tol, 1e-6), max_iter - total - 1, g)
        total += it
    f, g, it, viol = _solve_stage(-C / eta, la, lb, eta, tol, max_iter - total, g)
    return f, g, total + it, viol


def _grid_codes(m: BlockMeasure, size: int) -> np.ndarray:
    codes = np.zeros(m.support_size, dtype=np.int64)
    for j in range(m.k):
        codes = codes * size + m.blocks[:, j]
    return codes


class _GridTransform:
    """Soft-min of an additive cost applied one coordinate at a time."""

    def __init__(self, letter: np.ndarray, k: int, eta: float):
        self.k = k
        self.eta = eta
        self.nx, self.ny = letter.shape
        self.K = -letter / eta

    def to_rows(self, h: np.ndarray) -> np.ndarray:
        """``out[x] = LSE_y (h[y] + sum_l K[x_l, y_l])`` for ``h`` over ``Y^k``."""
        T = h.reshape((self.ny,) * self.k)
        for ax in range(self.k):
            T = np.moveaxis(T, ax, -1)
            T = logsumexp(T[..., None, :] + self.K, axis=-1)
            T = np.moveaxis(T, -1, ax)
        return T.reshape(-1)

    def to_cols(self, h: np.ndarray) -> np.ndarray:
        T = h.reshape((self.nx,) * self.k)
        for ax in range(self.k):
            T = np.moveaxis(T, ax, -1)
            T = logsumexp(T[..., None, :] + self.K.T, axis=-1)
            T = np.moveaxis(T, -1, ax)
        return T.reshape(-1)


def _sinkhorn_grid(letter, a, b, eta, tol, max_iter, g0, patience=None):
    """Grid Sinkhorn.  With ``patience`` set, give up at that sweep if the observed
    linear rate projects more than ``4 * patience`` further sweeps."""
    nx, ny = letter.shape
    k = a.k
    ca, cb = _grid_codes(a, nx), _grid_codes(b, ny)
    la = np.full(nx**k, -np.inf)
    la[ca] = np.log(a.masses)
    lb = np.full(ny**k, -np.inf)
    lb[cb] = np.log(b.masses)
    tr = _GridTransform(np.asarray(letter, float), k, eta)
    g = np.where(np.isfinite(lb), 0.0, -np.inf)
    if g0 is not None:
        g[cb] = g0
    viol = np.inf
    it = 0
    while it < max_iter:
        it += 1
        f = eta * (la - tr.to_rows(g / eta))
        g = eta * (lb - tr.to_cols(f / eta))
        rows = np.exp(f[ca] / eta + tr.to_rows(g / eta)[ca])
        viol = float(np.abs(rows - a.masses).sum())
        if viol <= tol:
            break
        if patience is not None:
            if it == patience // 2:
                half = viol
            elif it == patience:
                rate = (viol / half) ** (2 / patience) if 0 < viol < half else 1.0
                if rate >= 1.0 or np.log(tol / viol) / np.log(rate) > 4 * patience:
                    break
    return f[ca], g[cb], it, viol


def _use_grid(a, b, cost) -> bool:
    if not getattr(cost, "additive", False) or a.k != b.k or a.k < 2:
        return False
    nx, ny = cost.matrix.shape
    grid = max(nx, ny) ** a.k
    if grid > GRID_BUDGET:
        return False
    return a.support_size * b.support_size > 4 * a.k * max(nx, ny) * grid


def solve_entropic_ot(a: BlockMeasure, b: BlockMeasure, cost, eta: float, tol: float = 1e-9,
                      max_iter: int = 100_000, init_g=None, *, budget: int = DEFAULT_BUDGET,
                      method: str = "auto") -> EntropicPlan:
    """Entropic optimal transport ``min <c, pi> - eta H(pi)`` over couplings of ``a`` and ``b``.

    Parameters
    ----------
    a, b : BlockMeasure
    cost : CostSpec or block oracle
    eta : float
        Regularization strength, must be positive.
    tol : float
        Stop once the L1 row-marginal error is at most ``tol`` (columns are
        exact after each column update).
    max_iter : int
        Iteration cap; hitting it sets ``converged=False`` instead of raising.
    init_g : ndarray, optional
        Warm-start column potentials aligned with ``b``'s atoms.
    method : {"auto", "dense", "grid"}
        ``"auto"`` picks the grid for large additive problems and falls back
        to the dense solver (warm-started) if the grid run stalls.

    Returns
    -------
    EntropicPlan
        On the dense back end the plan is rounded to an exact coupling (a
        final rank-one correction) and the reported values refer to it.
    """
    if not eta > 0:
        raise InputError("eta must be positive")
    if not tol > 0:
        raise InputError("tol must be positive")
    cost = as_block_cost(cost)
    m, mp = a.support_size, b.support_size
    if method == "grid" or (method == "auto" and _use_grid(a, b, cost)):
        if not getattr(cost, "additive", False) or a.k != b.k:
            raise InputError("grid back end requires an additive cost and equal block lengths")
        # in auto mode a stalled grid run hands its potentials to the dense solver
        fallback = method == "auto" and m * mp <= budget and mp <= NEWTON_MAX_COLS
        patience = GRID_PATIENCE if fallback else None
        f, g, it, viol = _sinkhorn_grid(cost.matrix, a, b, eta, tol, max_iter, init_g, patience)
        if viol <= tol or not fallback or it == max_iter:
            value = float(f @ a.masses + g @ b.masses)
            return EntropicPlan(a, b, float(eta), value, float("nan"), float("nan"), f, g, it, viol,
                                viol <= tol, None, {"backend": "grid"})
        res = solve_entropic_ot(a, b, cost, eta, tol, max(max_iter - it, 1), g, budget=budget, method="dense")
        res.iterations += it
        res.info["grid_iterations"] = it
        return res
    if method not in ("auto", "dense"):
        raise InputError(f"unknown method {method!r}")
    if m * mp > budget:
        raise BudgetExceeded(f"support product {m}x{mp} exceeds budget {budget}")
    C = cost.dense(a.blocks, b.blocks)
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise InputError("cost must be finite and nonnegative on the supports")
    f, g, it, viol = _sinkhorn_dense(C, a.masses, b.masses, eta, tol, max_iter, init_g)
    P = np.exp((f[:, None] + g[None, :] - C) / eta)
    P = _round_to_coupling(P, a.masses, b.masses)
    cost_value = float((P * C).sum())
    H = float(entr(P).sum())
    rows = np.repeat(np.arange(m), mp)
    cols = np.tile(np.arange(mp), m)
    plan = TransportPlan(a, b, rows, cols, P.ravel(), cost_value, None, None, {"network": "entropic"})
    return EntropicPlan(a, b, float(eta), cost_value - eta * H, cost_value, H, f, g, it, viol,
                        viol <= tol, plan, {"backend": "dense"})


def entropic_ot_cost(a, b, cost, eta, **kw) -> float:
    """Regularized cost ``T^eta_c(a, b)``."""
    return solve_entropic_ot(a, b, cost, eta, **kw).regularized_value
