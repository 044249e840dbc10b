"""Ground-truth Markov/iid models and the quantities derived from them."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .costs import CostSpec, hamming_cost
from .errors import BudgetExceeded, InputError
from .measures import Alphabet, BlockMeasure, SymbolSequence
from .ot.entropic import solve_entropic_ot
from .ot.exact import solve_ot

LAW_BUDGET = 2**24


class MarkovModel:
    """Stationary Markov chain on a finite alphabet.

    Parameters
    ----------
    alphabet : Alphabet
    transition : array_like, shape (S, S)
        Row-stochastic matrix.
    stationary : array_like, optional
        Stationary law; computed when omitted (unique for irreducible chains).
    """

    def __init__(self, alphabet: Alphabet, transition, stationary=None):
        P = np.array(transition, dtype=float)
        S = alphabet.size
        if P.shape != (S, S):
            raise InputError(f"transition matrix must be {S}x{S}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise InputError("transition entries must be finite and nonnegative")
        if np.abs(P.sum(axis=1) - 1).max() > 1e-12:
            raise InputError("transition rows must sum to 1")
        self.alphabet = alphabet
        self.P = P
        ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
        self.irreducible = ncomp == 1
        self.aperiodic = self.irreducible and _period(P) == 1
        if stationary is None:
            stationary = _stationary(P)
        p = np.array(stationary, dtype=float)
        if p.shape != (S,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise InputError("stationary law must be a probability vector")
        if np.abs(p @ P - p).max() > 1e-10:
            raise InputError("stationary law is not a fixed point of the transition matrix")
        self.p = p
        P.setflags(write=False)
        p.setflags(write=False)

    @property
    def transition(self) -> np.ndarray:
        return self.P

    @property
    def stationary(self) -> np.ndarray:
        return self.p

    @property
    def is_iid(self) -> bool:
        return bool(np.all(self.P == self.P[0]))

    # constructors -------------------------------------------------------
    @classmethod
    def iid(cls, probs, alphabet: Alphabet | None = None) -> "MarkovModel":
        probs = np.asarray(probs, dtype=float)
        alphabet = alphabet or Alphabet.range(probs.size)
        return cls(alphabet, np.tile(probs, (probs.size, 1)), probs)

    @classmethod
    def symmetric(cls, q: float, alphabet: Alphabet | None = None) -> "MarkovModel":
        """Two-state chain that flips state with probability ``q``."""
        alphabet = alphabet or Alphabet.range(2)
        return cls(alphabet, [[1 - q, q], [q, 1 - q]], [0.5, 0.5])

    @classmethod
    def from_json(cls, obj: dict) -> "MarkovModel":
        try:
            return cls(Alphabet(obj["tokens"]), obj["transition"], obj.get("stationary"))
        except KeyError as exc:
            raise InputError(f"model JSON missing field {exc}") from None

    def to_json(self) -> dict:
        return {"tokens": list(self.alphabet.tokens), "transition": self.P.tolist(),
                "stationary": self.p.tolist()}

    def second_eigenvalue_modulus(self) -> float:
        """Second largest modulus among the eigenvalues of ``P``."""
        ev = np.sort(np.abs(np.linalg.eigvals(self.P)))[::-1]
        return float(ev[1]) if ev.size > 1 else 0.0

    def __repr__(self):
        return f"MarkovModel(|X|={self.alphabet.size}, iid={self.is_iid})"


def _period(P: np.ndarray) -> int:
    adj = P > 0
    order, _ = breadth_first_order(adj.astype(np.int8), 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for u in order:
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
    d = 0
    for u, v in zip(*np.nonzero(adj)):
        d = math.gcd(d, int(abs(level[u] + 1 - level[v])))
    return d or 1


def _stationary(P: np.ndarray) -> np.ndarray:
    S = P.shape[0]
    A = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    p, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    p = np.clip(p, 0, None)
    return p / p.sum()


def load_model(spec) -> MarkovModel:
    """Model from a JSON path, a dict, or an existing model."""
    if isinstance(spec, MarkovModel):
        return spec
    if isinstance(spec, dict):
        return MarkovModel.from_json(spec)
    path = Path(spec)
    if not path.is_file():
        raise InputError(f"{path}: no such model file")
    try:
        return MarkovModel.from_json(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


@njit(cache=True)
def _walk(cum, x0, u, out):
    S = cum.shape[1]
    x = x0
    out[0] = x
    for t in range(1, u.shape[0]):
        y = 0
        while y < S - 1 and cum[x, y] <= u[t]:
            y += 1
        out[t] = y
        x = y


def sample(model: MarkovModel, n: int, rng_seed) -> SymbolSequence:
    """Draw ``X_1 ~ p`` and ``X_{t+1} ~ P(X_t, .)`` by inverse-CDF sampling."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    u = rng.random(n)
    S = model.alphabet.size
    cum0 = np.cumsum(model.p)
    x0 = min(int(np.searchsorted(cum0, u[0], side="right")), S - 1)
    if model.is_iid:
        cum = np.cumsum(model.P[0])
        out = np.minimum(np.searchsorted(cum, u, side="right"), S - 1)
        out[0] = x0
    else:
        cum = np.cumsum(model.P, axis=1)
        out = np.empty(n, dtype=np.int64)
        _walk(cum, x0, u, out)
    return SymbolSequence(model.alphabet, out)


def exact_block_law(model: MarkovModel, k: int, budget: int = LAW_BUDGET) -> BlockMeasure:
    """``mu_k(x) = p(x_1) prod P(x_i, x_{i+1})`` over the support only."""
    if k < 1:
        raise InputError("k must be at least 1")
    dtype = model.alphabet.dtype
    states = np.flatnonzero(model.p > 0)
    blocks = states[:, None].astype(np.int64)
    masses = model.p[states]
    for _ in range(k - 1):
        last = blocks[:, -1]
        i, t = np.nonzero(model.P[last] > 0)
        if i.size > budget:
            raise BudgetExceeded(f"exact block law exceeds atom budget {budget}")
        masses = masses[i] * model.P[last[i], t]
        blocks = np.hstack([blocks[i], t[:, None]])
        keep = masses > 0
        blocks, masses = blocks[keep], masses[keep]
    return BlockMeasure(model.alphabet, blocks.astype(dtype), masses / masses.sum(), validate=False)


def entropy_rate(model: MarkovModel) -> float:
    """``-sum_ij p_i P_ij log P_ij`` in nats."""
    P = model.P
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-(model.p @ terms.sum(axis=1)))


def phi_mixing(model: MarkovModel, g: int) -> float:
    """phi-mixing coefficient: 1 at ``g = 0``, else ``max_i TV(P^g(i, .), p)``.

    The maximum runs over states of positive stationary mass.
    """
    if g < 0:
        raise InputError("g must be nonnegative")
    if g == 0:
        return 1.0
    Pg = np.linalg.matrix_power(model.P, g)
    live = model.p > 0
    return float(0.5 * np.abs(Pg[live] - model.p).sum(axis=1).max())


def k_step_cost_curve(mx: MarkovModel, my: MarkovModel, c: CostSpec, k_max: int, eta: float = 0.0,
                      tol: float = 1e-12, ks=None) -> list:
    """``[(k, T^eta_{c_k}(mu_k, nu_k) / k)]`` for ``k = 1..k_max`` from exact laws."""
    if k_max < 1:
        raise InputError("k_max must be at least 1")
    if eta < 0:
        raise InputError("eta must be nonnegative")
    out = []
    g = None
    for k in (ks if ks is not None else range(1, k_max + 1)):
        a, b = exact_block_law(mx, k), exact_block_law(my, k)
        if eta == 0:
            val = solve_ot(a, b, c).cost_value
        else:
            res = solve_entropic_ot(a, b, c, eta, tol=tol, max_iter=1_000_000)
            if not res.converged:
                raise InputError(f"Sinkhorn did not converge at k={k}")
            val = res.regularized_value
        out.append((k, val / k))
    return out


@dataclass
class BoundInputs:
    """Inputs of the finite-sample error bounds."""

    phi_x: Callable[[int], float]
    phi_y: Callable[[int], float]
    k: int
    g: int
    n: int
    x_size: int
    y_size: int
    sup_cost: float = 1.0
    p: float = 1.0
    C: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if self.k < 1 or self.g < 0 or self.n < self.k:
            raise InputError("bound inputs need k >= 1, g >= 0 and n >= k")
        if not 1 <= self.p < 2:
            raise InputError("p must lie in [1, 2)")
        if self.C <= 0 or self.eta < 0 or self.sup_cost < 0:
            raise InputError("C must be positive; eta and sup_cost nonnegative")


@dataclass
class BoundValue:
    value: float
    status: str
    terms: dict = field(default_factory=dict)


def theoretical_error_bound(inp: BoundInputs) -> BoundValue:
    """Right-hand side of the finite-sample bound for ``E|S_hat - S|``.

    With ``eta = 0`` this is
    ``|c| (k (phi_x(g+1) + phi_y(g+1)) / (k+g) + 3g/k + C (|X|^{k/2} + |Y|^{k/2}) / n^{1-p/2})``.
    With ``eta > 0`` the entropic version adds the entropy-estimation terms in
    ``u = C |X|^{k/2} n^{p/2-1}`` (and ``v`` for Y); it is reported as vacuous
    when ``u >= 1`` or ``v >= 1``.
    """
    c, k, g, n = inp.sup_cost, inp.k, inp.g, inp.n
    phix, phiy = inp.phi_x(g + 1), inp.phi_y(g + 1)
    if inp.eta == 0:
        mix = c * k * (phix + phiy) / (k + g)
        gap = c * 3 * g / k
        samp = c * inp.C * (inp.x_size ** (k / 2) + inp.y_size ** (k / 2)) / n ** (1 - inp.p / 2)
        return BoundValue(mix + gap + samp, "ok", {"mixing": mix, "gap": gap, "sampling": samp})
    eta = inp.eta
    lx, ly = math.log(inp.x_size), math.log(inp.y_size)
    u = inp.C * inp.x_size ** (k / 2) * n ** (inp.p / 2 - 1)
    v = inp.C * inp.y_size ** (k / 2) * n ** (inp.p / 2 - 1)
    mix = c * (phix + phiy) * k / (k + g)
    gap = (3 * c + 2 * eta * (lx + ly)) * g / k
    if u >= 1 or v >= 1:
        return BoundValue(math.inf, "vacuous", {"mixing": mix, "gap": gap, "u": u, "v": v})
    tu = u * (c / 2 + (eta / k) * (3 * k * lx - math.log(u)))
    tv = v * (c / 2 + (eta / k) * (3 * k * ly - math.log(v)))
    return BoundValue(mix + gap + tu + tv, "ok", {"mixing": mix, "gap": gap, "x_sampling": tu,
                                                 "y_sampling": tv, "u": u, "v": v})


def bound_for_models(mx: MarkovModel, my: MarkovModel, k: int, g: int, n: int, *, sup_cost: float = 1.0,
                     p: float = 1.0, C: float = 1.0, eta: float = 0.0) -> BoundValue:
    """:func:`theoretical_error_bound` with phi coefficients computed from the models."""
    return theoretical_error_bound(BoundInputs(
        lambda h: phi_mixing(mx, h), lambda h: phi_mixing(my, h), k, g, n,
        mx.alphabet.size, my.alphabet.size, sup_cost, p, C, eta))


def dbar_estimate(x: SymbolSequence, y: SymbolSequence, k: int) -> float:
    """Block estimate of the d-bar distance: Hamming cost, no regularization.

    Tokens are compared by value, so the two sequences may use different
    alphabets.
    """
    from .estimators import EstimatorConfig, estimate_oj

    c = hamming_cost(x.alphabet, y.alphabet)
    return estimate_oj(x, y, c, EstimatorConfig(k=k)).cost_estimate
