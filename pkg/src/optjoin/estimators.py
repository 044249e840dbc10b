"""Plug-in estimators of the (entropic) optimal joining cost and block schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import AdditiveCost, CostSpec, adapted_cost
from .errors import InputError
from .joining import BlockJoining, build_block_joining
from .measures import SymbolSequence, empirical_block_measure
from .ot.entropic import solve_entropic_ot
from .ot.exact import dual_gap, solve_ot


@dataclass(frozen=True)
class ScheduleRule:
    """Block-length schedule ``n -> (k, g)``.

    Kinds
    -----
    fixed
        ``k`` as given, ``g = 0``.
    entropy
        ``k = floor(log n / (max(h_x, h_y) + eps))`` (entropy rates in nats).
    markov
        ``k = floor(alpha log2 n / max(log2 max(|X|, |Y|), 1))`` and
        ``g = floor(log(alpha ln n) / log(1 / rho))`` clipped to ``[0, k-1]``.
    corollary
        Largest ``k`` with ``k < (2 - p) log2 n / max(log2 max(|X|, |Y|), 1)``;
        ``g`` as for ``markov`` when ``rho`` is set (with ``alpha = 1``).
    """

    kind: str
    k: int | None = None
    eps: float | None = None
    h_x: float | None = None
    h_y: float | None = None
    alpha: float | None = None
    p: float | None = None
    rho: float | None = None
    x_size: int | None = None
    y_size: int | None = None

    _FIELDS = ("k", "eps", "h_x", "h_y", "alpha", "p", "rho", "x_size", "y_size")

    @classmethod
    def parse(cls, text) -> "ScheduleRule":
        """Parse ``"6"``, ``"markov:alpha=0.5,rho=0.4"``, ``"entropy:eps=0.1,h_x=..."`` etc."""
        if isinstance(text, ScheduleRule):
            return text
        if isinstance(text, (int, np.integer)):
            return cls("fixed", k=int(text))
        text = str(text).strip()
        if text.lstrip("-").isdigit():
            return cls("fixed", k=int(text))
        kind, _, rest = text.partition(":")
        if kind not in ("fixed", "entropy", "markov", "corollary"):
            raise InputError(f"unknown schedule rule {kind!r}")
        kw = {}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in cls._FIELDS:
                raise InputError(f"unknown schedule parameter {key!r}")
            try:
                kw[key] = int(val) if key in ("k", "x_size", "y_size") else float(val)
            except ValueError:
                raise InputError(f"bad value for {key}: {val!r}") from None
        return cls(kind, **kw)

    def with_defaults(self, **kw) -> "ScheduleRule":
        """Fill unset parameters (e.g. alphabet sizes or rho) from context."""
        upd = {k: v for k, v in kw.items() if v is not None and getattr(self, k) is None}
        return replace(self, **upd) if upd else self

    def __str__(self):
        if self.kind == "fixed":
            return str(self.k)
        parts = [f"{f}={getattr(self, f)}" for f in self._FIELDS if getattr(self, f) is not None]
        return f"{self.kind}:" + ",".join(parts)


@dataclass(frozen=True)
class Schedule:
    k: int
    g: int


def _size_denominator(rule: ScheduleRule) -> float:
    if rule.x_size is None or rule.y_size is None:
        raise InputError(f"{rule.kind} schedule needs alphabet sizes")
    return max(math.log2(max(rule.x_size, rule.y_size)), 1.0)


def _gap_from_rho(rule: ScheduleRule, n: int, alpha: float) -> int:
    if rule.rho is None:
        return 0
    if not 0 < rule.rho < 1:
        raise InputError("rho must lie in (0, 1)")
    inner = alpha * math.log(n)
    if inner <= 1:
        return 0
    return int(math.floor(math.log(inner) / math.log(1 / rule.rho)))


def k_schedule(n: int, rule) -> Schedule:
    """Block length ``k >= 1`` and gap ``0 <= g < k`` for sample size ``n``."""
    rule = ScheduleRule.parse(rule)
    if n < 2:
        raise InputError("schedules need n >= 2")
    g = 0
    if rule.kind == "fixed":
        if rule.k is None or rule.k < 1:
            raise InputError("fixed schedule needs k >= 1")
        k = rule.k
    elif rule.kind == "entropy":
        if rule.eps is None or rule.eps <= 0:
            raise InputError("entropy schedule needs eps > 0")
        if rule.h_x is None or rule.h_y is None or min(rule.h_x, rule.h_y) < 0:
            raise InputError("entropy schedule needs nonnegative h_x and h_y")
        k = math.floor(math.log(n) / (max(rule.h_x, rule.h_y) + rule.eps))
    elif rule.kind == "markov":
        alpha = rule.alpha
        if alpha is None or not 0 < alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        k = math.floor(alpha * math.log2(n) / _size_denominator(rule))
        g = _gap_from_rho(rule, n, alpha)
    elif rule.kind == "corollary":
        p = 1.0 if rule.p is None else rule.p
        if not 1 <= p < 2:
            raise InputError("p must lie in [1, 2)")
        bound = (2 - p) * math.log2(n) / _size_denominator(rule)
        k = math.ceil(bound) - 1
        g = _gap_from_rho(rule, n, 1.0)
    else:
        raise InputError(f"unknown schedule rule {rule.kind!r}")
    k = max(1, min(int(k), n))
    g = max(0, min(int(g), k - 1))
    return Schedule(k, g)


@dataclass
class EstimatorConfig:
    """Estimator settings; ``eta = 0`` always uses the exact solver."""

    k: int | ScheduleRule = 1
    eta: float = 0.0
    gap_g: int = 0
    solver: str = "exact"
    tol: float = 1e-9
    max_iter: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.k, ScheduleRule):
            self.k = ScheduleRule.parse(self.k)
        if self.k.kind == "fixed" and (self.k.k is None or self.k.k < 1):
            raise InputError("k must be at least 1")
        if self.eta < 0:
            raise InputError("eta must be nonnegative")
        if self.gap_g < 0:
            raise InputError("gap_g must be nonnegative")
        self.solver = "exact" if self.eta == 0 else "entropic"


@dataclass
class EstimateResult:
    cost_estimate: float
    joining: BlockJoining
    k_used: int
    n_x: int
    n_y: int
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, include_joining: bool = False) -> dict:
        out = {
            "cost_estimate": float(self.cost_estimate),
            "k_used": int(self.k_used),
            "n_x": int(self.n_x),
            "n_y": int(self.n_y),
            "eta": float(self.joining.eta),
            "diagnostics": self.diagnostics,
        }
        if include_joining:
            out["joining"] = self.joining.to_json()
        return out


def resolve_k(cfg: EstimatorConfig, n: int, x_size: int, y_size: int) -> Schedule:
    rule = cfg.k.with_defaults(x_size=x_size, y_size=y_size)
    return k_schedule(n, rule)


def estimate_oj(x: SymbolSequence, y: SymbolSequence, c: CostSpec, cfg: EstimatorConfig | None = None) -> EstimateResult:
    """Estimate the (entropic) optimal joining cost from two observed sequences.

    Builds the sliding-window k-block measures of ``x`` and ``y``, couples them
    optimally for ``c_k`` (entropically when ``cfg.eta > 0``) and returns the
    per-symbol cost together with the induced stationary joining.
    """
    cfg = cfg or EstimatorConfig()
    if c.x_alphabet != x.alphabet or c.y_alphabet != y.alphabet:
        raise InputError("cost alphabets do not match the sequences")
    n_min = min(x.n, y.n)
    if cfg.k.kind == "fixed":
        k = cfg.k.k
        if k > n_min:
            raise InputError("k exceeds sequence length")
    else:
        if n_min < 2:
            raise InputError("schedules need n >= 2")
        k = resolve_k(cfg, n_min, x.alphabet.size, y.alphabet.size).k
    a = empirical_block_measure(x, k)
    b = empirical_block_measure(y, k)
    cost = AdditiveCost(c)
    diag = {"solver": cfg.solver, "support_x": a.support_size, "support_y": b.support_size}
    if cfg.eta == 0:
        plan = solve_ot(a, b, cost)
        value = plan.cost_value / k
        diag.update(dual_gap=dual_gap(plan), network=plan.info.get("network"), status="optimal")
        joining = build_block_joining(plan)
    else:
        res = solve_entropic_ot(a, b, cost, cfg.eta, tol=cfg.tol, max_iter=cfg.max_iter, method="dense")
        value = res.regularized_value / k
        diag.update(status=res.status, iterations=res.iterations,
                    marginal_violation=res.marginal_violation)
        joining = build_block_joining(res)
    identity = joining.expected_cost(c) - cfg.eta * joining.block_entropy_rate()
    diag["identity_residual"] = float(value - identity)
    return EstimateResult(float(value), joining, k, x.n, y.n, diag)


def admissibility_diagnostic(model, cost: CostSpec, schedule, n_grid, reps: int, rng_seed: int = 0) -> list:
    """Mean adapted-cost transport distance between empirical and true k-block laws.

    Returns rows ``{"n", "k", "mean", "se"}``; the mean of
    ``T_{c_X,k}(mu_hat_{k,n}, mu_k) / k`` over ``reps`` samples should vanish
    along an admissible schedule.
    """
    from .process_lab import exact_block_law, sample

    if reps < 1:
        raise InputError("reps must be at least 1")
    rule = ScheduleRule.parse(schedule).with_defaults(
        x_size=model.alphabet.size, y_size=model.alphabet.size)
    cx = AdditiveCost(adapted_cost(cost, "x"))
    rows = []
    for i, n in enumerate(n_grid):
        k = k_schedule(int(n), rule).k
        law = exact_block_law(model, k)
        vals = []
        for r in range(reps):
            seed = np.random.SeedSequence([rng_seed, i, r])
            seq = sample(model, int(n), seed)
            emp = empirical_block_measure(seq, k)
            vals.append(solve_ot(emp, law, cx).cost_value / k)
        vals = np.asarray(vals)
        se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        rows.append({"n": int(n), "k": int(k), "mean": float(vals.mean()), "se": se})
    return rows
