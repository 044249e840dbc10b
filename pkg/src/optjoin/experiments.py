"""Monte-Carlo experiment drivers writing deterministic CSV tables.

Every (cell, rep) task draws its samples from seeds derived from
``SeedSequence([seed, cell, rep])``; the derived seeds are written to the CSV
so any row can be regenerated with ``optjoin sample --seed`` followed by
``optjoin estimate``, or directly with ``optjoin experiment --cell i --rep r``.
Wall-clock times go to a ``.timing.csv`` sidecar so the main table is
byte-identical across runs.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .costs import AdditiveCost, adapted_cost, load_cost
from .errors import InputError, OptJoinError
from .estimators import EstimatorConfig, ScheduleRule, estimate_oj, k_schedule
from .measures import empirical_block_measure, ingest_sequence
from .ot.exact import solve_ot
from .process_lab import bound_for_models, exact_block_law, k_step_cost_curve, load_model, sample

KINDS = ("iid_rate", "markov_rate", "eta_sweep", "curve", "admissibility", "bound_check")
COLUMNS = ("experiment", "cell", "n", "k", "g", "eta", "rep", "value", "target", "abs_error",
           "status", "x_seed", "y_seed")
THREADS_ENV = "OPTJOIN_THREADS"


@dataclass
class ExperimentSpec:
    """Declarative experiment description (mirrors the JSON config file)."""

    kind: str
    name: str | None = None
    x_model: object = None
    y_model: object = None
    x_data: str | None = None
    y_data: str | None = None
    cost: object = "hamming"
    n_grid: list = field(default_factory=list)
    reps: int = 1
    schedule: str | None = None
    k: int = 1
    eta: list = field(default_factory=lambda: [0.0])
    k_max: int = 12
    target_k: int = 12
    p: float = 1.0
    C: float = 1.0
    tol: float = 1e-9
    rng_seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown experiment kind {self.kind!r}")
        self.name = self.name or self.kind
        if isinstance(self.eta, (int, float)):
            self.eta = [float(self.eta)]
        self.eta = [float(e) for e in self.eta]
        self.n_grid = [int(n) for n in self.n_grid]
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InputError("n_grid must be strictly increasing")
        if self.reps < 1:
            raise InputError("reps must be at least 1")
        if self.kind in ("iid_rate", "markov_rate", "admissibility", "bound_check") and not self.n_grid:
            raise InputError(f"{self.kind} needs a nonempty n_grid")
        if self.kind in ("markov_rate", "bound_check", "admissibility") and not self.schedule:
            raise InputError(f"{self.kind} needs a schedule rule")
        needs_y = self.kind in ("iid_rate", "markov_rate", "curve", "bound_check")
        if self.x_model is None and self.kind != "eta_sweep":
            raise InputError("x_model is required")
        if needs_y and self.y_model is None:
            raise InputError("y_model is required")
        if self.kind == "eta_sweep" and self.x_data is None and self.x_model is None:
            raise InputError("eta_sweep needs data files or models")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        obj = {k.replace("-", "_"): v for k, v in obj.items()}
        if "seed" in obj and "rng_seed" not in obj:
            obj["rng_seed"] = obj.pop("seed")
        if "out" in obj and "output" not in obj:
            obj["output"] = obj.pop("out")
        extra = set(obj) - known
        if extra:
            raise InputError(f"unknown experiment fields: {sorted(extra)}")
        if "kind" not in obj:
            raise InputError("experiment spec needs a kind")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)


def version_string() -> str:
    """``git describe``-style build identifier, falling back to the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def task_seeds(seed: int, cell: int, rep: int) -> tuple[int, int]:
    """The two integer sample seeds used by task ``(cell, rep)``."""
    s = np.random.SeedSequence([int(seed), int(cell), int(rep)]).generate_state(2)
    return int(s[0]), int(s[1])


class _Context:
    """Models, cost and precomputed targets shared by all tasks of a run."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.mx = load_model(spec.x_model) if spec.x_model is not None else None
        self.my = load_model(spec.y_model) if spec.y_model is not None else self.mx
        self.pair = None
        if spec.kind == "eta_sweep" and spec.x_data is not None:
            x = ingest_sequence(spec.x_data)
            y = ingest_sequence(spec.y_data or spec.x_data)
            self.pair = (x, y, -1, -1)
        xa = self.mx.alphabet if self.mx is not None else self.pair[0].alphabet
        ya = self.my.alphabet if self.my is not None else self.pair[1].alphabet
        self.cost = load_cost(spec.cost, xa, ya)
        self.rule = None
        if spec.schedule:
            rho = None
            if self.mx is not None:
                rho = max(self.mx.second_eigenvalue_modulus(), self.my.second_eigenvalue_modulus())
                rho = rho if 0 < rho < 1 else None
            self.rule = ScheduleRule.parse(spec.schedule).with_defaults(
                x_size=xa.size, y_size=ya.size, rho=rho)
        self.target = None
        if spec.kind == "iid_rate":
            self.target = k_step_cost_curve(self.mx, self.my, self.cost, spec.k, ks=[spec.k])[0][1]
        elif spec.kind == "markov_rate":
            self.target = k_step_cost_curve(self.mx, self.my, self.cost, spec.target_k,
                                            ks=[spec.target_k])[0][1]
        if spec.kind == "eta_sweep" and self.pair is None:
            n = spec.n_grid[-1] if spec.n_grid else 10_000
            xs, ys = task_seeds(spec.rng_seed, 0, 0)
            self.pair = (sample(self.mx, n, xs), sample(self.my, n, ys), xs, ys)
        if spec.kind == "eta_sweep":
            x, y = self.pair[0], self.pair[1]
            self.target = estimate_oj(x, y, self.cost, EstimatorConfig(k=spec.k)).cost_estimate

    def cells(self) -> list:
        s = self.spec
        if s.kind in ("iid_rate", "markov_rate", "admissibility", "bound_check"):
            return list(s.n_grid)
        if s.kind == "eta_sweep":
            return list(s.eta)
        return list(range(1, s.k_max + 1))

    def reps(self) -> int:
        return self.spec.reps if self.spec.kind in ("iid_rate", "markov_rate", "admissibility") else 1


def _row(spec, cell, rep, n="", k="", g="", eta="", value=math.nan, target="", status="ok",
         xs="", ys=""):
    abs_err = "" if target == "" or not np.isfinite(value) else abs(value - target)
    return {"experiment": spec.name, "cell": cell, "n": n, "k": k, "g": g, "eta": eta, "rep": rep,
            "value": value, "target": target, "abs_error": abs_err, "status": status,
            "x_seed": xs, "y_seed": ys}


def run_task(ctx: _Context, cell: int, rep: int) -> dict:
    """Compute one (cell, rep) row."""
    spec = ctx.spec
    param = ctx.cells()[cell]
    if spec.kind in ("iid_rate", "markov_rate"):
        n = int(param)
        sched = k_schedule(n, ctx.rule) if spec.kind == "markov_rate" else k_schedule(n, spec.k)
        xs, ys = task_seeds(spec.rng_seed, cell, rep)
        x, y = sample(ctx.mx, n, xs), sample(ctx.my, n, ys)
        est = estimate_oj(x, y, ctx.cost, EstimatorConfig(k=sched.k))
        return _row(spec, cell, rep, n, sched.k, sched.g, 0.0, est.cost_estimate, ctx.target,
                    xs=xs, ys=ys)
    if spec.kind == "eta_sweep":
        x, y, xs, ys = ctx.pair
        eta = float(param)
        est = estimate_oj(x, y, ctx.cost, EstimatorConfig(k=spec.k, eta=eta, tol=spec.tol,
                                                          max_iter=1_000_000))
        status = est.diagnostics.get("status")
        status = "ok" if status in ("optimal", "converged") else status
        return _row(spec, cell, rep, min(x.n, y.n), spec.k, 0, eta, est.cost_estimate, ctx.target,
                    status, xs, ys)
    if spec.kind == "curve":
        k = int(param)
        eta = spec.eta[0]
        (_, val), = k_step_cost_curve(ctx.mx, ctx.my, ctx.cost, k, eta, ks=[k])
        return _row(spec, cell, rep, "", k, 0, eta, val)
    if spec.kind == "admissibility":
        n = int(param)
        sched = k_schedule(n, ctx.rule)
        xs, _ = task_seeds(spec.rng_seed, cell, rep)
        emp = empirical_block_measure(sample(ctx.mx, n, xs), sched.k)
        law = exact_block_law(ctx.mx, sched.k)
        val = solve_ot(emp, law, AdditiveCost(adapted_cost(ctx.cost, "x"))).cost_value / sched.k
        return _row(spec, cell, rep, n, sched.k, sched.g, 0.0, val, 0.0, xs=xs)
    if spec.kind == "bound_check":
        n = int(param)
        sched = k_schedule(n, ctx.rule)
        eta = spec.eta[0]
        b = bound_for_models(ctx.mx, ctx.my, sched.k, sched.g, n, sup_cost=ctx.cost.sup_norm,
                             p=spec.p, C=spec.C, eta=eta)
        return _row(spec, cell, rep, n, sched.k, sched.g, eta, b.value, status=b.status)
    raise InputError(f"unknown experiment kind {spec.kind!r}")


def _safe_task(ctx, cell, rep):
    t0 = time.perf_counter()
    try:
        row = run_task(ctx, cell, rep)
    except (OptJoinError, ValueError, FloatingPointError) as exc:
        row = _row(ctx.spec, cell, rep, status=f"error: {exc}")
    return row, time.perf_counter() - t0


_WORKER_CTX = None


def _init_worker(spec_json):
    global _WORKER_CTX
    _WORKER_CTX = _Context(ExperimentSpec.from_json(spec_json))


def _worker(args):
    return _safe_task(_WORKER_CTX, *args)


def _aggregate(spec, cell, rows) -> list:
    vals = np.array([r["value"] for r in rows if r["status"] == "ok"], dtype=float)
    errs = np.array([r["abs_error"] for r in rows if r["status"] == "ok" and r["abs_error"] != ""],
                    dtype=float)
    first = rows[0]
    status = "ok" if len(vals) == len(rows) else f"{len(vals)}/{len(rows)} ok"

    def stats(x):
        if x.size == 0:
            return math.nan, math.nan
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
        return float(x.mean()), se

    vm, vse = stats(vals)
    em, ese = stats(errs) if errs.size else ("", "")
    base = {c: first[c] for c in ("experiment", "cell", "n", "k", "g", "eta", "target")}
    mean = dict(base, rep="mean", value=vm, abs_error=em, status=status, x_seed="", y_seed="")
    se = dict(base, rep="se", value=vse, abs_error=ese, status=status, x_seed="", y_seed="")
    return [mean, se]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_rows(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


@dataclass
class ExperimentResult:
    rows: list
    timings: list
    n_failed: int
    n_tasks: int

    @property
    def all_failed(self) -> bool:
        return self.n_tasks > 0 and self.n_failed == self.n_tasks


def run_experiment(spec: ExperimentSpec, output=None, workers: int | None = None) -> ExperimentResult:
    """Run all tasks of ``spec`` and write ``output`` (CSV) plus sidecar files.

    Parameters
    ----------
    spec : ExperimentSpec
    output : path-like, optional
        Defaults to ``spec.output``; nothing is written when both are ``None``.
    workers : int, optional
        Process-pool size; defaults to the ``OPTJOIN_THREADS`` environment
        variable, else 1.  Results do not depend on it.
    """
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    ctx = _Context(spec)
    cells = ctx.cells()
    tasks = [(c, r) for c in range(len(cells)) for r in range(ctx.reps())]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(spec.to_json(),)) as ex:
            results = list(ex.map(_worker, tasks))
    else:
        results = [_safe_task(ctx, c, r) for c, r in tasks]
    rows, timings = [], []
    failed = 0
    for ci in range(len(cells)):
        cell_rows = []
        for (c, r), (row, secs) in zip(tasks, results):
            if c != ci:
                continue
            cell_rows.append(row)
            timings.append({"experiment": spec.name, "cell": c, "rep": r, "seconds": secs})
            failed += row["status"] != "ok"
        rows.extend(cell_rows)
        rows.extend(_aggregate(spec, ci, cell_rows))
    result = ExperimentResult(rows, timings, failed, len(tasks))
    output = output or spec.output
    if output:
        write_outputs(spec, result, output)
    return result


def write_outputs(spec: ExperimentSpec, result: ExperimentResult, output) -> None:
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_rows(result.rows), encoding="utf-8")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("experiment", "cell", "rep", "seconds"))
    for t in result.timings:
        w.writerow((t["experiment"], t["cell"], t["rep"], f"{t['seconds']:.6f}"))
    Path(str(out) + ".timing.csv").write_text(buf.getvalue(), encoding="utf-8")
    meta = {"experiment": spec.name, "kind": spec.kind, "seed": spec.rng_seed,
            "version": version_string(), "spec": spec.to_json(), "columns": list(COLUMNS)}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n",
                                             encoding="utf-8")


def run_single(spec: ExperimentSpec, cell: int, rep: int) -> dict:
    """Recompute one CSV row; identical to the row written by :func:`run_experiment`."""
    ctx = _Context(spec)
    if not 0 <= cell < len(ctx.cells()) or not 0 <= rep < ctx.reps():
        raise InputError("cell or rep out of range")
    return _safe_task(ctx, cell, rep)[0]
