"""Command-line interface: ``optjoin <command> [options]``.

Every command accepts ``--config FILE``: a JSON object whose keys are the
command's long option names (dashes or underscores).  Values given on the
command line take precedence.  Usage errors exit with status 2, computational
failures with status 1.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__
from .costs import load_cost
from .errors import InputError, OptJoinError
from .estimators import EstimatorConfig, estimate_oj
from .experiments import ExperimentSpec, format_rows, run_experiment, run_single
from .joining import BlockJoining, GapSpec
from .measures import SymbolSequence, ingest_sequence, read_alphabet, write_sequence
from .process_lab import bound_for_models, dbar_estimate, k_step_cost_curve, load_model, sample


class _Parser(argparse.ArgumentParser):
    pass


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(float(v)) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p, fmt_default="json", fmt_choices=("json", "csv")):
    p.add_argument("--config", metavar="FILE", help="JSON file with option values (keys = long option names)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--format", choices=fmt_choices, default=fmt_default,
                   help=f"output format (default: {fmt_default})")
    p.add_argument("--out", metavar="FILE", help="write output to FILE instead of stdout")


def _data_args(p):
    p.add_argument("--x", metavar="FILE", help="X sequence file (whitespace-separated tokens)")
    p.add_argument("--y", metavar="FILE", help="Y sequence file (whitespace-separated tokens)")
    p.add_argument("--alphabet", metavar="FILE", help="alphabet file used for both sequences")
    p.add_argument("--x-alphabet", metavar="FILE", help="alphabet file for X (one token per line)")
    p.add_argument("--y-alphabet", metavar="FILE", help="alphabet file for Y (one token per line)")


def _estimator_args(p):
    p.add_argument("--cost", default="hamming", help="'hamming' or a cost JSON file (default: hamming)")
    p.add_argument("--k", default="1",
                   help="block length, or a schedule rule such as 'markov:alpha=0.5' (default: 1)")
    p.add_argument("--eta", type=float, default=0.0, help="entropic regularization, 0 = exact (default: 0)")
    p.add_argument("--tol", type=float, default=1e-9, help="Sinkhorn marginal tolerance (default: 1e-9)")
    p.add_argument("--max-iter", type=int, default=100_000, help="Sinkhorn iteration cap (default: 100000)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="optjoin", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate the optimal joining cost of two sequences")
    _data_args(p)
    _estimator_args(p)
    p.add_argument("--include-joining", action="store_true", help="embed the joining in the JSON output")
    _common(p)

    p = sub.add_parser("dbar", help="block estimate of the d-bar distance (Hamming cost)")
    _data_args(p)
    p.add_argument("--k", type=int, default=1, help="block length (default: 1)")
    _common(p, "text", ("text", "json", "csv"))

    p = sub.add_parser("sample", help="sample a sequence from a Markov model")
    p.add_argument("--model", metavar="FILE", help="model JSON {tokens, transition, stationary?}")
    p.add_argument("--n", type=int, help="sequence length")
    _common(p, "text", ("text", "json"))

    p = sub.add_parser("curve", help="exact k-step cost curve between two models")
    p.add_argument("--x-model", metavar="FILE", help="X model JSON")
    p.add_argument("--y-model", metavar="FILE", help="Y model JSON")
    p.add_argument("--cost", default="hamming", help="'hamming' or a cost JSON file (default: hamming)")
    p.add_argument("--k-max", type=int, default=8, help="largest block length (default: 8)")
    p.add_argument("--eta", type=float, default=0.0, help="entropic regularization (default: 0)")
    _common(p)

    p = sub.add_parser("bound", help="evaluate the finite-sample error bound")
    p.add_argument("--phi-model", metavar="FILE", help="model JSON for the X process (and Y by default)")
    p.add_argument("--phi-model-y", metavar="FILE", help="model JSON for the Y process")
    p.add_argument("--k", type=int, help="block length")
    p.add_argument("--g", type=int, default=0, help="gap length (default: 0)")
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--p", type=float, default=1.0, help="exponent p in [1, 2) (default: 1)")
    p.add_argument("--C", type=float, default=1.0, help="sampling constant C > 0 (default: 1)")
    p.add_argument("--eta", type=float, default=0.0, help="entropic regularization (default: 0)")
    p.add_argument("--sup-cost", type=float, default=1.0, help="sup norm of the cost (default: 1)")
    _common(p, "text", ("text", "json", "csv"))

    p = sub.add_parser("experiment", help="run an experiment spec and write a CSV table")
    p.add_argument("--kind", help="iid_rate | markov_rate | eta_sweep | curve | admissibility | bound_check")
    p.add_argument("--name", help="experiment label (default: kind)")
    p.add_argument("--x-model", metavar="FILE", help="X model JSON")
    p.add_argument("--y-model", metavar="FILE", help="Y model JSON")
    p.add_argument("--x-data", metavar="FILE", help="X sequence file (eta_sweep)")
    p.add_argument("--y-data", metavar="FILE", help="Y sequence file (eta_sweep)")
    p.add_argument("--cost", default="hamming", help="'hamming' or a cost JSON file (default: hamming)")
    p.add_argument("--n-grid", type=_int_list, help="comma-separated, strictly increasing sample sizes")
    p.add_argument("--reps", type=int, default=1, help="replicates per cell (default: 1)")
    p.add_argument("--schedule", help="schedule rule, e.g. 'markov:alpha=0.5'")
    p.add_argument("--k", type=int, default=1, help="fixed block length (default: 1)")
    p.add_argument("--eta", type=_float_list, default=[0.0], help="comma-separated eta values (default: 0)")
    p.add_argument("--k-max", type=int, default=12, help="largest k for curve experiments (default: 12)")
    p.add_argument("--target-k", type=int, default=12, help="k of the curve target (default: 12)")
    p.add_argument("--p", type=float, default=1.0, help="bound exponent p (default: 1)")
    p.add_argument("--C", type=float, default=1.0, help="bound constant C (default: 1)")
    p.add_argument("--tol", type=float, default=1e-9, help="Sinkhorn tolerance (default: 1e-9)")
    p.add_argument("--cell", type=int, help="only recompute this cell index (prints its row)")
    p.add_argument("--rep", type=int, default=0, help="replicate index used with --cell (default: 0)")
    _common(p, "csv", ("csv",))

    p = sub.add_parser("export-joining", help="estimate and write the induced joining as JSON")
    _data_args(p)
    _estimator_args(p)
    p.add_argument("--gap-g", type=int, default=0, help="append a gap block of this length (default: 0)")
    p.add_argument("--gap-x", help="X token filling the gap (default: first X token)")
    p.add_argument("--gap-y", help="Y token filling the gap (default: first Y token)")
    _common(p, "json", ("json",))
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


_PATH_KEYS = {"x", "y", "alphabet", "x_alphabet", "y_alphabet", "cost", "model", "x_model", "y_model",
              "phi_model", "phi_model_y", "x_data", "y_data"}


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise SystemExit(2)
    if args.config:
        sub = _subparser(parser, args.command)
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
        dests = {a.dest: a for a in sub._actions}
        base = Path(args.config).resolve().parent
        defaults = {}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            if dest == "rng_seed":
                dest = "seed"
            if dest == "output":
                dest = "out"
            if dest not in dests or dest in ("help", "config"):
                raise InputError(f"unknown option in config: {key}")
            action = dests[dest]
            if dest in _PATH_KEYS and isinstance(val, str) and not Path(val).is_absolute():
                if (base / val).exists():
                    val = str(base / val)
            if isinstance(val, list) and action.type in (_int_list, _float_list):
                val = ",".join(str(v) for v in val)
            if isinstance(val, str) and action.type is not None:
                val = action.type(val)
            elif action.type in (_int_list, _float_list):
                val = action.type(str(val))
            defaults[dest] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise InputError(f"missing required option(s): {flags}")


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _load_pair(args):
    _need(args, "x", "y")
    shared = read_alphabet(args.alphabet) if args.alphabet else None
    xa = read_alphabet(args.x_alphabet) if args.x_alphabet else shared
    ya = read_alphabet(args.y_alphabet) if args.y_alphabet else shared
    return ingest_sequence(args.x, xa), ingest_sequence(args.y, ya)


def _estimate(args):
    x, y = _load_pair(args)
    c = load_cost(args.cost, x.alphabet, y.alphabet)
    cfg = EstimatorConfig(k=args.k, eta=args.eta, tol=args.tol, max_iter=args.max_iter,
                          rng_seed=args.seed)
    return estimate_oj(x, y, c, cfg)


def cmd_estimate(args) -> int:
    res = _estimate(args)
    obj = res.to_json(include_joining=args.include_joining)
    if args.format == "json":
        _emit(args, _dumps(obj))
    else:
        d = obj["diagnostics"]
        _emit(args, _csv(["cost_estimate", "k_used", "n_x", "n_y", "eta", "status"],
                         [[obj["cost_estimate"], obj["k_used"], obj["n_x"], obj["n_y"], obj["eta"],
                           d.get("status", "")]]))
    if res.diagnostics.get("status") not in ("optimal", "converged"):
        print(f"error: solver status {res.diagnostics.get('status')}", file=sys.stderr)
        return 1
    return 0


def cmd_dbar(args) -> int:
    x, y = _load_pair(args)
    val = dbar_estimate(x, y, args.k)
    if args.format == "text":
        _emit(args, f"{val!r}\n")
    elif args.format == "json":
        _emit(args, _dumps({"dbar": val, "k": args.k}))
    else:
        _emit(args, _csv(["dbar", "k"], [[val, args.k]]))
    return 0


def cmd_sample(args) -> int:
    _need(args, "model", "n")
    model = load_model(args.model)
    seq = sample(model, args.n, args.seed)
    if args.format == "json":
        _emit(args, _dumps({"tokens": seq.tokens(), "n": seq.n, "seed": args.seed}))
    elif args.out:
        write_sequence(seq, args.out)
    else:
        sys.stdout.write(" ".join(seq.tokens()) + "\n")
    return 0


def cmd_curve(args) -> int:
    _need(args, "x_model", "y_model")
    mx, my = load_model(args.x_model), load_model(args.y_model)
    c = load_cost(args.cost, mx.alphabet, my.alphabet)
    rows = k_step_cost_curve(mx, my, c, args.k_max, args.eta)
    if args.format == "json":
        _emit(args, _dumps({"eta": args.eta, "curve": [{"k": k, "value": v} for k, v in rows]}))
    else:
        _emit(args, _csv(["k", "eta", "value"], [[k, args.eta, v] for k, v in rows]))
    return 0


def cmd_bound(args) -> int:
    _need(args, "phi_model", "k", "n")
    mx = load_model(args.phi_model)
    my = load_model(args.phi_model_y) if args.phi_model_y else mx
    b = bound_for_models(mx, my, args.k, args.g, args.n, sup_cost=args.sup_cost, p=args.p, C=args.C,
                         eta=args.eta)
    if args.format == "text":
        _emit(args, f"{b.value!r}\n")
    elif args.format == "json":
        _emit(args, _dumps({"value": b.value, "status": b.status, "terms": b.terms}))
    else:
        _emit(args, _csv(["value", "status"], [[b.value, b.status]]))
    return 0 if b.status == "ok" else 1


_SPEC_KEYS = ("kind", "name", "x_model", "y_model", "x_data", "y_data", "cost", "n_grid", "reps",
              "schedule", "k", "eta", "k_max", "target_k", "p", "C", "tol")


def cmd_experiment(args) -> int:
    _need(args, "kind")
    obj = {k: getattr(args, k) for k in _SPEC_KEYS if getattr(args, k) is not None}
    obj["rng_seed"] = args.seed
    obj["n_grid"] = obj.get("n_grid") or []
    spec = ExperimentSpec.from_json(obj)
    if args.cell is not None:
        row = run_single(spec, args.cell, args.rep)
        _emit(args, format_rows([row]))
        return 0 if row["status"] == "ok" else 1
    if not args.out:
        res = run_experiment(spec, None)
        sys.stdout.write(format_rows(res.rows))
    else:
        res = run_experiment(spec, args.out)
    if res.n_failed:
        print(f"{res.n_failed} of {res.n_tasks} tasks failed", file=sys.stderr)
    return 1 if res.all_failed else 0


def cmd_export_joining(args) -> int:
    res = _estimate(args)
    joining = res.joining
    if args.gap_g > 0:
        xa, ya = joining.x_alphabet, joining.y_alphabet
        gx = xa.id_of(args.gap_x) if args.gap_x is not None else 0
        gy = ya.id_of(args.gap_y) if args.gap_y is not None else 0
        gap = GapSpec(args.gap_g, (gx,) * args.gap_g, (gy,) * args.gap_g)
        joining = BlockJoining(joining.block_law, gap, joining.eta)
    _emit(args, _dumps(joining.to_json()))
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "dbar": cmd_dbar,
    "sample": cmd_sample,
    "curve": cmd_curve,
    "bound": cmd_bound,
    "experiment": cmd_experiment,
    "export-joining": cmd_export_joining,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OptJoinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
