"""Command line: ``paw solve | simulate | lottery | gen | sweep``.

Every command writes its primary output to ``--output`` plus a sibling
``<stem>.manifest.json`` recording inputs, configuration, outputs, verdicts
and wall-clock time.  Exit codes: 0 success, 2 bad input, 3 cap exceeded,
4 no convergence, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import random
import sys
import tempfile
import time
import warnings
from fractions import Fraction
from pathlib import Path

from paw import __version__
from paw.approx import grid_of, solve_approx
from paw.dynamics import (
    SimConfig,
    check_independence,
    min_equilibrium,
    simulate,
    summary,
    summary_json,
    verify_trace,
)
from paw.errors import CapExceeded, InfeasibleBudget, InputError, StructureError
from paw.exact import (
    DEFAULT_EXACT_CAP,
    DEFAULT_ORACLE_CAP,
    brute_force_oracle,
    load_knapsack,
    reduce_knapsack,
    solve_exact,
)
from paw.generate import independent_instance, random_instance, random_knapsack, unanimous_instance
from paw.lottery import (
    Contract,
    LotteryMenu,
    dominance_check,
    equilibrium_menu,
    load_curve,
    load_menu,
    random_concave_curve,
    random_menu,
)
from paw.model import as_fraction, check_equilibrium, evaluate, load_instance

EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_NO_CONVERGENCE, EXIT_VERIFY = 0, 2, 3, 4, 5


# -- helpers ---------------------------------------------------------------------

def _cap(env: str, flag: int | None, default: int) -> int:
    if flag is not None:
        return flag
    raw = os.environ.get(env)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"environment variable {env} must be an integer, got {raw!r}") from None


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stem(path: Path) -> Path:
    return path.with_suffix("") if path.suffix in (".json", ".csv") else path


def _sibling(path: Path, tag: str) -> Path:
    stem = _stem(path)
    return stem.with_name(f"{stem.name}.{tag}")


def _dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _rows_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _flat_csv(data: dict) -> str:
    """``field,value`` rows; nested dicts become dotted keys, lists are joined with spaces."""
    rows = [["field", "value"]]

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for key in sorted(obj):
                walk(f"{prefix}.{key}" if prefix else key, obj[key])
        elif isinstance(obj, list):
            rows.append([prefix, " ".join(str(x) for x in obj)])
        else:
            rows.append([prefix, obj])

    walk("", data)
    return _rows_csv(rows)


def _render(data: dict, fmt: str) -> str:
    return _dumps(data) if fmt == "json" else _flat_csv(data)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(args, command: str, inputs, config: dict, outputs, verdicts: dict, started: float) -> None:
    data = {
        "command": command,
        "version": __version__,
        "inputs": [{"path": str(p), "sha256": _digest(p)} for p in inputs],
        "config": config,
        "outputs": [str(p) for p in outputs],
        "verdicts": verdicts,
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
    }
    _write_atomic(_sibling(args.output, "manifest.json"), _dumps(data))


def _fraction_arg(text: str) -> Fraction:
    try:
        return as_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _quotas_arg(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"quotas must be comma-separated integers, got {text!r}") from None


# -- commands ------------------------------------------------------------------------

def cmd_solve(args) -> int:
    started = time.perf_counter()
    instance = load_instance(args.instance)
    config = {"mode": args.mode, "format": args.format}
    if args.mode == "exact":
        cap = _cap("PAW_EXACT_CAP", args.cap, DEFAULT_EXACT_CAP)
        config["cap"] = cap
        assignment, report = solve_exact(instance, cap=cap)
        factor = Fraction(1)
    else:
        if args.epsilon is None or args.epsilon <= 0:
            raise InputError("--epsilon: approx mode needs a positive epsilon")
        grid = grid_of(instance.m, args.epsilon)
        budget = Fraction(instance.budget)
        if args.strict_budget:
            budget = budget / (1 + args.epsilon)
        config.update(epsilon=_frac(args.epsilon), strict_budget=args.strict_budget, grid=list(grid.grid))
        assignment, report = solve_approx(instance, grid, budget=budget)
        factor = Fraction(1) if args.strict_budget else 1 + args.epsilon

    violations = check_equilibrium(instance, assignment, budget_factor=factor)
    recheck = evaluate(instance, assignment)
    ok = not violations and recheck == report
    data = {
        "mode": args.mode,
        "social_welfare": _frac(report.social_welfare),
        "total_cost": report.total_cost,
        "budget": instance.budget,
        "budget_factor": _frac(factor),
        "waiting_times": [_frac(w) for w in assignment.waiting_times],
        "assignment": list(assignment.assignment),
        "quotas": list(assignment.quotas),
        "utilities": [_frac(u) for u in report.utilities],
        "verified": ok,
        "violations": [str(v) for v in violations],
    }
    outputs = []
    if ok:
        _write_atomic(args.output, _dumps(assignment.to_dict()))
        outputs.append(args.output)
    report_path = _sibling(args.output, f"report.{args.format}")
    _write_atomic(report_path, _render(data, args.format))
    outputs.append(report_path)
    _manifest(args, "solve", [args.instance], config, outputs, {"verified": ok}, started)
    print(f"SW = {data['social_welfare']}, cost = {report.total_cost}, w = ({', '.join(data['waiting_times'])})")
    if not ok:
        print("verification failed: " + "; ".join(data["violations"]), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    instance = load_instance(args.instance)
    try:
        config = SimConfig(
            dt=args.dt, t_max=args.t_max, tolerance=args.tolerance, hold=args.hold,
            split=args.split, seed=args.seed,
        )
    except StructureError as exc:
        raise InputError(str(exc)) from exc
    if len(args.quotas) != instance.k:
        raise InputError(f"--quotas: expected {instance.k} entries, got {len(args.quotas)}")
    if any(q <= 0 for q in args.quotas) or sum(args.quotas) < instance.m:
        raise InputError("--quotas: entries must be positive and sum to at least the number of patients")

    randomized = instance.k * instance.m > 24
    independent = check_independence(instance, randomized=randomized, seed=args.seed)
    eq = min_equilibrium(instance, args.quotas)
    trace = simulate(instance, args.quotas, config, eq)
    report = verify_trace(trace, eq, args.slack, instance=instance)
    data = summary(trace, report, eq, independent)
    data["independence_check"] = "randomized" if randomized else "exact"
    if not independent:
        data["warning"] = "valuations are dependent; convergence guarantees do not apply"

    summary_path = _sibling(args.output, "summary.json")
    _write_atomic(args.output, trace.to_csv())
    _write_atomic(summary_path, summary_json(data))
    verdicts = {"converged": trace.converged_at is not None, "checks_passed": report.passed}
    cfg = {
        "dt": args.dt, "t_max": args.t_max, "tolerance": args.tolerance, "hold": args.hold,
        "split": args.split, "seed": args.seed, "slack": args.slack, "quotas": list(args.quotas),
    }
    _manifest(args, "simulate", [args.instance], cfg, [args.output, summary_path], verdicts, started)
    print(f"converged_at = {trace.converged_at}, bound = {trace.bound}, checks passed = {report.passed}")
    if trace.converged_at is None:
        return EXIT_NO_CONVERGENCE
    if independent and (not report.passed or trace.converged_at > trace.bound):
        return EXIT_VERIFY
    return EXIT_OK


def cmd_lottery(args) -> int:
    started = time.perf_counter()
    curve = load_curve(args.curve)
    inputs = [args.curve]
    if args.menu is not None:
        menu = load_menu(args.menu)
        inputs.append(args.menu)
        source = "menu"
    elif args.equilibrium is not None:
        _check_budget(args.equilibrium, "--equilibrium")
        menu = equilibrium_menu(curve, args.equilibrium)
        source = f"equilibrium B={_frac(args.equilibrium)}"
    else:
        _check_budget(args.randomized, "--randomized")
        menu = LotteryMenu((Contract(args.randomized, 0),))
        source = f"randomized B={_frac(args.randomized)}"
    rep = dominance_check(curve, menu)
    data = rep.to_dict()
    data["menu"] = menu.to_dict()
    data["source"] = source
    _write_atomic(args.output, _render(data, args.format))
    _manifest(args, "lottery", inputs, {"source": source, "format": args.format}, [args.output],
              {"dominance": data["dominance"]}, started)
    print(f"SW_r = {data['sw_r']}, SW_L = {data['sw_l']}, B' = {data['realized_budget']}, {data['dominance']}")
    return EXIT_VERIFY if rep.violated else EXIT_OK


def _check_budget(b: Fraction, flag: str) -> None:
    if not 0 < b < 1:
        raise InputError(f"{flag}: budget must lie in (0, 1), got {_frac(b)}")


def cmd_gen(args) -> int:
    started = time.perf_counter()
    rng = random.Random(args.seed)
    inputs = []
    if args.kind == "knapsack":
        if args.source is not None:
            kp = load_knapsack(args.source)
            inputs.append(args.source)
        else:
            kp = random_knapsack(rng, args.items, args.max_value, args.max_cost)
        instance = reduce_knapsack(kp)
    elif args.source is not None:
        raise InputError("--from only applies to kind=knapsack")
    elif args.kind == "random":
        instance = random_instance(rng, args.k, args.m, args.max_value, args.max_cost)
    elif args.kind == "unanimous":
        instance = unanimous_instance(rng, args.k, args.m, args.max_value, args.max_cost)
    else:
        instance = independent_instance(rng, args.k, args.m, args.max_cost)
    verdicts = {}
    if args.kind == "independent" and instance.k * instance.m <= 24:
        verdicts["independent"] = check_independence(instance)
        if not verdicts["independent"]:
            print("error: generated instance failed the independence check", file=sys.stderr)
            return EXIT_VERIFY
    _write_atomic(args.output, _dumps(instance.to_dict()))
    cfg = {"kind": args.kind, "k": args.k, "m": args.m, "items": args.items, "seed": args.seed,
           "max_value": args.max_value, "max_cost": args.max_cost}
    _manifest(args, "gen", inputs, cfg, [args.output], verdicts, started)
    print(f"wrote {instance.k} hospitals, {instance.m} patients, budget {instance.budget} to {args.output}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Seeded randomized checks of the main guarantees; any violation exits 5."""
    started = time.perf_counter()
    rng = random.Random(args.seed)
    rows = [["run", "detail", "ok"]]
    failures = 0
    for run in range(args.count):
        if args.kind == "lottery":
            curve, menu = random_concave_curve(rng), random_menu(rng)
            rep = dominance_check(curve, menu)
            ok = not rep.violated
            detail = f"SW_r={_frac(rep.sw_randomized)} SW_L={_frac(rep.sw_lottery)} B'={_frac(rep.realized_budget)}"
        else:
            instance = random_instance(rng, rng.randint(1, 3), rng.randint(1, 6), 20, 10)
            try:
                best = brute_force_oracle(instance, _cap("PAW_ORACLE_CAP", None, DEFAULT_ORACLE_CAP))
            except InfeasibleBudget:
                rows.append([run, "infeasible budget", True])
                continue
            if args.kind == "oracle":
                _, rep = solve_exact(instance, _cap("PAW_EXACT_CAP", None, DEFAULT_EXACT_CAP))
                ok = rep.social_welfare == best
            else:
                eps = args.epsilon
                assignment, rep = solve_approx(instance, grid_of(instance.m, eps))
                ok = (
                    rep.social_welfare >= best
                    and rep.total_cost <= (1 + eps) * instance.budget
                    and not check_equilibrium(instance, assignment, budget_factor=1 + eps)
                )
            detail = f"SW={_frac(rep.social_welfare)} oracle={_frac(best)}"
        failures += not ok
        rows.append([run, detail, ok])
    if args.format == "csv":
        text = _rows_csv(rows)
    else:
        text = _dumps({"kind": args.kind, "count": args.count, "failures": failures,
                       "runs": [{"run": r, "detail": d, "ok": o} for r, d, o in rows[1:]]})
    _write_atomic(args.output, text)
    cfg = {"kind": args.kind, "count": args.count, "seed": args.seed, "format": args.format}
    if args.kind == "approx":
        cfg["epsilon"] = _frac(args.epsilon)
    _manifest(args, "sweep", [], cfg, [args.output], {"failures": failures}, started)
    print(f"{args.count} runs, {failures} failures")
    return EXIT_VERIFY if failures else EXIT_OK


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paw", description="Provision-after-Wait solvers and simulators.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def output(p, what):
        p.add_argument("-o", "--output", type=Path, required=True, help=what)

    p = sub.add_parser("solve", help="optimal (exact) or epsilon-deficit (approx) equilibrium assignment")
    p.add_argument("instance", type=Path)
    p.add_argument("--mode", choices=("exact", "approx"), default="exact")
    p.add_argument("--epsilon", type=_fraction_arg, help="budget deficit for approx mode, e.g. 0.5 or 1/2")
    p.add_argument("--strict-budget", action="store_true",
                   help="approx mode: run with budget B/(1+eps) so the output stays within B (may lose welfare)")
    p.add_argument("--cap", type=int, help="max quota vectors for exact mode (env PAW_EXACT_CAP)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    output(p, "assignment JSON; the report and manifest are written next to it")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="waiting-time dynamics for fixed quotas")
    p.add_argument("instance", type=Path)
    p.add_argument("--quotas", type=_quotas_arg, required=True, help="comma-separated, e.g. 2,1")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--t-max", type=float, help="horizon (default: convergence bound plus hold)")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--hold", type=float, default=1.0, help="time simulated after convergence")
    p.add_argument("--split", choices=("equal", "random"), default="equal", help="tie splitting")
    p.add_argument("--slack", type=float, help="trace check slack (default 2*dt)")
    p.add_argument("--seed", type=int, default=0)
    output(p, "trace CSV; the summary and manifest are written next to it")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lottery", help="compare a contract menu with randomized assignment")
    p.add_argument("--curve", type=Path, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--menu", type=Path)
    group.add_argument("--equilibrium", type=_fraction_arg, metavar="B", help="equilibrium menu for budget B")
    group.add_argument("--randomized", type=_fraction_arg, metavar="B", help="single contract (B, 0)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    output(p, "comparison report")
    p.set_defaults(func=cmd_lottery)

    p = sub.add_parser("gen", help="write a seeded instance file")
    p.add_argument("kind", choices=("random", "knapsack", "unanimous", "independent"))
    p.add_argument("--k", type=int, default=3, help="hospitals")
    p.add_argument("--m", type=int, default=4, help="patients")
    p.add_argument("--items", type=int, default=5, help="knapsack items")
    p.add_argument("--from", dest="source", type=Path, help="knapsack JSON to reduce instead of a random one")
    p.add_argument("--max-value", type=int, default=20)
    p.add_argument("--max-cost", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    output(p, "instance JSON")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sweep", help="seeded randomized verification runs")
    p.add_argument("kind", choices=("lottery", "oracle", "approx"))
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--epsilon", type=_fraction_arg, default=Fraction(1, 2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    output(p, "sweep report")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            return args.func(args)
    except (InputError, StructureError, InfeasibleBudget) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_INPUT
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
