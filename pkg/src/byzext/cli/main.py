"""Command-line entry point: ``byzext <command> [options]``."""

from __future__ import annotations

import argparse
import sys
import time
from collections import Counter
from pathlib import Path

from ..epistemics import FormulaSyntaxError
from ..epistemics.checks import CLAIM_KINDS
from ..extensions import (
    LETTER_OF,
    MATRIX_ORDER,
    compatible,
    composability,
    lint_class,
    parse_extension,
)
from ..runner import HOLDS, PENDING, VIOLATED, BudgetExceeded
from .dispatch import build_system, run_brainvat, run_check, run_formula, run_lockstep_brainvat
from .report import (
    EXIT_BUDGET,
    EXIT_SCENARIO,
    EXIT_USAGE,
    FAIL,
    PASS,
    CheckResult,
    Report,
)
from .scenario import BUNDLED, ScenarioError, load_scenario


class UsageError(ValueError):
    pass


def _common(p, scenario_required=True):
    p.add_argument("--scenario", required=scenario_required,
                   help=f"scenario file, or a bundled name: {', '.join(BUNDLED)}")
    p.add_argument("--seed", type=int, help="sample runs with this seed instead of enumerating all")
    p.add_argument("--exhaustive", action="store_true", help="enumerate every run (overrides the file)")
    p.add_argument("--horizon", type=int, help="override the scenario horizon")
    p.add_argument("--agents", type=int, help="override the number of agents")
    p.add_argument("--budget", type=int, help="maximum number of runs to enumerate")
    _output(p)


def _output(p):
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("human", "records"), default="human")
    p.add_argument("--allow-pending", action="store_true", help="treat pending verdicts as passing")
    p.add_argument("--timing", action="store_true", help="append wall-clock time to the human summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byzext", description="Byzantine run systems, extensions and knowledge checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="enumerate the run system of a scenario")
    _common(p)
    p.add_argument("--show", type=int, default=10, help="runs listed in human output")

    p = sub.add_parser("check", help="run the scenario's checks and ad hoc formulas")
    _common(p)
    p.add_argument("--only", action="append", default=[], help="run only checks with this name or kind")
    p.add_argument("--formula", action="append", default=[], help="formula to evaluate over the system")
    p.add_argument("--expect", choices=("valid", "satisfiable", "unsatisfiable"), default="valid")

    p = sub.add_parser("brainvat", help="confirm what a brain-in-a-vat agent cannot know")
    _common(p)
    p.add_argument("--claim", choices=CLAIM_KINDS + ("all",), default="all")
    p.add_argument("--hap", help="local hap for occurrence claims, e.g. tick or send(2,m)")
    p.add_argument("--t", type=int, help="only this time (default: every time up to the horizon)")
    p.add_argument("--brain", type=int, default=1)
    p.add_argument("--other", "--others", dest="other", type=int, help="the other agent in other-* claims")
    p.add_argument("--run", type=int, help="only this source run")
    p.add_argument("--variant", choices=("sync", "lockstep"), default="sync")

    p = sub.add_parser("compose", help="compose extensions and search for a compatible context")
    p.add_argument("extensions", nargs="+", help="extensions, outermost first, e.g. B S or 'SC(all)'")
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--budget", type=int, default=10_000)
    _output(p)

    p = sub.add_parser("matrix", help="composability of implementation classes")
    p.add_argument("classes", nargs="*", help="left class and top class; omit for the whole table")
    _output(p)
    return parser


def _scenario(args):
    return load_scenario(args.scenario, agents=args.agents, horizon=args.horizon, seed=args.seed,
                         exhaustive=args.exhaustive, budget=args.budget)


def _header(sc, system):
    counts = Counter(system.verdicts)
    return {
        "agents": sc.n,
        "horizon": system.horizon,
        "extension": sc.extension,
        "mode": system.mode,
        "runs": len(system.runs),
        "admissibility": {HOLDS: counts[HOLDS], PENDING: counts[PENDING], VIOLATED: counts[VIOLATED]},
    }


def cmd_enumerate(args) -> Report:
    sc = _scenario(args)
    ctx, system = build_system(sc)
    rep = Report("enumerate", sc.name, _header(sc, system))
    rep.records = [{"record": "run", **r} for r in system.to_records()]
    for k, (run, v) in enumerate(zip(system.runs[: args.show], system.verdicts)):
        final = run.states[-1]
        rep.lines.append(f"  run {k} [{v}]: " + " | ".join(str(h) for h in final.locals))
    if len(system.runs) > args.show:
        rep.lines.append(f"  ... {len(system.runs) - args.show} more (use --format records for all)")
    ok = bool(system.admissible_runs())
    rep.add(CheckResult("enumeration", "enumerate", "run-system", PASS if ok else FAIL, system.horizon,
                        system.mode, f"{len(system.runs)} runs, {len(system.admissible_runs())} not refuted", {}))
    return rep


def cmd_check(args) -> Report:
    sc = _scenario(args)
    ctx, system = build_system(sc)
    rep = Report("check", sc.name, _header(sc, system))
    specs = [c for c in sc.checks if not args.only or c.get("name", c["kind"]) in args.only or c["kind"] in args.only]
    if args.only and not specs:
        raise UsageError(f"no check matches {args.only}; available: "
                         f"{sorted({c.get('name', c['kind']) for c in sc.checks})}")
    for spec in specs:
        rep.add(run_check(sc, ctx, system, spec))
    for k, text in enumerate(args.formula):
        rep.add(run_formula(sc, ctx, system, {"kind": "formula", "name": f"formula-{k + 1}", "formula": text,
                                              "expect": args.expect}))
    if not rep.checks:
        raise UsageError("the scenario lists no checks and no --formula was given")
    return rep


def cmd_brainvat(args) -> Report:
    sc = _scenario(args)
    ctx, system = build_system(sc)
    rep = Report("brainvat", sc.name, _header(sc, system))
    if args.t is not None and not 0 <= args.t <= system.horizon:
        raise UsageError(f"--t must lie in 0..{system.horizon}")
    name = f"brainvat-{args.claim}" if args.variant == "sync" else "brainvat-lockstep"
    spec = {"kind": "brainvat", "name": name, "brain": args.brain}
    if args.t is not None:
        spec["times"] = [args.t]
    if args.variant == "lockstep":
        spec["kind"] = "lockstep-brainvat"
        rep.add(run_lockstep_brainvat(sc, ctx, system, spec))
        return rep
    if args.claim != "all":
        spec["claims"] = [args.claim]
    if args.hap:
        spec["hap"] = args.hap
    if args.other is not None:
        spec["other"] = args.other
    if args.run is not None:
        spec["run"] = args.run
    rep.add(run_brainvat(sc, ctx, system, spec))
    return rep


def cmd_compose(args) -> Report:
    exts = [parse_extension(e, args.agents) for e in args.extensions]
    res = compatible(exts, args.agents, args.horizon, args.budget)
    comp = res.extension
    lint = lint_class(comp)
    header = {
        "extension": comp.name,
        "class": comp.impl_class,
        "event_filter": comp.template.event_filter.name,
        "action_filter": comp.template.action_filter.name,
        "admissibility": comp.admissibility.name,
        "pair_constraints": [c.name for c in comp.pairs],
        "safety": comp.safety.name if comp.safety else None,
    }
    rep = Report("compose", None, header)
    if len(exts) == 2:
        a, b = exts
        cell = composability(a.impl_class, b.impl_class)
        rep.header["composability"] = f"{a.impl_class} x {b.impl_class}: {cell}"
    for w in lint:
        rep.lines.append(f"  lint: {w}")
    summary = (f"compatible via the {res.witness} context ({res.runs} admissible runs to horizon {args.horizon})"
               if res.compatible else "no witness context found: " + "; ".join(res.reasons))
    rep.add(CheckResult("compatibility", "compose", "extension/compatibility", PASS if res.compatible else FAIL,
                        args.horizon, "witness search", summary, {"reasons": res.reasons, "lint": lint}))
    return rep


def cmd_matrix(args) -> Report:
    rep = Report("matrix")
    if len(args.classes) not in (0, 2):
        raise UsageError("matrix takes no classes or exactly two (left, top)")
    for c in args.classes:
        if c not in MATRIX_ORDER:
            raise UsageError(f"unknown implementation class {c!r}; known: {', '.join(MATRIX_ORDER)}")
    if args.classes:
        left, top = args.classes
        cell = composability(left, top)
        rep.records.append({"record": "cell", "left": left, "top": top, "cell": LETTER_OF[cell], "meaning": cell})
        rep.lines.append(LETTER_OF[cell] or ".")
        return rep
    width = max(map(len, MATRIX_ORDER))
    rep.lines.append(" " * (width + 1) + " ".join(f"{k:>2}" for k in range(1, len(MATRIX_ORDER) + 1)))
    for k, left in enumerate(MATRIX_ORDER, start=1):
        row = [LETTER_OF[composability(left, top)] or "." for top in MATRIX_ORDER]
        rep.records.append({"record": "row", "left": left, "cells": "".join(row)})
        rep.lines.append(f"{left:>{width}} " + " ".join(f"{c:>2}" for c in row) + f"  ({k})")
    return rep


COMMANDS = {
    "enumerate": cmd_enumerate,
    "check": cmd_check,
    "brainvat": cmd_brainvat,
    "compose": cmd_compose,
    "matrix": cmd_matrix,
}


def run_cli(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run the command, write the report; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        rep = COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=stderr)
        return EXIT_SCENARIO
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=stderr)
        return EXIT_BUDGET
    except (UsageError, FormulaSyntaxError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    text = rep.render(args.format)
    if args.timing and args.format == "human":
        text += f"elapsed: {time.perf_counter() - start:.2f}s\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return rep.exit_code(args.allow_pending)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
