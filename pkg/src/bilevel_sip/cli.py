"""Command-line front end.

Every command reads an instance file and writes JSON (reports) or CSV (tables)
to ``--output`` or standard output.  Exit codes: 0 success, 1 invalid input,
2 infeasible decision, 3 resource guard tripped.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .feasibility import fz_contains, fz_grid_scan
from .instance_io import Problem, instance_hash, load_problem, number_to_json
from .lower_level import value_curve
from .measures import Measure, dirac, exact_capable
from .model import INF, ValidationError, to_vector
from .optimize import solve_grid, solve_pattern
from .regions import DEFAULT_CELL_LIMIT, ResourceGuardError, build_partition, merge_cells
from .risk import (
    InfeasibleDecisionError,
    RiskSpec,
    evaluate_risk,
    mc_outcome_distribution,
    outcome_distribution,
    q_rho_mc,
)
from .stability import continuity_diagnostic, empirical_sequence, holder_fit

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_GUARD = 0, 1, 2, 3


class InfeasibleResult(Exception):
    """A well-formed query whose answer is 'infeasible'; the report is still written."""


# --- argument parsing ------------------------------------------------------------


def _vector(text: str) -> tuple[Fraction, ...]:
    try:
        return to_vector(part for part in text.split(",") if part.strip())
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _box(text: str) -> list[tuple[Fraction, Fraction]]:
    """``"lo:hi,lo:hi"`` -> list of interval bounds."""
    try:
        pairs = [tuple(to_vector(axis.split(":"))) for axis in text.split(",")]
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"expected lo:hi per axis, got {text!r}")
    return pairs


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilevel-sip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("instance", type=Path, help="instance JSON file")
        p.add_argument("-o", "--output", type=Path, help="output file (default: stdout)")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        p.add_argument("--max-cells", type=int, default=DEFAULT_CELL_LIMIT, help="partition size guard")
        return p

    def risk_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--risk", type=RiskSpec.parse, help="e.g. expectation, cvar:0.95, excess_probability:0.5")
        p.add_argument("--compose", choices=("inside", "outside"), help="where the leader cost enters the risk")

    p = command("partition", "regions as JSON (active set, values, cells); --map adds a CSV cell map")
    p.add_argument("--map", type=Path, help="CSV of cell corners and region ids (s = 2 only)")

    p = command("eval", "outcome law and risk value at a decision, as JSON")
    p.add_argument("--x", type=_vector, required=True)
    risk_flags(p)
    p.add_argument("--mc", type=int, metavar="COUNT", help="use COUNT Monte Carlo samples")

    p = command("solve", "minimize the risk-averse objective; SolveReport JSON, optional trace CSV")
    p.add_argument("--method", choices=("grid", "pattern"), default="grid")
    p.add_argument("--box", type=_box, help="grid box lo:hi,lo:hi (grid method)")
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--x0", type=_vector, help="start point (pattern method)")
    p.add_argument("--step", default="0.1", help="initial pattern step")
    p.add_argument("--budget", type=int, default=10**4)
    p.add_argument("--mc", type=int, metavar="COUNT", help="Monte Carlo objective with COUNT samples")
    p.add_argument("--trace", type=Path, help="write the evaluation trace as CSV")
    risk_flags(p)

    p = command("feasible", "membership of a decision in X and the induced feasible set")
    p.add_argument("--x", type=_vector, required=True)

    p = command("fz-map", "CSV grid scan of the induced feasible set")
    p.add_argument("--box", type=_box, required=True)
    p.add_argument("--resolution", type=int, default=21)

    p = command("phi-curve", "CSV of psi and phi along a segment of right-hand sides")
    p.add_argument("--start", type=_vector, required=True)
    p.add_argument("--end", type=_vector, required=True)
    p.add_argument("--samples", type=int, default=101)

    p = command("stability", "CSV continuity table for empirical measures of growing size")
    p.add_argument("--x", type=_vector, required=True)
    p.add_argument("--sizes", type=_int_list, default=[100, 1000, 10000])
    p.add_argument("--mc", type=int, default=10**5, metavar="COUNT", help="samples when the exact path is unavailable")
    risk_flags(p)

    p = command("holder", "log-log table and Hölder exponent fit at a decision")
    p.add_argument("--x0", type=_vector, required=True)
    p.add_argument("--radii", type=_vector, default=_vector("0.16,0.08,0.04,0.02"))
    p.add_argument("--table", type=Path, help="write the (r, dQ) table as CSV")
    p.add_argument("--mc", type=int, metavar="COUNT", help="Monte Carlo objective with COUNT samples")
    risk_flags(p)

    p = command("mc", "Monte Carlo estimate of the risk-averse objective, as JSON")
    p.add_argument("--x", type=_vector, required=True)
    p.add_argument("--count", type=int, default=10**5)
    p.add_argument("--workers", type=int, default=1)
    risk_flags(p)
    return parser


# --- formatting ----------------------------------------------------------------


def _num(v):
    """JSON form of an exact or extended number."""
    if isinstance(v, Fraction):
        return number_to_json(v)
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _vec(v) -> list:
    return [_num(c) for c in v]


def _csv(rows: list[list], header: list[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def _cell(v) -> str:
    if isinstance(v, Fraction):
        return repr(float(v)) if v.denominator != 1 else str(v.numerator)
    if isinstance(v, float):
        return "inf" if v == INF else repr(v)
    return str(v)


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _json(report: dict, problem: Problem) -> str:
    return json.dumps({"instance_hash": instance_hash(problem), **report}, indent=1) + "\n"


def _risk(problem: Problem, args) -> RiskSpec:
    risk = args.risk or problem.risk
    if args.compose:
        risk = RiskSpec(**{**risk.to_dict(), "compose": args.compose})
    return risk


def _measure(problem: Problem) -> Measure:
    if problem.measure is not None:
        return problem.measure
    return dirac([0] * problem.instance.s)


# --- commands ------------------------------------------------------------------


def cmd_partition(problem: Problem, args) -> str:
    fp = problem.instance.follower
    p = build_partition(fp, max_cells=args.max_cells)
    regions = [
        {
            "id": k,
            "active_set": sorted(r.active_set),
            "optimal_set": sorted(r.optimal_set),
            "kappa_psi": _num(r.kappa_psi),
            "kappa_phi": _num(r.kappa_phi),
            "cells": [{"lo": _vec(c.lo), "hi": _vec(c.hi)} for c in merge_cells(r.cells)],
        }
        for k, r in enumerate(p.regions)
    ]
    if args.map is not None:
        if fp.s != 2:
            raise ValidationError("--map needs s = 2")
        rows = []
        for index in np.ndindex(p.owner.shape):
            cell = p.grid.cell(index)
            rows.append([cell.lo[0], cell.hi[0], cell.lo[1], cell.hi[1], int(p.owner[index])])
        _emit(_csv(rows, ["t1_lo", "t1_hi", "t2_lo", "t2_hi", "region"]), args.map)
    report = {
        "thresholds": [_vec(th) for th in p.grid.thresholds],
        "cell_count": p.grid.cell_count,
        "regions": regions,
    }
    return _json(report, problem)


def _law_json(law) -> dict:
    return {"values": list(law.values), "probs": list(law.probs), "source": law.source}


def cmd_eval(problem: Problem, args) -> str:
    inst, measure, risk = problem.instance, _measure(problem), _risk(problem, args)
    inside = risk.compose == "inside"
    if args.mc is not None:
        law = mc_outcome_distribution(inst, measure, args.x, args.mc, args.seed, include_leader_cost=inside)
    else:
        p = build_partition(inst.follower, max_cells=args.max_cells)
        law = outcome_distribution(inst, p, measure, args.x, include_leader_cost=inside)
    value = evaluate_risk(law, risk) + (0.0 if inside else float(inst.leader_cost(args.x)))
    report = {
        "x": _vec(args.x),
        "risk": str(risk),
        "compose": risk.compose,
        "distribution": _law_json(law),
        "value": value,
    }
    return _json(report, problem)


def _report_json(report) -> dict:
    return {
        "status": report.status,
        "best_x": None if report.best_x is None else _vec(report.best_x),
        "best_value": _num(report.best_value),
        "evaluations": report.evaluations,
    }


def cmd_solve(problem: Problem, args) -> str:
    inst, measure, risk = problem.instance, _measure(problem), _risk(problem, args)
    p = build_partition(inst.follower, max_cells=args.max_cells)
    if args.method == "grid":
        if args.box is None:
            raise ValidationError("--box is required for the grid method")
        report = solve_grid(inst, p, measure, risk, args.box, args.resolution, args.mc, args.seed)
    else:
        if args.x0 is None:
            raise ValidationError("--x0 is required for the pattern method")
        report = solve_pattern(
            inst, p, measure, risk, args.x0, args.step, budget=args.budget, mc_count=args.mc, seed=args.seed
        )
    if args.trace is not None:
        rows = [[*x, v] for x, v in report.trace]
        _emit(_csv(rows, [f"x{j + 1}" for j in range(inst.n)] + ["value"]), args.trace)
    text = _json({"method": args.method, "risk": str(risk), **_report_json(report)}, problem)
    if report.status == "infeasible":
        raise InfeasibleResult(text)
    return text


def cmd_feasible(problem: Problem, args) -> str:
    inst = problem.instance
    p = build_partition(inst.follower, max_cells=args.max_cells)
    verdict = fz_contains(inst, p, _measure(problem), args.x)
    report = {
        "x": _vec(args.x),
        "in_X": verdict.in_X,
        "in_FZ": verdict.in_FZ,
        "witness": None if verdict.witness is None else _vec(verdict.witness),
    }
    text = _json(report, problem)
    if not verdict.feasible:
        raise InfeasibleResult(text)
    return text


def cmd_fz_map(problem: Problem, args) -> str:
    inst = problem.instance
    p = build_partition(inst.follower, max_cells=args.max_cells)
    scan = fz_grid_scan(inst, p, _measure(problem), args.box, args.resolution)
    rows = [[*x, int(v.in_X), int(v.in_FZ)] for x, v in scan]
    return _csv(rows, [f"x{j + 1}" for j in range(inst.n)] + ["in_X", "in_FZ"])


def cmd_phi_curve(problem: Problem, args) -> str:
    fp = problem.instance.follower
    rows = [[lam, *t, psi, phi] for lam, t, psi, phi in value_curve(fp, args.start, args.end, args.samples)]
    return _csv(rows, ["lambda"] + [f"t{j + 1}" for j in range(fp.s)] + ["psi", "phi"])


def cmd_stability(problem: Problem, args) -> str:
    inst, measure, risk = problem.instance, _measure(problem), _risk(problem, args)
    p = build_partition(inst.follower, max_cells=args.max_cells)
    sequence = empirical_sequence(measure, args.sizes, seed=args.seed)
    table = continuity_diagnostic(inst, p, risk, args.x, sequence, mc_count=args.mc, seed=args.seed)
    for warning in table.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    rows = [[kind, int(n), row.q_deviation, 3 / math.sqrt(n)] for row in table.rows for kind, n in [row.label]]
    return _csv(rows, ["kind", "n", "q_deviation", "three_over_sqrt_n"])


def cmd_holder(problem: Problem, args) -> str:
    inst, measure, risk = problem.instance, _measure(problem), _risk(problem, args)
    p = build_partition(inst.follower, max_cells=args.max_cells)
    fit = holder_fit(inst, p, measure, risk, args.x0, args.radii, mc_count=args.mc, seed=args.seed)
    if args.table is not None:
        _emit(_csv([list(row) for row in fit.table], ["r", "dQ"]), args.table)
    report = {
        "x0": _vec(args.x0),
        "exponent": fit.exponent,
        "constant": fit.constant,
        "bounded_density": fit.bounded_density,
        "exact": args.mc is None and exact_capable(measure),
        "table": [list(row) for row in fit.table],
    }
    return _json(report, problem)


def cmd_mc(problem: Problem, args) -> str:
    inst, measure, risk = problem.instance, _measure(problem), _risk(problem, args)
    estimate, std_error = q_rho_mc(inst, measure, args.x, risk, args.count, args.seed, workers=args.workers)
    report = {
        "x": _vec(args.x),
        "risk": str(risk),
        "count": args.count,
        "seed": args.seed,
        "estimate": estimate,
        "std_error": std_error,
    }
    return _json(report, problem)


COMMANDS = {
    "partition": cmd_partition,
    "eval": cmd_eval,
    "solve": cmd_solve,
    "feasible": cmd_feasible,
    "fz-map": cmd_fz_map,
    "phi-curve": cmd_phi_curve,
    "stability": cmd_stability,
    "holder": cmd_holder,
    "mc": cmd_mc,
}


def run(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run the command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        problem = load_problem(args.instance)
        _emit(COMMANDS[args.command](problem, args), args.output)
    except InfeasibleResult as result:
        _emit(str(result), args.output)
        return EXIT_INFEASIBLE
    except InfeasibleDecisionError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())
