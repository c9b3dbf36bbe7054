"""Command-line surface: validate | solve | simulate | sweep | gen.

Exit codes: 0 ok, 2 infeasible or constraint violations, 3 invalid input,
4 exhaustive search limit exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bundle import (
    BundleError,
    ScenarioBundle,
    dumps,
    load_bundle,
    load_placement,
    save_bundle,
    solution_to_json,
    synth_bundle,
    validate_bundle,
)
from .cost_model import InvalidPlacement, check_budget
from .simulator import simulate, summarize
from .solver import SearchSpaceTooLarge, Solution, SolverConfig, solve
from .topology import TopologyError
from .workload import UnknownDevice

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INVALID = 3
EXIT_LIMIT = 4

SOLVER_CHOICES = ("exact", "exhaustive", "greedy", "anneal")


def _load_valid_bundle(path: str) -> ScenarioBundle:
    bundle = load_bundle(path)
    violations = validate_bundle(bundle)
    if violations:
        lines = "; ".join(f"{kind}: {ident}" for kind, ident in violations)
        raise BundleError(f"invalid bundle: {lines}")
    return bundle


def _solver_config(args, bundle: ScenarioBundle) -> SolverConfig:
    defaults = dict(bundle.solver or {})
    kind = args.solver or defaults.get("kind", "exact")
    if kind not in SOLVER_CHOICES:
        raise BundleError(f"unknown solver kind: {kind!r}")
    cfg = SolverConfig(
        kind=kind,
        time_budget_ms=(
            args.time_budget_ms
            if args.time_budget_ms is not None
            else float(defaults.get("time_budget_ms", 1000.0))
        ),
        seed=args.seed if args.seed is not None else int(defaults.get("seed", 0)),
        max_states=(
            args.max_states
            if args.max_states is not None
            else int(defaults.get("max_states", 200_000))
        ),
    )
    return cfg


def _print_solution(solution: Solution, budget: float) -> None:
    report = solution.report
    within, excess = check_budget(report, budget)
    status = "ok" if not solution.best_effort else "infeasible (best effort)"
    print(f"solver: {solution.solver_kind}  status: {status}")
    print(
        f"mean latency: {report.mean_latency_ms:.6g} ms   "
        f"max latency: {report.max_latency_ms:.6g} ms"
    )
    print(
        f"cost: total {report.total_cost:.6g} "
        f"(server {report.server_cost:.6g}, network {report.network_cost:.6g}, "
        f"deploy {report.deploy_cost:.6g}, dispatch {report.dispatch_cost:.6g})"
    )
    print(f"budget: {budget:.6g}  within: {within}  excess: {excess:.6g}")
    for violation in report.violations:
        print(f"violation: {violation.kind} {violation.ident} by {violation.magnitude:.6g}")
    print(
        f"states examined: {solution.states_examined}  "
        f"elapsed: {solution.elapsed_ms:.1f} ms"
    )


def cmd_validate(args) -> int:
    try:
        bundle = load_bundle(args.bundle)
    except (BundleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    violations = validate_bundle(bundle)
    if violations:
        for kind, ident in violations:
            print(f"violation: {kind}: {ident}")
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_solve(args) -> int:
    bundle = _load_valid_bundle(args.bundle)
    if args.budget is not None:
        bundle = replace(bundle, budget=args.budget)
    cfg = _solver_config(args, bundle)
    solution = solve(bundle.topology, bundle.service_spec(), cfg)
    _print_solution(solution, bundle.budget)
    if args.out:
        Path(args.out).write_text(dumps(solution_to_json(solution)), encoding="utf-8")
        print(f"wrote {args.out}")
    return EXIT_INFEASIBLE if solution.best_effort else EXIT_OK


def cmd_simulate(args) -> int:
    bundle = _load_valid_bundle(args.bundle)
    placement = load_placement(args.placement)
    report = simulate(bundle.topology, bundle.service_spec(), placement)
    summary = summarize(report)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "slot",
                    "active_devices",
                    "traffic_gb",
                    "server_cost",
                    "network_cost",
                    "dispatch_cost",
                    "mean_latency_ms",
                ]
            )
            for record in report.records:
                writer.writerow(
                    [
                        record.index,
                        ";".join(record.active),
                        record.traffic_gb,
                        record.server_cost,
                        record.network_cost,
                        record.dispatch_cost,
                        record.mean_latency_ms,
                    ]
                )
        print(f"wrote {args.csv}")
    print(
        f"slots: {len(report.records)}   mean latency: {summary.mean_latency_ms:.6g} ms"
    )
    print(
        f"cost: total {summary.total_cost:.6g} "
        f"(server {summary.server_cost:.6g}, network {summary.network_cost:.6g}, "
        f"deploy {summary.deploy_cost:.6g}, dispatch {summary.dispatch_cost:.6g})"
    )
    for violation in summary.violations:
        print(f"violation: {violation.kind} {violation.ident} by {violation.magnitude:.6g}")
    return EXIT_INFEASIBLE if summary.violations else EXIT_OK


def cmd_sweep(args) -> int:
    bundle = _load_valid_bundle(args.bundle)
    cfg = _solver_config(args, bundle)
    rows = []
    any_feasible = False
    for budget in args.budgets:
        spec = replace(bundle.service_spec(), budget=budget)
        solution = solve(bundle.topology, spec, cfg)
        feasible = not solution.best_effort
        any_feasible = any_feasible or feasible
        report = solution.report
        if feasible:
            rows.append(
                [
                    budget,
                    "true",
                    report.mean_latency_ms,
                    report.total_cost,
                    report.server_cost,
                    report.network_cost,
                    report.deploy_cost,
                    report.dispatch_cost,
                ]
            )
        else:
            rows.append([budget, "false", "", "", "", "", "", ""])
    header = [
        "budget",
        "feasible",
        "mean_latency_ms",
        "total_cost",
        "server_cost",
        "network_cost",
        "deploy_cost",
        "dispatch_cost",
    ]
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {args.csv}")
    print(",".join(header))
    for row in rows:
        print(",".join(str(cell) for cell in row))
    return EXIT_OK if any_feasible else EXIT_INFEASIBLE


def cmd_gen(args) -> int:
    if args.devices < 1 or args.slots < 1:
        print("error: --devices and --slots must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    bundle = synth_bundle(
        devices=args.devices,
        slots=args.slots,
        step=args.step,
        seed=args.seed,
        budget=args.budget,
    )
    save_bundle(bundle, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tierplace",
        description="Placement optimization and simulation for tiered IoT pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a bundle file")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="optimize a placement for a bundle")
    p.add_argument("bundle")
    p.add_argument("--solver", choices=SOLVER_CHOICES, default=None)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--time-budget-ms", type=float, default=None)
    p.add_argument("--max-states", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="replay a scenario under a placement")
    p.add_argument("bundle")
    p.add_argument("placement")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="solve across a list of budgets")
    p.add_argument("bundle")
    p.add_argument("--budgets", type=float, nargs="+", required=True)
    p.add_argument("--solver", choices=SOLVER_CHOICES, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--time-budget-ms", type=float, default=None)
    p.add_argument("--max-states", type=int, default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="emit a synthetic bundle")
    p.add_argument("--devices", type=int, required=True)
    p.add_argument("--slots", type=int, required=True)
    p.add_argument("--step", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        return args.func(args)
    except SearchSpaceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except (
        BundleError,
        InvalidPlacement,
        TopologyError,
        UnknownDevice,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
