"""Command line entry point.

Subcommands mirror the pipeline stages: train the area classifier,
build recommendations, plan RSU contacts, run the delay solver, run the
whole simulation, or re-export artifacts from a saved run document.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .catalog import ParseError
from .mlp import export_loss_curves, save_model, train
from .mobility import plan_route
from .pipeline import build_instance, prepare, run, sample_trace
from .recommend import export_hierarchy
from .report import export_run, render_figures, write_csv, write_json
from .scenario import ScenarioError, load_scenario
from .solver import SolveConfig, solve

RULES = ("cyclic", "gs", "random")


def _add_common(p: argparse.ArgumentParser, solver_flags: bool = True) -> None:
    p.add_argument("--scenario", required=True, nargs="+", help="scenario JSON file(s)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for multiple scenarios")
    if solver_flags:
        p.add_argument("--zipf", type=float, default=None, help="override the demand skew exponent")
        p.add_argument(
            "--rule",
            choices=[*RULES, "all"],
            default=None,
            help="block selection rule (default from scenario; 'all' runs every rule)",
        )
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vecsim",
        description="In-car content caching: demand prediction, recommendation, "
        "RSU planning, and delay-minimizing placement.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the per-area demand classifier")
    _add_common(p, solver_flags=False)

    p = sub.add_parser("recommend", help="cluster passengers and pick contents to cache")
    _add_common(p, solver_flags=False)

    p = sub.add_parser("plan", help="compute RSU contacts along each car's route")
    _add_common(p, solver_flags=False)

    p = sub.add_parser("solve", help="run the block-descent delay minimization")
    _add_common(p)

    p = sub.add_parser("simulate", help="full pipeline: train, place, solve, replay")
    _add_common(p)

    p = sub.add_parser("export", help="re-render tables and figures from a saved run")
    p.add_argument("--run", required=True, help="path to a run.json written by simulate")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return ap


def _out_dir(args, name: str) -> Path:
    return Path(args.out) if args.out else Path("runs") / name


def _rules(args, scenario) -> list[str]:
    if getattr(args, "rule", None) is None:
        return [scenario.solver.rule]
    if args.rule == "all":
        return list(RULES)
    return [args.rule]


def cmd_train(args, path: str) -> str:
    scenario = load_scenario(path, args.seed)
    out = _out_dir(args, scenario.name)
    out.mkdir(parents=True, exist_ok=True)
    catalog = scenario.build_catalog()
    records = scenario.build_records(catalog)
    model, encoder, history = train(records, catalog, scenario.areas, scenario.mlp)
    save_model(model, encoder, out / "model.json")
    export_loss_curves(history, out / "training_curves.csv")
    if not args.no_figures:
        render_figures(
            {
                "training": {
                    "epochs": history.epochs,
                    "train_loss": history.train_loss,
                    "train_acc": history.train_acc,
                    "test_loss": history.test_loss,
                    "test_acc": history.test_acc,
                }
            },
            out / "figures",
        )
    acc = history.test_acc[-1] if history.test_acc else float("nan")
    return f"{scenario.name}: trained on {len(records)} records, held-out accuracy {acc:.4f} -> {out}"


def cmd_recommend(args, path: str) -> str:
    scenario = load_scenario(path, args.seed)
    out = _out_dir(args, scenario.name)
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare(scenario)
    for area, h in prepared.hierarchies.items():
        export_hierarchy(h, out / f"hierarchy-area-{area}.json")
    doc = {}
    for car in prepared.cars:
        doc[car.car_id] = {
            "areas": {
                str(area): {
                    "assignments": {
                        pid: list(leaf) for pid, leaf in sorted(rec.assignments.items())
                    },
                    "items": [
                        {
                            "content_id": it.content_id,
                            "rank": it.rank,
                            "probability": it.probability,
                            "rating": it.rating,
                        }
                        for it in rec.items
                    ],
                }
                for area, rec in car.recommendations.items()
            },
            "merged_items": [it.content_id for it in car.merged.items],
            "female_set": car.merged.female_set,
            "male_set": car.merged.male_set,
        }
    write_json(out / "recommendations.json", doc)
    counts = ", ".join(f"{c.car_id}: {len(c.merged.items)} items" for c in prepared.cars)
    return f"{scenario.name}: {counts} -> {out}"


def cmd_plan(args, path: str) -> str:
    scenario = load_scenario(path, args.seed)
    out = _out_dir(args, scenario.name)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    lines = []
    for state in scenario.car_states():
        plan = plan_route(state, scenario.rsus, scenario.rho_variant)
        for e in plan.entries:
            rows.append(
                (state.car_id, e.rsu_id, e.leg, e.entry_time_s, e.dwell_s,
                 e.rho, e.q, e.d_perp_m)
            )
        lines.append(f"{state.car_id}: {len(plan.entries)} contacts over {plan.total_time_s:.0f} s")
    write_csv(
        out / "plan.csv",
        ["car_id", "rsu_id", "leg", "entry_time_s", "dwell_s", "rho", "q", "d_perp_m"],
        rows,
    )
    return f"{scenario.name}: " + "; ".join(lines) + f" -> {out}"


def cmd_solve(args, path: str) -> str:
    scenario = load_scenario(path, args.seed)
    out = _out_dir(args, scenario.name)
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare(scenario)
    trace = sample_trace(prepared, zipf_a=args.zipf)
    inst = build_instance(prepared, trace)
    base = scenario.solver
    reports = {}
    for rule in _rules(args, scenario):
        cfg = SolveConfig(
            rule=rule, alpha=base.alpha, beta=base.beta,
            round_threshold=base.round_threshold, epsilon=base.epsilon,
            max_iter=base.max_iter, seed=base.seed,
        )
        reports[rule] = solve(inst, cfg)
    doc = {"solver": {rule: rep.to_dict() for rule, rep in reports.items()}}
    write_json(out / "solver_report.json", doc)
    write_csv(
        out / "trajectory.csv",
        ["rule", "t", "block", "objective", "delta", "rounded_violation"],
        (
            (rule, r.t, r.block, r.objective, r.delta, r.rounded_violation)
            for rule, rep in sorted(reports.items())
            for r in rep.iterations
        ),
    )
    if not args.no_figures:
        render_figures(doc, out / "figures")
    lines = [
        f"{rule}: relaxed {rep.relaxed_objective:.4f} s, rounded {rep.rounded_objective:.4f} s, "
        f"violation {rep.violation.total:.3g}, gap {rep.integrality_gap:.4f}, "
        f"{len(rep.iterations)} iterations"
        for rule, rep in reports.items()
    ]
    return f"{scenario.name} ({inst.n_requests} requests): " + "; ".join(lines) + f" -> {out}"


def cmd_simulate(args, path: str) -> str:
    scenario = load_scenario(path, args.seed)
    out = _out_dir(args, scenario.name)
    result = run(scenario, rules=_rules(args, scenario), zipf_a=args.zipf)
    export_run(result.to_dict(), out, figures=not args.no_figures)
    m = result.metrics
    acc = result.prepared.history.test_acc[-1] if result.prepared.history.test_acc else float("nan")
    solver_bits = "; ".join(
        f"{rule}: rounded {rep.rounded_objective:.3f} s (gap {rep.integrality_gap:.3f})"
        for rule, rep in result.reports.items()
    )
    return (
        f"{scenario.name}: accuracy {acc:.4f}; edge fraction {m.edge_fraction:.4f} "
        f"over {m.count} demands; mean delay {m.delay_mean_s:.3f} s; {solver_bits} -> {out}"
    )


def cmd_export(args) -> str:
    doc = json.loads(Path(args.run).read_text())
    paths = export_run(doc, args.out, figures=not args.no_figures)
    return f"re-exported {len(paths)} artifacts -> {args.out}"


_COMMANDS = {
    "train": cmd_train,
    "recommend": cmd_recommend,
    "plan": cmd_plan,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
}


def _run_one(payload: tuple) -> str:
    command, args, path = payload
    return _COMMANDS[command](args, path)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            print(cmd_export(args))
            return 0
        paths = args.scenario
        if args.out is not None and len(paths) > 1:
            print("error: --out with multiple scenarios is ambiguous", file=sys.stderr)
            return 2
        if args.jobs > 1 and len(paths) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                for line in pool.map(_run_one, [(args.command, args, p) for p in paths]):
                    print(line)
        else:
            for p in paths:
                print(_COMMANDS[args.command](args, p))
        return 0
    except (ScenarioError, ParseError) as exc:
        print(f"error while loading scenario: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error while running {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
