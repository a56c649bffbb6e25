"""Command-line interface: solve, plan, bench, export, validate.

Exit codes: 0 on success, 1 when a solve ran but did not converge below the
loss threshold, 2 on input or usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, bench, objectives, planner, skeleton, solver
from .fk import forward, pose_to_text
from .grad import EvaluationError

CONFIG_ENV_VAR = "DIFFIK_CONFIG"

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 1
EXIT_INPUT_ERROR = 2


class CliError(Exception):
    """Input error; maps to exit code 2."""


def _parse_vec3(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"expected 'x,y,z', got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise CliError(f"bad vector {text!r}: {exc}") from exc


def _load_config(path: str | None) -> solver.SolverConfig:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return solver.SolverConfig()
    try:
        return solver.load_solver_config(path)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CliError(f"cannot load solver config {path!r}: {exc}") from exc


def _guard_out(path: str | Path, force: bool):
    if Path(path).exists() and not force:
        raise CliError(f"refusing to overwrite existing {path}; pass --force")


def _controlled_bones(skel: skeleton.Skeleton, arg: str | None) -> list[str]:
    if arg:
        return arg.split(",")
    names = [b.name for b in skel.bones if b.controlled_axes]
    if not names:
        raise CliError("skeleton has no controlled bones")
    return names


def _fmt(value: float, exact: bool) -> str:
    return f"{value:.17g}" if exact else f"{value:.6g}"


def _report_lines(report: solver.SolveReport, exact: bool) -> list[str]:
    return [
        f"success:    {report.success}",
        f"stop:       {report.stop_reason}",
        f"iterations: {report.iterations}",
        f"loss:       {_fmt(report.final_loss, exact)}",
        f"time:       {_fmt(report.wall_time * 1000.0, exact)} ms",
        "theta:      " + " ".join(_fmt(v, exact) for v in report.final_theta),
    ]


def _objective_for_solve(args, skel, layout) -> objectives.ObjectiveSpec:
    if args.objective:
        spec = objectives.load_objective_spec(args.objective)
        if args.target is not None:
            target = _parse_vec3(args.target)
            terms = tuple(
                objectives.DistanceTerm(
                    bone=t.bone, target=target, offset=t.offset, weight=t.weight
                )
                if t.kind == "distance"
                else t
                for t in spec.terms
            )
            spec = objectives.ObjectiveSpec(terms)
        return spec
    if args.target is None:
        raise CliError("need --objective and/or --target")
    target = _parse_vec3(args.target)
    return bench.simple_objective(
        target, args.effector_bone, _parse_vec3(args.effector_offset)
    )


def _first_distance_target(spec: objectives.ObjectiveSpec) -> np.ndarray:
    for term in spec.terms:
        if term.kind == "distance":
            return term.target
    raise CliError("objective has no distance term; baselines need a position target")


def _cmd_solve(args) -> int:
    skel = skeleton.load_skeleton(args.skeleton)
    controlled = _controlled_bones(skel, args.bones)
    layout = skeleton.dof_layout(skel, controlled)
    spec = _objective_for_solve(args, skel, layout)
    config = _load_config(args.config)
    theta0 = np.zeros(len(layout)) if args.start is None else np.array(
        [float(v) for v in args.start.split(",")]
    )
    if args.solver == "gradient":
        report = solver.solve(skel, layout, spec, theta0, config, record_trace=args.trace)
    else:
        offset = bench.chain_effector_offset(
            skel, controlled, args.effector_bone, _parse_vec3(args.effector_offset)
        )
        chain = baselines.chain_from_bones(skel, controlled, offset)
        target = _first_distance_target(spec)
        solve_fn = baselines.ccd_solve if args.solver == "ccd" else baselines.fabrik_solve
        report = solve_fn(skel, chain, target, spec, config, theta0)
    for line in _report_lines(report, args.exact):
        print(line)
    if args.out:
        _guard_out(args.out, args.force)
        doc = report.to_dict()
        doc["solver"] = args.solver
        doc["controlled"] = controlled
        doc["objective"] = objectives.spec_to_dict(spec)["terms"]
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK if report.success else EXIT_NO_CONVERGENCE


def _cmd_plan(args) -> int:
    skel = skeleton.load_skeleton(args.skeleton)
    controlled = _controlled_bones(skel, args.bones)
    layout = skeleton.dof_layout(skel, controlled)
    terminal = _objective_for_solve(args, skel, layout)
    path_spec = (
        objectives.load_objective_spec(args.path_objective) if args.path_objective else None
    )
    config = _load_config(args.config)
    smooth = tuple(float(v) for v in args.smooth.split(","))
    if len(smooth) != 3:
        raise CliError("--smooth needs three comma-separated weights")
    start = np.zeros(len(layout)) if args.start is None else np.array(
        [float(v) for v in args.start.split(",")]
    )
    trajectory, report = planner.plan(
        skel, layout, start, terminal, path_spec, args.points, smooth, config
    )
    for line in _report_lines(report, args.exact):
        print(line)
    if args.out:
        _guard_out(args.out, args.force)
        doc = planner.trajectory_to_dict(
            trajectory, skel, layout, args.effector_bone, _parse_vec3(args.effector_offset)
        )
        doc["report"] = report.to_dict()
        planner.save_trajectory(doc, args.out)
    return EXIT_OK if report.success else EXIT_NO_CONVERGENCE


def _cmd_bench(args) -> int:
    plan_cfg = bench.load_plan(args.plan) if args.plan else bench.BenchPlan()
    if args.seed is not None:
        plan_cfg = bench.plan_from_dict({**plan_cfg.__dict__, "seed": args.seed})
    out_dir = Path(args.out)
    _guard_out(out_dir / "summary.csv", args.force)
    rows, records = bench.run_benchmark(plan_cfg, jobs=args.jobs)
    written = bench.write_reports(rows, records, out_dir)
    for row in rows:
        print(
            f"{row.solver:10s} success {row.success_pct_mean:6.2f} +- {row.success_pct_std:5.2f} %"
            f"  iters {row.iters_mean:7.2f} +- {row.iters_std:6.2f}"
            f"  time {row.solve_ms_mean:8.2f} +- {row.solve_ms_std:7.2f} ms"
        )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_export(args) -> int:
    skel = skeleton.load_skeleton(args.skeleton)
    digits = 17 if args.exact else 6
    if (args.report is None) == (args.trajectory is None):
        raise CliError("pass exactly one of --report or --trajectory")
    if args.out:
        _guard_out(args.out, args.force)
    chunks = []
    if args.report:
        doc = json.loads(Path(args.report).read_text())
        controlled = doc.get("controlled")
        if controlled is None:
            raise CliError("report file lacks 'controlled'; re-run solve with --out")
        layout = skeleton.dof_layout(skel, controlled)
        pose = forward(skel, layout, np.asarray(doc["final_theta"], dtype=float))
        chunks.append(pose_to_text(skel, pose, digits))
    else:
        doc = json.loads(Path(args.trajectory).read_text())
        names = sorted({b for b, _ in doc["dofs"]})
        layout = skeleton.dof_layout(skel, names)
        for index, point in enumerate(doc["points"]):
            chunks.append(f"# point {index}\n")
            pose = forward(skel, layout, np.asarray(point, dtype=float))
            chunks.append(pose_to_text(skel, pose, digits))
    text = "".join(chunks)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_validate(args) -> int:
    skel = skeleton.load_skeleton(args.skeleton)
    n_controlled = sum(1 for b in skel.bones if b.controlled_axes)
    n_dofs = sum(len(b.controlled_axes) for b in skel.bones)
    print(
        f"ok: {len(skel)} bones, {n_controlled} controlled bones, {n_dofs} degrees of freedom"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffik",
        description="Differentiable inverse kinematics: solve, plan, bench, export, validate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_objective=True):
        p.add_argument("--skeleton", required=True, help="skeleton file path")
        p.add_argument("--bones", help="comma-separated controlled bone names")
        p.add_argument("--config", help=f"solver config JSON (default ${CONFIG_ENV_VAR})")
        p.add_argument("--start", help="comma-separated start angles (default: rest pose)")
        p.add_argument("--out", help="write the result to this file")
        p.add_argument("--force", action="store_true", help="allow overwriting --out")
        p.add_argument("--exact", action="store_true", help="print 17 significant digits")
        p.add_argument("--effector-bone", default=bench.DEFAULT_EFFECTOR_BONE)
        p.add_argument(
            "--effector-offset",
            default=",".join(str(v) for v in bench.DEFAULT_EFFECTOR_OFFSET),
        )
        if with_objective:
            p.add_argument("--objective", help="objective spec JSON file")
            p.add_argument("--target", help="x,y,z target; overrides distance-term targets")

    p_solve = sub.add_parser("solve", help="solve a single pose")
    add_common(p_solve)
    p_solve.add_argument("--solver", choices=("gradient", "ccd", "fabrik"), default="gradient")
    p_solve.add_argument("--trace", action="store_true", help="record per-iteration losses")
    p_solve.set_defaults(func=_cmd_solve)

    p_plan = sub.add_parser("plan", help="optimize a trajectory")
    add_common(p_plan)
    p_plan.add_argument("--points", type=int, required=True, help="intermediate point count")
    p_plan.add_argument("--path-objective", help="objective applied to every free point")
    p_plan.add_argument("--smooth", default="0.01,0.01,0.01", help="order 1..3 weights")
    p_plan.set_defaults(func=_cmd_plan)

    p_bench = sub.add_parser("bench", help="run the benchmark pipeline")
    p_bench.add_argument("--plan", help="benchmark plan JSON (default: desk-scale preset)")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--jobs", type=int, default=1, help="parallel solver workers")
    p_bench.add_argument("--seed", type=int, help="override the plan seed")
    p_bench.add_argument("--force", action="store_true")
    p_bench.set_defaults(func=_cmd_bench)

    p_export = sub.add_parser("export", help="convert a report/trajectory to pose text")
    p_export.add_argument("--skeleton", required=True)
    p_export.add_argument("--report", help="solve report JSON (from solve --out)")
    p_export.add_argument("--trajectory", help="trajectory JSON (from plan --out)")
    p_export.add_argument("--out")
    p_export.add_argument("--force", action="store_true")
    p_export.add_argument("--exact", action="store_true")
    p_export.set_defaults(func=_cmd_export)

    p_validate = sub.add_parser("validate", help="check a skeleton file")
    p_validate.add_argument("--skeleton", required=True)
    p_validate.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        skeleton.SkeletonError,
        objectives.ObjectiveError,
        baselines.ChainError,
        bench.BenchError,
        EvaluationError,
        OSError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
