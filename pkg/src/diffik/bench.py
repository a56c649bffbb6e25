"""Benchmark harness: target generation, filtering, clustering, and reports.

The pipeline samples candidate targets around the chain, keeps the ones at
least one solver can reach, clusters them with k-means, drops the first few
centroids as warm-up, and then solves every remaining target from the rest
pose for each (run, solver) pair. Summaries are written as CSV next to the
raw per-target records and a couple of rendered figures.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import ccd_solve, chain_from_bones, fabrik_solve
from .fk import effector_position, forward
from .objectives import (
    DistanceTerm,
    KnownRotationTerm,
    LookAtTerm,
    ObjectiveSpec,
)
from .planner import plan as plan_trajectory
from .skeleton import DofLayout, Skeleton, bundled_asset_path, dof_layout, load_skeleton, subtree_reach
from .solver import SolveReport, SolverConfig, solve

SUMMARY_HEADER = (
    "solver,custom_objective,solve_ms_mean,solve_ms_std,iters_mean,iters_std,"
    "ms_per_iter_mean,ms_per_iter_std,success_pct_mean,success_pct_std"
)
RAW_HEADER = (
    "run,solver,preset,seed,target_x,target_y,target_z,iterations,final_loss,"
    "solve_ms,stop_reason,success"
)

DEFAULT_CONTROLLED = ("left_collar", "left_shoulder", "left_elbow", "left_wrist")
DEFAULT_EFFECTOR_BONE = "left_hand"
DEFAULT_EFFECTOR_OFFSET = (0.08, 0.0, 0.0)
DEFAULT_PALM_AXIS = (0.0, -1.0, 0.0)
DEFAULT_PALM_DIR = (0.0, -1.0, 0.0)
DEFAULT_POSTURE_DOFS = (("left_collar", "z"), ("left_shoulder", "x"))

PAPER_WEIGHT_DISTANCE = 1.0
PAPER_WEIGHT_LOOK = 0.1
PAPER_WEIGHT_KNOWN = 1.0


class BenchError(RuntimeError):
    """A benchmark stage failed; the message names the stage."""


@dataclass(frozen=True)
class BenchPlan:
    """Configuration of one benchmark campaign (desk-scale defaults)."""

    skeleton: str | None = None  # path, or None for the bundled humanoid
    controlled: tuple[str, ...] = DEFAULT_CONTROLLED
    preset: str = "simple"  # simple | custom | trajectory
    sample_count: int = 20000
    kmeans_k: int = 210
    warmup_count: int = 10
    runs: int = 5
    solvers: tuple[str, ...] = ("gradient", "ccd", "fabrik")
    seed: int = 0
    effector_bone: str = DEFAULT_EFFECTOR_BONE
    effector_offset: tuple[float, float, float] = DEFAULT_EFFECTOR_OFFSET
    n_intermediate: int = 5
    smooth_weights: tuple[float, float, float] = (0.01, 0.01, 0.01)
    posture_dofs: tuple[tuple[str, str], ...] = DEFAULT_POSTURE_DOFS
    solver_configs: dict = field(default_factory=dict)
    targets: tuple | None = None  # explicit targets skip sample/filter/kmeans

    def config_for(self, solver: str) -> SolverConfig:
        overrides = self.solver_configs.get(solver, {})
        return SolverConfig(**overrides) if overrides else SolverConfig()


def plan_from_dict(doc: dict) -> BenchPlan:
    kwargs = dict(doc)
    for key in ("controlled", "solvers", "effector_offset", "smooth_weights"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    if "posture_dofs" in kwargs and kwargs["posture_dofs"] is not None:
        kwargs["posture_dofs"] = tuple((b, a) for b, a in kwargs["posture_dofs"])
    if "targets" in kwargs and kwargs["targets"] is not None:
        kwargs["targets"] = tuple(tuple(map(float, t)) for t in kwargs["targets"])
    return BenchPlan(**kwargs)


def load_plan(path: str | Path) -> BenchPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class BenchRow:
    """One summary line, column-for-column like the comparison table."""

    solver: str
    custom_objective: bool
    solve_ms_mean: float
    solve_ms_std: float
    iters_mean: float
    iters_std: float
    ms_per_iter_mean: float
    ms_per_iter_std: float
    success_pct_mean: float
    success_pct_std: float


# ---------------------------------------------------------------------------
# Objective presets.

def simple_objective(target, effector_bone: str, effector_offset) -> ObjectiveSpec:
    return ObjectiveSpec(
        (
            DistanceTerm(
                bone=effector_bone,
                target=target,
                offset=effector_offset,
                weight=PAPER_WEIGHT_DISTANCE,
            ),
        )
    )


def posture_mask(layout: DofLayout, skel: Skeleton, picks) -> np.ndarray:
    """Binary DOF mask selecting the given (bone name, axis name) pairs."""
    wanted = {(skel.index(b), "xyz".index(a)) for b, a in picks}
    return np.asarray([1.0 if e in wanted else 0.0 for e in layout.entries])


def custom_objective(
    target,
    skel: Skeleton,
    layout: DofLayout,
    effector_bone: str,
    effector_offset,
    posture_dofs=DEFAULT_POSTURE_DOFS,
) -> ObjectiveSpec:
    """Distance + palm-down look-at + known-rotation posture prior."""
    mask = posture_mask(layout, skel, posture_dofs)
    return ObjectiveSpec(
        (
            DistanceTerm(
                bone=effector_bone,
                target=target,
                offset=effector_offset,
                weight=PAPER_WEIGHT_DISTANCE,
            ),
            LookAtTerm(
                bone=effector_bone,
                local_axis=DEFAULT_PALM_AXIS,
                target_dir=DEFAULT_PALM_DIR,
                weight=PAPER_WEIGHT_LOOK,
            ),
            KnownRotationTerm(
                theta_star=np.zeros(len(layout)),
                mask=mask,
                weight=PAPER_WEIGHT_KNOWN,
            ),
        )
    )


def chain_effector_offset(skel: Skeleton, chain_names, effector_bone: str, effector_offset):
    """Express an effector point in the frame of the last chain bone.

    Bones between the chain tip and the effector bone must be rigid
    (no controlled axes).
    """
    last = skel.index(chain_names[-1])
    bone_index = skel.index(effector_bone)
    point = np.append(np.asarray(effector_offset, dtype=float), 1.0)
    while bone_index != last:
        bone = skel.bones[bone_index]
        if bone.controlled_axes:
            raise BenchError(
                f"chain: bone '{bone.name}' between chain tip and effector is controlled"
            )
        point = bone.local @ point
        if bone.parent is None:
            raise BenchError(f"chain: effector bone '{effector_bone}' is not below the chain")
        bone_index = bone.parent
    return point[:3]


# ---------------------------------------------------------------------------
# Pipeline stages.

def sample_targets(skel: Skeleton, layout: DofLayout, count: int, seed: int) -> np.ndarray:
    """Uniform samples in the sphere of radius 1.1 x reach around the chain base."""
    if count < 1:
        raise ValueError("count must be >= 1")
    base_bone = layout.entries[0][0]
    pose = forward(skel, layout, np.zeros(len(layout)))
    base = pose.transforms[base_bone][:3, 3]
    radius = 1.1 * subtree_reach(skel, base_bone)
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(count, 3))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    radii = radius * np.cbrt(rng.uniform(size=(count, 1)))
    return base + directions / norms * radii


def filter_solvable(targets, solvers, threshold: float = 0.005, cap: int = 500) -> np.ndarray:
    """Keep targets at least one solver reaches; order is preserved.

    ``solvers`` are callables (target, config) -> SolveReport; they are run
    with a config using the given threshold and iteration cap.
    """
    if not solvers:
        raise ValueError("need at least one solver")
    config = SolverConfig(max_iterations=cap, loss_threshold=threshold)
    kept = []
    for target in np.asarray(targets, dtype=float).reshape(-1, 3):
        for solver in solvers:
            if solver(target, config).success:
                kept.append(target)
                break
    return np.asarray(kept).reshape(-1, 3)


def _kmeans_lloyd(points: np.ndarray, k: int, seed: int, max_iters: int):
    rng = np.random.default_rng(seed)
    n = len(points)
    centroids = np.empty((k, 3))
    centroids[0] = points[rng.integers(n)]
    dist = np.linalg.norm(points - centroids[0], axis=1)
    for i in range(1, k):
        centroids[i] = points[int(np.argmax(dist))]
        dist = np.minimum(dist, np.linalg.norm(points - centroids[i], axis=1))
    assignment = None
    history = []
    for _ in range(max_iters):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assignment = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new_assignment].sum()))
        for j in range(k):
            members = points[new_assignment == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # Re-seed an empty cluster from the farthest point.
                far = int(np.argmax(d2[np.arange(n), new_assignment]))
                centroids[j] = points[far]
                new_assignment[far] = j
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
    return centroids, history


def kmeans(points, k: int, seed: int, max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with seeded farthest-point initialization."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if k > len(points):
        raise ValueError(f"k={k} exceeds number of points ({len(points)})")
    centroids, _ = _kmeans_lloyd(points, k, seed, max_iters)
    return centroids


# ---------------------------------------------------------------------------
# Solving.

def _solve_record(task) -> dict:
    (
        skel,
        layout,
        chain,
        chain_offset,
        plan_cfg,
        solver_name,
        run_index,
        target,
    ) = task
    target = np.asarray(target, dtype=float)
    rest = np.zeros(len(layout))
    config = plan_cfg.config_for(solver_name)
    if plan_cfg.preset == "custom":
        spec = custom_objective(
            target, skel, layout, plan_cfg.effector_bone, plan_cfg.effector_offset,
            plan_cfg.posture_dofs,
        )
    else:
        spec = simple_objective(target, plan_cfg.effector_bone, plan_cfg.effector_offset)
    if plan_cfg.preset == "trajectory":
        if solver_name != "gradient":
            raise BenchError(f"solver '{solver_name}' cannot run the trajectory preset")
        _, report = plan_trajectory(
            skel, layout, rest, spec, None, plan_cfg.n_intermediate,
            plan_cfg.smooth_weights, config,
        )
    elif solver_name == "gradient":
        report = solve(skel, layout, spec, rest, config)
    elif solver_name == "ccd":
        report = ccd_solve(skel, chain, target, spec, config)
    elif solver_name == "fabrik":
        report = fabrik_solve(skel, chain, target, spec, config)
    else:
        raise BenchError(f"unknown solver '{solver_name}'")
    return {
        "run": run_index,
        "solver": solver_name,
        "preset": plan_cfg.preset,
        "seed": plan_cfg.seed,
        "target_x": float(target[0]),
        "target_y": float(target[1]),
        "target_z": float(target[2]),
        "iterations": report.iterations,
        "final_loss": report.final_loss,
        "solve_ms": report.wall_time * 1000.0,
        "stop_reason": report.stop_reason,
        "success": report.success,
        "final_theta": [float(v) for v in report.final_theta],
    }


def run_benchmark(plan_cfg: BenchPlan, jobs: int = 1) -> tuple[list[BenchRow], list[dict]]:
    """Execute the full pipeline; returns summary rows plus raw records."""
    stage = "load_skeleton"
    try:
        path = plan_cfg.skeleton or bundled_asset_path()
        skel = load_skeleton(path)
        layout = dof_layout(skel, list(plan_cfg.controlled))
        if not len(layout):
            raise BenchError("controlled bones expose no degrees of freedom")
        chain = None
        chain_offset = None
        if any(s in ("ccd", "fabrik") for s in plan_cfg.solvers):
            chain_offset = chain_effector_offset(
                skel, plan_cfg.controlled, plan_cfg.effector_bone, plan_cfg.effector_offset
            )
            chain = chain_from_bones(skel, list(plan_cfg.controlled), chain_offset)

        if plan_cfg.targets is not None:
            targets = np.asarray(plan_cfg.targets, dtype=float).reshape(-1, 3)
        else:
            stage = "sample_targets"
            samples = sample_targets(skel, layout, plan_cfg.sample_count, plan_cfg.seed)

            stage = "filter_solvable"
            def gradient_filter(target, config):
                spec = simple_objective(target, plan_cfg.effector_bone, plan_cfg.effector_offset)
                return solve(skel, layout, spec, np.zeros(len(layout)), config)

            solvable = filter_solvable(samples, [gradient_filter])
            if len(solvable) < plan_cfg.kmeans_k:
                raise BenchError(
                    f"only {len(solvable)} solvable targets, need kmeans_k={plan_cfg.kmeans_k}"
                )

            stage = "kmeans"
            targets = kmeans(solvable, plan_cfg.kmeans_k, plan_cfg.seed)

        stage = "warmup_discard"
        if plan_cfg.warmup_count >= len(targets):
            raise BenchError(
                f"warmup_count={plan_cfg.warmup_count} leaves no targets out of {len(targets)}"
            )
        evaluated = targets[plan_cfg.warmup_count :]

        stage = "solve"
        tasks = [
            (skel, layout, chain, chain_offset, plan_cfg, solver, run, target)
            for run in range(plan_cfg.runs)
            for solver in plan_cfg.solvers
            for target in evaluated
        ]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                records = list(
                    pool.map(_solve_record, tasks, chunksize=max(1, len(tasks) // (jobs * 4)))
                )
        else:
            records = [_solve_record(t) for t in tasks]

        stage = "aggregate"
        rows = aggregate(records, plan_cfg)
        return rows, records
    except BenchError:
        raise
    except Exception as exc:  # noqa: BLE001 - surface the failing stage
        raise BenchError(f"stage '{stage}' failed: {exc}") from exc


def aggregate(records: list[dict], plan_cfg: BenchPlan) -> list[BenchRow]:
    rows = []
    for solver in plan_cfg.solvers:
        group = [r for r in records if r["solver"] == solver]
        if not group:
            continue
        ms = np.array([r["solve_ms"] for r in group])
        iters = np.array([r["iterations"] for r in group], dtype=float)
        per_iter = ms / np.maximum(iters, 1.0)
        success = np.array([100.0 if r["success"] else 0.0 for r in group])
        rows.append(
            BenchRow(
                solver=solver,
                custom_objective=plan_cfg.preset == "custom",
                solve_ms_mean=float(ms.mean()),
                solve_ms_std=float(ms.std()),
                iters_mean=float(iters.mean()),
                iters_std=float(iters.std()),
                ms_per_iter_mean=float(per_iter.mean()),
                ms_per_iter_std=float(per_iter.std()),
                success_pct_mean=float(success.mean()),
                success_pct_std=float(success.std()),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Report emission.

def write_summary_csv(rows: list[BenchRow], path: str | Path):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_HEADER.split(","))
        for row in rows:
            writer.writerow(
                [
                    row.solver,
                    "yes" if row.custom_objective else "no",
                    f"{row.solve_ms_mean:.6g}",
                    f"{row.solve_ms_std:.6g}",
                    f"{row.iters_mean:.6g}",
                    f"{row.iters_std:.6g}",
                    f"{row.ms_per_iter_mean:.6g}",
                    f"{row.ms_per_iter_std:.6g}",
                    f"{row.success_pct_mean:.6g}",
                    f"{row.success_pct_std:.6g}",
                ]
            )


def write_raw_records(records: list[dict], path: str | Path):
    columns = RAW_HEADER.split(",")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for record in records:
            writer.writerow([record[c] for c in columns])


def write_figures(rows: list[BenchRow], records: list[dict], out_dir: str | Path) -> list[Path]:
    """Render summary bar charts and a target scatter next to the CSV output."""
    from matplotlib.figure import Figure

    out_dir = Path(out_dir)
    written = []

    labels = [row.solver for row in rows]
    panels = [
        ("solve time (ms)", [r.solve_ms_mean for r in rows], [r.solve_ms_std for r in rows]),
        ("iterations", [r.iters_mean for r in rows], [r.iters_std for r in rows]),
        ("success rate (%)", [r.success_pct_mean for r in rows], [r.success_pct_std for r in rows]),
    ]
    preset = records[0]["preset"] if records else ""
    fig = Figure(figsize=(10.5, 3.4))
    axes = fig.subplots(1, 3)
    for ax, (title, means, stds) in zip(axes, panels):
        ax.bar(labels, means, yerr=stds, capsize=3, color="#4878a8")
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle(f"preset: {preset}")
    fig.tight_layout()
    summary_png = out_dir / "summary.png"
    fig.savefig(summary_png, dpi=140)
    written.append(summary_png)

    first_solver = rows[0].solver if rows else None
    points = [
        ((r["target_x"], r["target_y"], r["target_z"]), r["success"])
        for r in records
        if r["solver"] == first_solver and r["run"] == 0
    ]
    if points:
        fig = Figure(figsize=(8.0, 3.6))
        axes = fig.subplots(1, 2)
        xyz = np.array([p for p, _ in points])
        ok = np.array([s for _, s in points], dtype=bool)
        for ax, (i, j, name) in zip(axes, [(0, 1, "xy"), (0, 2, "xz")]):
            ax.scatter(xyz[ok, i], xyz[ok, j], s=8, c="#2a9d54", label="solved")
            if np.any(~ok):
                ax.scatter(xyz[~ok, i], xyz[~ok, j], s=8, c="#c44536", label="failed")
            ax.set_xlabel(name[0])
            ax.set_ylabel(name[1])
            ax.set_aspect("equal")
        axes[0].legend(loc="upper right", fontsize=8)
        fig.suptitle(f"targets ({first_solver}, run 0)")
        fig.tight_layout()
        targets_png = out_dir / "targets.png"
        fig.savefig(targets_png, dpi=140)
        written.append(targets_png)
    return written


def write_reports(rows, records, out_dir: str | Path) -> list[Path]:
    """Write summary.csv, raw_records.csv, and the figures into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / "summary.csv"
    raw = out_dir / "raw_records.csv"
    write_summary_csv(rows, summary)
    write_raw_records(records, raw)
    return [summary, raw] + write_figures(rows, records, out_dir)
