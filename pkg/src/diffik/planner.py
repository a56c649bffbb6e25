"""Joint trajectory optimization through intermediate poses.

A trajectory holds the start pose, a configurable number of intermediate
points, and the final pose; all free points are optimized simultaneously by
the same projected cautious-Adam loop the single-pose solver uses. Terminal
task terms bind to the last point, path terms to every free point, and
smoothness energies of orders 1..3 couple the whole trajectory.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fk import effector_position, forward
from .grad import smoothness_value_and_gradient, value_and_gradient
from .objectives import ObjectiveSpec
from .skeleton import DofLayout, Skeleton
from .solver import SolveReport, SolverConfig, minimize, project_bounds

DEFAULT_SMOOTH_WEIGHTS = (0.01, 0.01, 0.01)


@dataclass(frozen=True)
class Trajectory:
    """Optimized joint-angle path; ``points`` has shape (n_points, n_dofs)."""

    points: np.ndarray
    fixed_head: bool = True

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)


def plan(
    skel: Skeleton,
    layout: DofLayout,
    start,
    terminal_spec: ObjectiveSpec,
    path_spec: ObjectiveSpec | None,
    n_intermediate: int,
    smooth_weights=DEFAULT_SMOOTH_WEIGHTS,
    config: SolverConfig = SolverConfig(),
    fixed_head: bool = True,
    record_trace: bool = False,
) -> tuple[Trajectory, SolveReport]:
    """Optimize a trajectory of ``n_intermediate + 2`` points.

    ``smooth_weights`` gives the weights of the order-1..3 smoothness
    energies. With ``fixed_head`` the first point is pinned to the start pose
    and excluded from optimization. Success means the total trajectory loss
    (task terms plus weighted smoothness) fell below the config threshold.
    """
    if n_intermediate < 0:
        raise ValueError("n_intermediate must be >= 0")
    start = project_bounds(np.asarray(start, dtype=float), layout)
    n_points = n_intermediate + 2
    n_dofs = len(layout)
    head = 1 if fixed_head else 0
    n_free = n_points - head

    smooth = [(order, float(w)) for order, w in zip((1, 2, 3), smooth_weights) if w > 0.0]
    usable = [(order, w) for order, w in smooth if order < n_points]
    for order, _ in smooth:
        if order >= n_points:
            warnings.warn(
                f"trajectory of {n_points} points is too short for smoothness order "
                f"{order}; that term contributes 0",
                stacklevel=2,
            )
    has_path_terms = path_spec is not None and len(path_spec.terms) > 0

    def loss_and_grad(flat):
        free = flat.reshape(n_free, n_dofs)
        points = np.vstack([start[None, :], free]) if fixed_head else free
        total = 0.0
        grad = np.zeros((n_points, n_dofs))
        if has_path_terms:
            for t in range(head, n_points):
                value, g = value_and_gradient(path_spec, skel, layout, points[t])
                total = total + value
                grad[t] += g
        value, g = value_and_gradient(terminal_spec, skel, layout, points[-1])
        total = total + value
        grad[-1] += g
        for order, weight in usable:
            value, g = smoothness_value_and_gradient(points, order)
            total = total + weight * value
            grad += weight * g
        return float(total), grad[head:].ravel()

    x0 = np.tile(start, n_free)
    lower = np.tile(layout.lower, n_free)
    upper = np.tile(layout.upper, n_free)
    x, report = minimize(loss_and_grad, x0, lower, upper, config, record_trace)

    free = x.reshape(n_free, n_dofs)
    points = np.vstack([start[None, :], free]) if fixed_head else free
    trajectory = Trajectory(points=points, fixed_head=fixed_head)
    report.final_theta = points[-1].copy()
    return trajectory, report


def trajectory_to_dict(
    trajectory: Trajectory,
    skel: Skeleton,
    layout: DofLayout,
    effector_bone: str | None = None,
    effector_offset=(0.0, 0.0, 0.0),
) -> dict:
    """Export structure: per-point angle vectors plus effector positions."""
    doc = {
        "fixed_head": trajectory.fixed_head,
        "dofs": [[skel.bones[b].name, "xyz"[a]] for b, a in layout.entries],
        "points": [[float(v) for v in p] for p in trajectory.points],
    }
    if effector_bone is not None:
        bone = skel.index(effector_bone)
        positions = []
        for p in trajectory.points:
            pose = forward(skel, layout, p)
            positions.append([float(v) for v in effector_position(pose, bone, effector_offset)])
        doc["effector"] = {"bone": effector_bone, "offset": [float(v) for v in effector_offset]}
        doc["effector_positions"] = positions
    return doc


def save_trajectory(doc: dict, path: str | Path):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
