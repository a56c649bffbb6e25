"""Reference CCD and FABRIK solvers over a serial chain.

Both baselines update the pose geometrically (they never see custom objective
terms) but are judged by the same full-objective success criterion as the
gradient solver, so head-to-head success rates are directly comparable. One
CCD sweep and one FABRIK forward+backward pair each count as one iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable

import numpy as np

from .fk import _axis_rotation, effector_position, forward
from .objectives import ObjectiveSpec, evaluate
from .skeleton import DofLayout, Skeleton, dof_layout
from .solver import (
    STOP_MAX_ITERATIONS,
    STOP_THRESHOLD,
    STOP_TIME_BUDGET,
    SolveReport,
    SolverConfig,
    dynamic_budget,
)

_AXIS_VECTORS = (np.eye(3)[0], np.eye(3)[1], np.eye(3)[2])


class ChainError(ValueError):
    """The given bones do not form a serial parent-child path."""


@dataclass(frozen=True)
class ChainSpec:
    """Serial chain from a base bone to an effector point.

    ``bones`` are skeleton indices ordered base to effector; ``segment_lengths``
    holds the distance between consecutive joint origins plus the final
    effector segment, derived from the local transforms.
    """

    bones: tuple[int, ...]
    axes: tuple[tuple[int, ...], ...]
    limits: tuple[tuple[tuple[float, float], ...], ...]
    segment_lengths: tuple[float, ...]
    effector_offset: np.ndarray

    def __post_init__(self):
        offset = np.asarray(self.effector_offset, dtype=float).reshape(3)
        offset.setflags(write=False)
        object.__setattr__(self, "effector_offset", offset)

    @property
    def reach(self) -> float:
        return float(sum(self.segment_lengths))


def chain_from_bones(skel: Skeleton, names: list[str], effector_offset=(0.0, 0.0, 0.0)) -> ChainSpec:
    """Build a ChainSpec for named bones that must form a parent-child path."""
    indices = [skel.index(n) for n in names]
    if not indices:
        raise ChainError("chain needs at least one bone")
    for prev, cur in zip(indices, indices[1:]):
        if skel.bones[cur].parent != prev:
            raise ChainError(
                f"bone '{skel.bones[cur].name}' is not a child of '{skel.bones[prev].name}'"
            )
    segments = [
        float(np.linalg.norm(skel.bones[child].translation)) for child in indices[1:]
    ]
    segments.append(float(np.linalg.norm(np.asarray(effector_offset, dtype=float))))
    axes = tuple(skel.bones[i].controlled_axes for i in indices)
    limits = tuple(skel.bones[i].limits for i in indices)
    return ChainSpec(tuple(indices), axes, limits, tuple(segments), effector_offset)


def _chain_layout(skel: Skeleton, chain: ChainSpec) -> DofLayout:
    return dof_layout(skel, [skel.bones[i].name for i in chain.bones])


def _iterate_geometric(
    loss_fn: Callable[[], float],
    sweep_fn: Callable[[], None],
    config: SolverConfig,
) -> tuple[float, int, str, float]:
    """Shared stopping-criteria loop for the geometric baselines."""
    start = perf_counter()
    value = loss_fn()
    iterations = 0
    iteration_times: list[float] = []
    n_allowed = config.max_iterations
    stop = STOP_THRESHOLD if value < config.loss_threshold else None
    while stop is None:
        if iterations >= n_allowed:
            stop = STOP_TIME_BUDGET if n_allowed < config.max_iterations else STOP_MAX_ITERATIONS
            break
        tick = perf_counter()
        sweep_fn()
        value = loss_fn()
        iterations += 1
        iteration_times.append(perf_counter() - tick)
        if config.time_budget is not None:
            n_allowed = dynamic_budget(config.max_iterations, config.time_budget, iteration_times)
        if value < config.loss_threshold:
            stop = STOP_THRESHOLD
    return value, iterations, stop, perf_counter() - start


def _joint_axis_and_pivot(skel, pose, theta, layout, bone_index, axis):
    """World rotation axis and pivot for one (bone, axis) DOF at the current pose."""
    bone = skel.bones[bone_index]
    if bone.parent is None:
        anchored = bone.local
    else:
        anchored = pose.transforms[bone.parent] @ bone.local
    rot = anchored[:3, :3]
    pivot = anchored[:3, 3]
    if axis == 2:
        return rot @ _AXIS_VECTORS[2], pivot
    angles = {a: theta[dof] for a, dof in layout.axes_by_bone.get(bone_index, ())}
    rz = _axis_rotation(2, math.cos(angles.get(2, 0.0)), math.sin(angles.get(2, 0.0)))[:3, :3]
    if axis == 1:
        return rot @ (rz @ _AXIS_VECTORS[1]), pivot
    ry = _axis_rotation(1, math.cos(angles.get(1, 0.0)), math.sin(angles.get(1, 0.0)))[:3, :3]
    return rot @ (rz @ (ry @ _AXIS_VECTORS[0])), pivot


def ccd_solve(
    skel: Skeleton,
    chain: ChainSpec,
    target,
    spec: ObjectiveSpec,
    config: SolverConfig = SolverConfig(),
    theta0=None,
) -> SolveReport:
    """Cyclic coordinate descent: per sweep, rotate each DOF (effector side
    first) by the distance-minimizing angle about its axis, clamped to limits.
    """
    target = np.asarray(target, dtype=float)
    layout = _chain_layout(skel, chain)
    theta = np.zeros(len(layout)) if theta0 is None else project_theta(theta0, layout)
    effector_bone = chain.bones[-1]
    dofs = list(enumerate(layout.entries))

    def loss_fn():
        return evaluate(spec, skel, layout, theta)

    def sweep_fn():
        for dof, (bone_index, axis) in reversed(dofs):
            pose = forward(skel, layout, theta)
            effector = effector_position(pose, effector_bone, chain.effector_offset)
            axis_world, pivot = _joint_axis_and_pivot(skel, pose, theta, layout, bone_index, axis)
            to_effector = effector - pivot
            to_target = target - pivot
            e_perp = to_effector - np.dot(to_effector, axis_world) * axis_world
            t_perp = to_target - np.dot(to_target, axis_world) * axis_world
            if np.linalg.norm(e_perp) < 1e-12 or np.linalg.norm(t_perp) < 1e-12:
                continue
            angle = math.atan2(
                float(np.dot(axis_world, np.cross(e_perp, t_perp))),
                float(np.dot(e_perp, t_perp)),
            )
            lo, hi = layout.lower[dof], layout.upper[dof]
            theta[dof] = min(max(theta[dof] + angle, lo), hi)

    value, iterations, stop, wall = _iterate_geometric(loss_fn, sweep_fn, config)
    return SolveReport(
        final_theta=theta.copy(),
        final_loss=float(value),
        iterations=iterations,
        wall_time=wall,
        success=bool(value < config.loss_threshold),
        stop_reason=stop,
        time_budget_used=config.time_budget is not None,
    )


def project_theta(theta, layout: DofLayout) -> np.ndarray:
    return np.clip(np.asarray(theta, dtype=float), layout.lower, layout.upper)


def _align_rotation(v0: np.ndarray, v1: np.ndarray) -> np.ndarray:
    """Minimal 3x3 rotation taking unit vector v0 to unit vector v1."""
    c = float(np.dot(v0, v1))
    axis = np.cross(v0, v1)
    s = float(np.linalg.norm(axis))
    if s < 1e-12:
        if c > 0.0:
            return np.eye(3)
        # Antiparallel: rotate pi about any axis perpendicular to v0.
        helper = np.array([1.0, 0.0, 0.0])
        if abs(v0[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(v0, helper)
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    axis /= s
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def _euler_xyz_from_matrix(rot: np.ndarray) -> tuple[float, float, float]:
    """Angles (tx, ty, tz) with rot = Rz(tz) @ Ry(ty) @ Rx(tx)."""
    sy = min(1.0, max(-1.0, -float(rot[2, 0])))
    ty = math.asin(sy)
    if abs(math.cos(ty)) > 1e-9:
        tz = math.atan2(float(rot[1, 0]), float(rot[0, 0]))
        tx = math.atan2(float(rot[2, 1]), float(rot[2, 2]))
    else:
        tz = math.atan2(-float(rot[0, 1]), float(rot[1, 1]))
        tx = 0.0
    return tx, ty, tz


def fabrik_solve(
    skel: Skeleton,
    chain: ChainSpec,
    target,
    spec: ObjectiveSpec,
    config: SolverConfig = SolverConfig(),
    theta0=None,
) -> SolveReport:
    """Position-space FABRIK with joint limits applied during angle recovery.

    Each iteration runs one forward and one backward reaching pass over the
    joint positions (segment lengths fixed), then recovers clamped joint
    angles and re-derives positions through FK so every reported pose is
    kinematically consistent.
    """
    if len(chain.bones) < 2:
        raise ChainError("FABRIK needs a chain of at least 2 joints")
    target = np.asarray(target, dtype=float)
    layout = _chain_layout(skel, chain)
    theta = np.zeros(len(layout)) if theta0 is None else project_theta(theta0, layout)
    lengths = np.asarray(chain.segment_lengths)
    n_nodes = len(chain.bones) + 1

    # Local rest direction of each segment, expressed in its parent bone frame.
    rest_dirs = []
    for j, child in enumerate(chain.bones[1:]):
        t = skel.bones[child].translation
        rest_dirs.append(t / np.linalg.norm(t))
    tip = chain.effector_offset
    rest_dirs.append(tip / np.linalg.norm(tip))

    def node_positions() -> np.ndarray:
        pose = forward(skel, layout, theta)
        nodes = np.empty((n_nodes, 3))
        for j, bone_index in enumerate(chain.bones):
            nodes[j] = pose.transforms[bone_index][:3, 3]
        nodes[-1] = effector_position(pose, chain.bones[-1], chain.effector_offset)
        return nodes

    def reconstruct_angles(nodes: np.ndarray):
        for j, bone_index in enumerate(chain.bones):
            pose = forward(skel, layout, theta)
            bone = skel.bones[bone_index]
            if bone.parent is None:
                anchored = bone.local[:3, :3]
            else:
                anchored = (pose.transforms[bone.parent] @ bone.local)[:3, :3]
            solved = nodes[j + 1] - nodes[j]
            norm = np.linalg.norm(solved)
            if norm < 1e-12:
                continue
            v1 = anchored.T @ (solved / norm)
            rot = _align_rotation(rest_dirs[j], v1 / np.linalg.norm(v1))
            angles = _euler_xyz_from_matrix(rot)
            for axis, dof in layout.axes_by_bone.get(bone_index, ()):
                lo, hi = layout.lower[dof], layout.upper[dof]
                theta[dof] = min(max(angles[axis], lo), hi)

    def loss_fn():
        return evaluate(spec, skel, layout, theta)

    def sweep_fn():
        nodes = node_positions()
        base = nodes[0].copy()
        to_target = target - base
        distance = float(np.linalg.norm(to_target))
        if distance >= chain.reach and distance > 0.0:
            # Unreachable: stretch the chain along the base-to-target line.
            direction = to_target / distance
            total = 0.0
            for j in range(1, n_nodes):
                total += lengths[j - 1]
                nodes[j] = base + total * direction
        else:
            # Forward reaching: drag the chain onto the target.
            nodes[-1] = target
            for j in range(n_nodes - 2, -1, -1):
                d = nodes[j] - nodes[j + 1]
                nodes[j] = nodes[j + 1] + d / np.linalg.norm(d) * lengths[j]
            # Backward reaching: re-anchor the base.
            nodes[0] = base
            for j in range(1, n_nodes):
                d = nodes[j] - nodes[j - 1]
                nodes[j] = nodes[j - 1] + d / np.linalg.norm(d) * lengths[j - 1]
        reconstruct_angles(nodes)

    value, iterations, stop, wall = _iterate_geometric(loss_fn, sweep_fn, config)
    return SolveReport(
        final_theta=theta.copy(),
        final_loss=float(value),
        iterations=iterations,
        wall_time=wall,
        success=bool(value < config.loss_threshold),
        stop_reason=stop,
        time_budget_used=config.time_budget is not None,
    )
