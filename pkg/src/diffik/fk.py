"""Differentiable forward kinematics over the kinematic tree.

Global transforms follow the recursion ``T_i = T_parent @ L_i @ R_i`` with
``R_i = R_z @ R_y @ R_x`` built from the bone's Euler angles. The same pass
optionally propagates per-DOF tangent matrices ``dT_i/dtheta_j`` so objective
gradients are exact; the value computation is shared between both modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .skeleton import DofLayout, Skeleton

# Instrumentation: number of single-pose FK passes since start or last reset.
_fk_pose_evaluations = 0


def fk_evaluation_count() -> int:
    return _fk_pose_evaluations


def reset_fk_evaluation_count():
    global _fk_pose_evaluations
    _fk_pose_evaluations = 0


@dataclass(frozen=True)
class GlobalPose:
    """Per-bone global 4x4 transforms, index-aligned with the skeleton."""

    transforms: np.ndarray  # (n_bones, 4, 4)

    def __len__(self) -> int:
        return len(self.transforms)


def translation(x: float, y: float, z: float) -> np.ndarray:
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return t


def _axis_rotation(axis: int, c: float, s: float) -> np.ndarray:
    r = np.eye(4)
    if axis == 0:
        r[1, 1] = c
        r[1, 2] = -s
        r[2, 1] = s
        r[2, 2] = c
    elif axis == 1:
        r[0, 0] = c
        r[0, 2] = s
        r[2, 0] = -s
        r[2, 2] = c
    else:
        r[0, 0] = c
        r[0, 1] = -s
        r[1, 0] = s
        r[1, 1] = c
    return r


def _axis_rotation_derivative(axis: int, c: float, s: float) -> np.ndarray:
    d = np.zeros((4, 4))
    if axis == 0:
        d[1, 1] = -s
        d[1, 2] = -c
        d[2, 1] = c
        d[2, 2] = -s
    elif axis == 1:
        d[0, 0] = -s
        d[0, 2] = c
        d[2, 0] = -c
        d[2, 2] = -s
    else:
        d[0, 0] = -s
        d[0, 1] = -c
        d[1, 0] = c
        d[1, 1] = -s
    return d


def euler_to_rotation(theta) -> np.ndarray:
    """Rotation transform ``R_z(tz) @ R_y(ty) @ R_x(tx)`` for angles in radians."""
    tx, ty, tz = (float(v) for v in theta)
    rx = _axis_rotation(0, math.cos(tx), math.sin(tx))
    ry = _axis_rotation(1, math.cos(ty), math.sin(ty))
    rz = _axis_rotation(2, math.cos(tz), math.sin(tz))
    return rz @ (ry @ rx)


def _bone_rotation(angles, axes_with_dofs, want_tangents):
    """Rotation matrix of one bone plus, when asked, dR/dtheta per controlled axis.

    ``angles`` is the (x, y, z) triple with uncontrolled axes pinned to zero.
    Returns (R, [(dof_index, dR), ...]).
    """
    cs = [(math.cos(a), math.sin(a)) for a in angles]
    rx = _axis_rotation(0, *cs[0])
    ry = _axis_rotation(1, *cs[1])
    rz = _axis_rotation(2, *cs[2])
    ryx = ry @ rx
    rot = rz @ ryx
    if not want_tangents:
        return rot, ()
    partials = []
    for axis, dof in axes_with_dofs:
        d = _axis_rotation_derivative(axis, *cs[axis])
        if axis == 0:
            dr = rz @ (ry @ d)
        elif axis == 1:
            dr = rz @ (d @ rx)
        else:
            dr = d @ ryx
        partials.append((dof, dr))
    return rot, tuple(partials)


def _fk_pass(skel: Skeleton, layout: DofLayout, theta: np.ndarray, want_tangents: bool):
    """Single topological FK pass; tangent propagation is purely additive.

    Returns (transforms (N,4,4), tangents (N,K,4,4) or None). The transform
    values are computed by the same statements in both modes.
    """
    global _fk_pose_evaluations
    _fk_pose_evaluations += 1
    n = len(skel.bones)
    k = len(layout)
    transforms = np.empty((n, 4, 4))
    tangents = np.zeros((n, k, 4, 4)) if want_tangents else None
    angles = [0.0, 0.0, 0.0]
    for i, bone in enumerate(skel.bones):
        axes = layout.axes_by_bone.get(i, ())
        angles[0] = angles[1] = angles[2] = 0.0
        for axis, dof in axes:
            angles[axis] = theta[dof]
        rot, partials = _bone_rotation(angles, axes, want_tangents)
        local_rot = bone.local @ rot
        if bone.parent is None:
            transforms[i] = local_rot
            if want_tangents:
                for dof, dr in partials:
                    tangents[i, dof] = bone.local @ dr
        else:
            parent = transforms[bone.parent]
            transforms[i] = parent @ local_rot
            if want_tangents:
                np.matmul(tangents[bone.parent], local_rot, out=tangents[i])
                if partials:
                    anchored = parent @ bone.local
                    for dof, dr in partials:
                        tangents[i, dof] += anchored @ dr
    return transforms, tangents


def forward(skel: Skeleton, layout: DofLayout, theta) -> GlobalPose:
    """Global pose for an angle vector; uncontrolled axes contribute angle 0."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(layout),):
        raise ValueError(
            f"angle vector has length {theta.size}, layout expects {len(layout)}"
        )
    transforms, _ = _fk_pass(skel, layout, theta, want_tangents=False)
    transforms.setflags(write=False)
    return GlobalPose(transforms)


def forward_with_tangents(skel: Skeleton, layout: DofLayout, theta):
    """FK transforms plus exact per-DOF tangents dT/dtheta, shape (N, K, 4, 4)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(layout),):
        raise ValueError(
            f"angle vector has length {theta.size}, layout expects {len(layout)}"
        )
    return _fk_pass(skel, layout, theta, want_tangents=True)


def effector_position(pose: GlobalPose, bone: int, offset) -> np.ndarray:
    """World position of a point given in the bone's local frame."""
    t = pose.transforms[bone]
    offset = np.asarray(offset, dtype=float)
    return t[:3, :3] @ offset + t[:3, 3]


def bone_direction(pose: GlobalPose, bone: int, local_axis) -> np.ndarray:
    """World direction of a local axis (not normalized)."""
    local_axis = np.asarray(local_axis, dtype=float)
    if not np.any(local_axis):
        raise ValueError("local_axis must be non-zero")
    return pose.transforms[bone][:3, :3] @ local_axis


def pose_to_text(skel: Skeleton, pose: GlobalPose, digits: int = 17) -> str:
    """Plain-text export: per bone, its name and global 4x4 row-major matrix."""
    lines = []
    for bone, t in zip(skel.bones, pose.transforms):
        lines.append(f"bone {bone.name}")
        for row in t:
            lines.append(" ".join(f"{v:.{digits}g}" for v in row))
    return "\n".join(lines) + "\n"
