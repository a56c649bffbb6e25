"""Objective terms and their weighted composition into a single loss.

Four term kinds are supported: end-effector distance, look-at alignment,
deviation from a known rotation, and trajectory smoothness of order 1..3.
The scalar formulas are written over the generic helpers in :mod:`diffik.dual`
so the gradient engine can evaluate them on dual values through the very same
code path; the plain evaluation below therefore matches the differentiated
value bit for bit.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dual
from .fk import GlobalPose, forward
from .skeleton import DofLayout, Skeleton

# Smoothing inside the Euclidean norm keeps the distance gradient finite at 0.
NORM_EPS = 1e-12
# The arccos argument is clamped away from +-1 so its derivative stays finite.
ARCCOS_CLAMP = 1e-7


class ObjectiveError(ValueError):
    """Bad objective construction or a term that does not fit its context."""


def _vec3(v, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(3)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DistanceTerm:
    """Euclidean distance between an effector point and a target point."""

    bone: str
    target: np.ndarray
    offset: np.ndarray = (0.0, 0.0, 0.0)
    weight: float = 1.0
    kind = "distance"

    def __post_init__(self):
        if self.weight < 0:
            raise ObjectiveError("term weight must be non-negative")
        object.__setattr__(self, "target", _vec3(self.target, "target"))
        object.__setattr__(self, "offset", _vec3(self.offset, "offset"))


@dataclass(frozen=True)
class LookAtTerm:
    """Squared angle between a bone-fixed axis and a target direction.

    ``target_offset`` is an additive tweak to the target direction, kept at
    zero unless a caller wants to bias the alignment.
    """

    bone: str
    local_axis: np.ndarray
    target_dir: np.ndarray
    weight: float = 1.0
    target_offset: np.ndarray = (0.0, 0.0, 0.0)
    kind = "look_at"

    def __post_init__(self):
        if self.weight < 0:
            raise ObjectiveError("term weight must be non-negative")
        object.__setattr__(self, "local_axis", _vec3(self.local_axis, "local_axis"))
        object.__setattr__(self, "target_dir", _vec3(self.target_dir, "target_dir"))
        object.__setattr__(self, "target_offset", _vec3(self.target_offset, "target_offset"))
        if not np.any(self.local_axis):
            raise ObjectiveError("look-at local_axis must be non-zero")
        if not np.any(self.target_dir + self.target_offset):
            raise ObjectiveError("look-at target direction must be non-zero")


@dataclass(frozen=True)
class KnownRotationTerm:
    """Mean squared deviation of selected DOFs from candidate angles."""

    theta_star: np.ndarray
    mask: np.ndarray | None = None
    weight: float = 1.0
    kind = "known_rotation"

    def __post_init__(self):
        if self.weight < 0:
            raise ObjectiveError("term weight must be non-negative")
        star = np.asarray(self.theta_star, dtype=float).ravel()
        star.setflags(write=False)
        object.__setattr__(self, "theta_star", star)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=float).ravel()
            if mask.shape != star.shape:
                raise ObjectiveError("known-rotation mask length must match theta_star")
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class SmoothnessTerm:
    """Summed squared n-th finite difference of a joint-angle trajectory."""

    order: int
    weight: float = 1.0
    kind = "smoothness"

    def __post_init__(self):
        if self.weight < 0:
            raise ObjectiveError("term weight must be non-negative")
        if self.order not in (1, 2, 3):
            raise ObjectiveError(f"smoothness order must be 1, 2 or 3, got {self.order}")


ObjectiveTerm = DistanceTerm | LookAtTerm | KnownRotationTerm | SmoothnessTerm


@dataclass(frozen=True)
class ObjectiveSpec:
    """Ordered weighted terms; the loss is their weighted sum."""

    terms: tuple[ObjectiveTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ObjectiveError("objective needs at least one term")
        object.__setattr__(self, "terms", terms)

    def pose_terms(self):
        return tuple(t for t in self.terms if t.kind != "smoothness")

    def smoothness_terms(self):
        return tuple(t for t in self.terms if t.kind == "smoothness")


# ---------------------------------------------------------------------------
# Term formulas, generic over plain arrays and duals.

def distance_value(transform, offset, target):
    point = transform[:3, :3] @ offset + transform[:3, 3]
    diff = target - point
    return dual.sqrt_s(dual.vdot(diff, diff) + NORM_EPS)


def look_at_value(transform, local_axis, target_dir):
    direction = transform[:3, :3] @ local_axis
    norm_t = math.sqrt(float(np.dot(target_dir, target_dir)))
    cos = dual.vdot(direction, target_dir) / (
        dual.sqrt_s(dual.vdot(direction, direction)) * norm_t
    )
    cos = dual.clip_s(cos, -1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP)
    angle = dual.arccos_s(cos)
    return angle * angle


def known_rotation_value(theta, theta_star, mask):
    diff = theta - theta_star
    sq = diff * diff
    selected = dual.sum_s(sq * mask)
    return selected / max(float(np.sum(mask)), 1.0)


def pose_term_value(term: ObjectiveTerm, transform, theta):
    """Value of a non-smoothness term given the bone transform (or dual)."""
    if term.kind == "distance":
        return distance_value(transform, term.offset, term.target)
    if term.kind == "look_at":
        return look_at_value(transform, term.local_axis, term.target_dir + term.target_offset)
    if term.kind == "known_rotation":
        mask = term.mask if term.mask is not None else np.ones_like(term.theta_star)
        return known_rotation_value(theta, term.theta_star, mask)
    raise ObjectiveError(f"term kind {term.kind!r} needs a trajectory context")


def resolve_bone(skel: Skeleton, term: ObjectiveTerm) -> int | None:
    name = getattr(term, "bone", None)
    if name is None:
        return None
    index = skel.name_to_index.get(name)
    if index is None:
        raise ObjectiveError(f"objective references unknown bone '{name}'")
    return index


# ---------------------------------------------------------------------------
# Pose-level objective functions.

def distance_objective(pose: GlobalPose, bone: int, offset, target) -> float:
    """Smoothed Euclidean distance from the effector point to the target."""
    return float(distance_value(pose.transforms[bone], np.asarray(offset, float),
                                np.asarray(target, float)))


def look_at_objective(pose: GlobalPose, bone: int, local_axis, target_dir) -> float:
    """Squared angle between the bone axis and the target direction."""
    target_dir = np.asarray(target_dir, dtype=float)
    if not np.any(target_dir):
        raise ObjectiveError("look-at target direction must be non-zero")
    return float(look_at_value(pose.transforms[bone], np.asarray(local_axis, float), target_dir))


def known_rotation_objective(theta, theta_star, mask=None) -> float:
    """Masked mean of squared angle deviations."""
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if theta.shape != theta_star.shape:
        raise ObjectiveError("theta and theta_star must have the same length")
    if mask is None:
        mask = np.ones_like(theta)
    else:
        mask = np.asarray(mask, dtype=float)
        if mask.shape != theta.shape:
            raise ObjectiveError("mask length must match theta")
    return float(known_rotation_value(theta, theta_star, mask))


def smoothness_objective(trajectory, order: int) -> float:
    """Signed-binomial finite-difference energy of the given order."""
    points = np.asarray(trajectory, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) <= order:
        warnings.warn(
            f"trajectory of length {len(points)} is too short for order {order}; "
            "smoothness contributes 0",
            stacklevel=2,
        )
        return 0.0
    diffs = np.diff(points, n=order, axis=0)
    return float(np.sum(diffs * diffs))


# ---------------------------------------------------------------------------
# Composition.

def evaluate(spec: ObjectiveSpec, skel: Skeleton, layout: DofLayout, theta) -> float:
    """Weighted sum of all terms for a single pose; one FK pass is shared."""
    theta = np.asarray(theta, dtype=float)
    if spec.smoothness_terms():
        raise ObjectiveError("smoothness terms require a trajectory context")
    bone_of = {id(t): resolve_bone(skel, t) for t in spec.terms}
    pose = forward(skel, layout, theta)
    total = 0.0
    for term in spec.terms:
        bone = bone_of[id(term)]
        transform = pose.transforms[bone] if bone is not None else None
        total = total + term.weight * pose_term_value(term, transform, theta)
    return float(total)


def evaluate_trajectory(spec: ObjectiveSpec, skel: Skeleton, layout: DofLayout, points) -> float:
    """Trajectory loss: pose terms bind to the final point, smoothness to all.

    Every trajectory point is evaluated with exactly one FK pass.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != len(layout):
        raise ObjectiveError("trajectory must have shape (points, dofs)")
    poses = [forward(skel, layout, p) for p in points]
    final = poses[-1]
    theta = points[-1]
    total = 0.0
    for term in spec.terms:
        if term.kind == "smoothness":
            total = total + term.weight * smoothness_objective(points, term.order)
        else:
            bone = resolve_bone(skel, term)
            transform = final.transforms[bone] if bone is not None else None
            total = total + term.weight * pose_term_value(term, transform, theta)
    return float(total)


# ---------------------------------------------------------------------------
# Objective spec files.

def term_to_dict(term: ObjectiveTerm) -> dict:
    if term.kind == "distance":
        return {
            "kind": "distance",
            "weight": term.weight,
            "bone": term.bone,
            "offset": list(map(float, term.offset)),
            "target": list(map(float, term.target)),
        }
    if term.kind == "look_at":
        return {
            "kind": "look_at",
            "weight": term.weight,
            "bone": term.bone,
            "local_axis": list(map(float, term.local_axis)),
            "target_dir": list(map(float, term.target_dir)),
            "target_offset": list(map(float, term.target_offset)),
        }
    if term.kind == "known_rotation":
        return {
            "kind": "known_rotation",
            "weight": term.weight,
            "theta_star": list(map(float, term.theta_star)),
            "mask": None if term.mask is None else list(map(float, term.mask)),
        }
    return {"kind": "smoothness", "weight": term.weight, "order": term.order}


def term_from_dict(doc: dict) -> ObjectiveTerm:
    kind = doc.get("kind")
    weight = float(doc.get("weight", 1.0))
    if kind == "distance":
        return DistanceTerm(
            bone=doc["bone"],
            target=doc["target"],
            offset=doc.get("offset", (0.0, 0.0, 0.0)),
            weight=weight,
        )
    if kind == "look_at":
        return LookAtTerm(
            bone=doc["bone"],
            local_axis=doc["local_axis"],
            target_dir=doc["target_dir"],
            target_offset=doc.get("target_offset", (0.0, 0.0, 0.0)),
            weight=weight,
        )
    if kind == "known_rotation":
        return KnownRotationTerm(
            theta_star=doc["theta_star"], mask=doc.get("mask"), weight=weight
        )
    if kind == "smoothness":
        return SmoothnessTerm(order=int(doc["order"]), weight=weight)
    raise ObjectiveError(f"unknown term kind {kind!r}")


def spec_to_dict(spec: ObjectiveSpec) -> dict:
    return {"terms": [term_to_dict(t) for t in spec.terms]}


def spec_from_dict(doc: dict) -> ObjectiveSpec:
    try:
        terms = doc["terms"]
    except (TypeError, KeyError):
        raise ObjectiveError("objective file needs a 'terms' list") from None
    return ObjectiveSpec(tuple(term_from_dict(t) for t in terms))


def load_objective_spec(path: str | Path) -> ObjectiveSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ObjectiveError(f"cannot read objective file: {exc}") from exc
    return spec_from_dict(doc)


def save_objective_spec(spec: ObjectiveSpec, path: str | Path):
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")
