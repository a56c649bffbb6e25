"""Exact objective gradients with respect to the angle vector.

Differentiation is forward-mode: the FK pass propagates per-DOF tangent
matrices, and the objective formulas from :mod:`diffik.objectives` are
re-evaluated on :class:`diffik.dual.Dual` values. Because those formulas are
shared with the plain evaluation path, the value returned here matches
``objectives.evaluate`` bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .dual import Dual
from .fk import forward_with_tangents
from .objectives import ObjectiveError, ObjectiveSpec, pose_term_value, resolve_bone
from .skeleton import DofLayout, Skeleton


class EvaluationError(RuntimeError):
    """A term produced a non-finite value or gradient."""


def value_and_gradient(
    spec: ObjectiveSpec, skel: Skeleton, layout: DofLayout, theta
) -> tuple[float, np.ndarray]:
    """Objective value and its exact gradient for a single pose.

    The gradient has one entry per layout DOF. Raises
    :class:`EvaluationError` naming the term kind if anything non-finite
    appears, and :class:`ObjectiveError` for terms that do not fit a
    single-pose context or reference unknown bones.
    """
    theta = np.asarray(theta, dtype=float)
    if spec.smoothness_terms():
        raise ObjectiveError("smoothness terms require a trajectory context")
    transforms, tangents = forward_with_tangents(skel, layout, theta)
    theta_dual = Dual.seed(theta)
    total_value = 0.0
    total_grad = np.zeros(len(layout))
    for term in spec.terms:
        bone = resolve_bone(skel, term)
        carrier = Dual(transforms[bone], tangents[bone]) if bone is not None else None
        out = pose_term_value(term, carrier, theta_dual)
        value = float(out.value)
        grad = np.asarray(out.tangent, dtype=float)
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            raise EvaluationError(f"non-finite result in {term.kind} term")
        total_value = total_value + term.weight * value
        total_grad = total_grad + term.weight * grad
    return float(total_value), total_grad


def smoothness_value_and_gradient(points: np.ndarray, order: int) -> tuple[float, np.ndarray]:
    """Finite-difference energy of a trajectory and its exact gradient.

    ``points`` has shape (T, K) with T > order; the gradient matches the
    full stacked trajectory, including any fixed head point.
    """
    points = np.asarray(points, dtype=float)
    diffs = np.diff(points, n=order, axis=0)
    value = float(np.sum(diffs * diffs))
    grad = np.zeros_like(points)
    for k in range(order + 1):
        coeff = 2.0 * ((-1) ** k) * math.comb(order, k)
        grad[order - k : order - k + len(diffs)] += coeff * diffs
    return value, grad
