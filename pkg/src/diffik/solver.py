"""Projected cautious-Adam descent over the angle vector.

The update keeps exponential moving averages of the gradient and its square,
bias-corrects both, and optionally applies a cautious mask that zeroes the
update on coordinates where momentum and gradient disagree in sign, with a
compensatory magnitude rescaling. Bounds are enforced by clamping after every
step. Three stopping criteria apply: loss threshold, iteration cap, and a
dynamic cap derived from a wall-clock budget and the mean iteration time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from time import perf_counter
from typing import Callable

import numpy as np

from .grad import EvaluationError, value_and_gradient
from .objectives import ObjectiveSpec
from .skeleton import DofLayout, Skeleton

STOP_THRESHOLD = "threshold"
STOP_MAX_ITERATIONS = "max_iterations"
STOP_TIME_BUDGET = "time_budget"


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters and stopping thresholds for one solve."""

    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iterations: int = 500
    loss_threshold: float = 0.005
    time_budget: float | None = None  # seconds
    cautious: bool = True
    cautious_alpha: bool = True  # disable to drop the dim/(nnz+1) rescaling

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.loss_threshold <= 0:
            raise ValueError("loss_threshold must be positive")


@dataclass(frozen=True)
class AdamState:
    """First/second moment vectors and the completed-step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


@dataclass
class SolveReport:
    """Outcome of one solve; ``success`` holds iff final_loss < the threshold."""

    final_theta: np.ndarray
    final_loss: float
    iterations: int
    wall_time: float
    success: bool
    stop_reason: str
    loss_trace: list[float] | None = None
    iteration_times: list[float] | None = None
    time_budget_used: bool = False

    def to_dict(self) -> dict:
        doc = {
            "success": self.success,
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "final_loss": self.final_loss,
            "wall_time_s": self.wall_time,
            "final_theta": [float(v) for v in self.final_theta],
            "time_budget_used": self.time_budget_used,
        }
        if self.loss_trace is not None:
            doc["loss_trace"] = [float(v) for v in self.loss_trace]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def project_bounds(theta, layout: DofLayout) -> np.ndarray:
    """Element-wise clamp of the angle vector to the layout bounds."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(layout),):
        raise ValueError(f"angle vector has length {theta.size}, layout expects {len(layout)}")
    return np.clip(theta, layout.lower, layout.upper)


def cautious_momentum(m_hat, grad, eps: float, alpha_scaling: bool = True) -> np.ndarray:
    """Masked, rescaled momentum used in place of the bias-corrected one.

    Coordinates where ``m_hat`` and ``grad`` disagree in sign get exactly zero.
    The mask is normalized by the agreeing fraction, and the whole vector is
    scaled by dim/(nnz(m_hat > 0) + 1) unless ``alpha_scaling`` is off.
    """
    agree = (m_hat * grad > 0.0).astype(float)
    mask = agree / max(float(agree.mean()), eps)
    scaled = m_hat * mask
    if alpha_scaling:
        scaled = scaled * (m_hat.size / (float(np.count_nonzero(m_hat > 0.0)) + 1.0))
    return scaled


def adam_step(
    state: AdamState, theta: np.ndarray, grad: np.ndarray, config: SolverConfig
) -> tuple[AdamState, np.ndarray]:
    """One (cautious) Adam update; returns the new state and angles."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise EvaluationError(f"non-finite gradient component(s) at {bad.tolist()}")
    t_next = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1 ** t_next)
    v_hat = v / (1.0 - config.beta2 ** t_next)
    if config.cautious:
        direction = cautious_momentum(m_hat, grad, config.eps, config.cautious_alpha)
    else:
        direction = m_hat
    theta_next = theta - config.learning_rate * direction / (np.sqrt(v_hat) + config.eps)
    return AdamState(m, v, t_next), theta_next


def dynamic_budget(max_iterations: int, time_budget: float, iteration_times) -> int:
    """Iteration cap implied by the time budget and mean iteration time."""
    mean = float(np.mean(iteration_times))
    if mean <= 0.0:
        return max_iterations
    allowed = min(max_iterations, math.floor(time_budget / mean))
    return max(1, allowed)


def minimize(
    loss_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    config: SolverConfig,
    record_trace: bool = False,
) -> tuple[np.ndarray, SolveReport]:
    """Core projected descent loop shared by the IK solver and the planner."""
    start_time = perf_counter()
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    value, grad = loss_and_grad(x)
    trace = [value] if record_trace else None
    state = AdamState.fresh(x.size)
    iteration_times: list[float] = []
    n_allowed = config.max_iterations
    iterations = 0
    if value < config.loss_threshold:
        stop = STOP_THRESHOLD
    else:
        stop = None
    while stop is None:
        if iterations >= n_allowed:
            stop = (
                STOP_TIME_BUDGET if n_allowed < config.max_iterations else STOP_MAX_ITERATIONS
            )
            break
        tick = perf_counter()
        state, x = adam_step(state, x, grad, config)
        np.clip(x, lower, upper, out=x)
        value, grad = loss_and_grad(x)
        iterations += 1
        iteration_times.append(perf_counter() - tick)
        if record_trace:
            trace.append(value)
        if config.time_budget is not None:
            n_allowed = dynamic_budget(config.max_iterations, config.time_budget, iteration_times)
        if value < config.loss_threshold:
            stop = STOP_THRESHOLD
    report = SolveReport(
        final_theta=x,
        final_loss=float(value),
        iterations=iterations,
        wall_time=perf_counter() - start_time,
        success=bool(value < config.loss_threshold),
        stop_reason=stop,
        loss_trace=trace,
        iteration_times=iteration_times if config.time_budget is not None else None,
        time_budget_used=config.time_budget is not None,
    )
    return x, report


def solve(
    skel: Skeleton,
    layout: DofLayout,
    spec: ObjectiveSpec,
    theta0,
    config: SolverConfig = SolverConfig(),
    record_trace: bool = False,
) -> SolveReport:
    """Minimize the objective from ``theta0``, projected to the layout bounds.

    Deterministic for identical inputs when no time budget is set; a time
    budget makes the iteration cap depend on measured wall-clock time, which
    the report flags via ``time_budget_used``.
    """
    def loss_and_grad(theta):
        return value_and_gradient(spec, skel, layout, theta)

    _, report = minimize(
        loss_and_grad, theta0, layout.lower, layout.upper, config, record_trace
    )
    return report


def load_solver_config(path: str | Path) -> SolverConfig:
    doc = json.loads(Path(path).read_text())
    return SolverConfig(**doc)
