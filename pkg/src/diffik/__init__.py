"""Differentiable inverse kinematics for articulated skeletons with joint limits."""

from .baselines import ChainSpec, ccd_solve, chain_from_bones, fabrik_solve
from .fk import (
    GlobalPose,
    bone_direction,
    effector_position,
    euler_to_rotation,
    forward,
)
from .grad import value_and_gradient
from .objectives import (
    DistanceTerm,
    KnownRotationTerm,
    LookAtTerm,
    ObjectiveSpec,
    SmoothnessTerm,
    evaluate,
    evaluate_trajectory,
)
from .planner import Trajectory, plan
from .skeleton import (
    Bone,
    DofLayout,
    Skeleton,
    bundled_asset_path,
    dof_layout,
    load_skeleton,
    save_skeleton,
)
from .solver import (
    AdamState,
    SolveReport,
    SolverConfig,
    adam_step,
    dynamic_budget,
    project_bounds,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Bone",
    "ChainSpec",
    "DistanceTerm",
    "DofLayout",
    "GlobalPose",
    "KnownRotationTerm",
    "LookAtTerm",
    "ObjectiveSpec",
    "SmoothnessTerm",
    "SolveReport",
    "SolverConfig",
    "Skeleton",
    "Trajectory",
    "adam_step",
    "bone_direction",
    "bundled_asset_path",
    "ccd_solve",
    "chain_from_bones",
    "dof_layout",
    "dynamic_budget",
    "effector_position",
    "euler_to_rotation",
    "evaluate",
    "evaluate_trajectory",
    "fabrik_solve",
    "forward",
    "load_skeleton",
    "plan",
    "project_bounds",
    "save_skeleton",
    "solve",
    "value_and_gradient",
]
