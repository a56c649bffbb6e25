"""Kinematic-tree data model, skeleton file I/O, and degree-of-freedom layout."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
AXIS_NAMES = ("x", "y", "z")
QUAT_UNIT_TOL = 1e-6
ROTATION_ORTHO_TOL = 1e-6


class SkeletonError(ValueError):
    """Base error for skeleton files."""


class SkeletonParseError(SkeletonError):
    """Malformed skeleton file (bad JSON, missing fields, wrong types)."""


class SkeletonValidationError(SkeletonError):
    """Structurally invalid skeleton (ordering, limits, rotations)."""


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion [w, x, y, z] to a 3x3 rotation matrix."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Bone:
    """One bone: fixed local transform plus the axes the optimizer may rotate.

    ``controlled_axes`` holds axis indices (0=x, 1=y, 2=z) in ascending order and
    ``limits`` is index-aligned with it, (min, max) in radians. ``local`` is the
    fixed 4x4 local transform (rest rotation then offset translation, meters).
    """

    name: str
    parent: int | None
    translation: np.ndarray
    rest_rotation: np.ndarray  # quaternion [w, x, y, z]
    controlled_axes: tuple[int, ...] = ()
    limits: tuple[tuple[float, float], ...] = ()
    local: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        rest = np.asarray(self.rest_rotation, dtype=float).reshape(4)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "rest_rotation", rest)
        norm = math.sqrt(float(np.dot(rest, rest)))
        if abs(norm - 1.0) > QUAT_UNIT_TOL:
            raise SkeletonValidationError(
                f"bone '{self.name}': rest_rotation is not a unit quaternion (norm {norm:.9g})"
            )
        if tuple(sorted(set(self.controlled_axes))) != tuple(self.controlled_axes):
            raise SkeletonValidationError(
                f"bone '{self.name}': controlled_axes must be unique and ordered x,y,z"
            )
        if any(a not in (0, 1, 2) for a in self.controlled_axes):
            raise SkeletonValidationError(f"bone '{self.name}': axis index out of range")
        if len(self.limits) != len(self.controlled_axes):
            raise SkeletonValidationError(
                f"bone '{self.name}': need one (min, max) limit per controlled axis"
            )
        for axis, (lo, hi) in zip(self.controlled_axes, self.limits):
            if not (lo <= hi):
                raise SkeletonValidationError(
                    f"bone '{self.name}': axis {AXIS_NAMES[axis]} has min > max ({lo} > {hi})"
                )
        local = np.eye(4)
        local[:3, :3] = quaternion_to_matrix(rest / norm)
        local[:3, 3] = translation
        residual = local[:3, :3] @ local[:3, :3].T - np.eye(3)
        if np.max(np.abs(residual)) > ROTATION_ORTHO_TOL:
            raise SkeletonValidationError(
                f"bone '{self.name}': rest rotation is not orthonormal"
            )
        local.setflags(write=False)
        translation.setflags(write=False)
        rest.setflags(write=False)
        object.__setattr__(self, "local", local)


@dataclass(frozen=True)
class Skeleton:
    """Immutable kinematic tree; bones are stored in topological order."""

    bones: tuple[Bone, ...]
    name_to_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bones = tuple(self.bones)
        object.__setattr__(self, "bones", bones)
        index = {}
        for i, bone in enumerate(bones):
            if bone.name in index:
                raise SkeletonValidationError(f"bone '{bone.name}': duplicate name")
            if bone.parent is not None and not (0 <= bone.parent < i):
                raise SkeletonValidationError(
                    f"bone '{bone.name}': parent index {bone.parent} does not precede it"
                )
            index[bone.name] = i
        object.__setattr__(self, "name_to_index", index)

    def __len__(self) -> int:
        return len(self.bones)

    def index(self, name: str) -> int:
        try:
            return self.name_to_index[name]
        except KeyError:
            raise SkeletonValidationError(f"unknown bone '{name}'") from None

    def children(self, bone_index: int) -> list[int]:
        return [i for i, b in enumerate(self.bones) if b.parent == bone_index]


@dataclass(frozen=True)
class DofLayout:
    """Flattening of the controlled (bone, axis) pairs into one angle vector.

    ``entries`` lists (bone index, axis index) in skeleton order then x,y,z;
    ``lower``/``upper`` are the per-entry bounds in radians. ``axes_by_bone``
    maps a bone index to its ((axis, dof position), ...) pairs for FK use.
    """

    entries: tuple[tuple[int, int], ...]
    lower: np.ndarray
    upper: np.ndarray
    axes_by_bone: dict[int, tuple[tuple[int, int], ...]] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(len(self.entries))
        upper = np.asarray(self.upper, dtype=float).reshape(len(self.entries))
        if np.any(lower > upper):
            raise SkeletonValidationError("layout bounds must satisfy lower <= upper")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        by_bone: dict[int, list[tuple[int, int]]] = {}
        for dof, (bone, axis) in enumerate(self.entries):
            by_bone.setdefault(bone, []).append((axis, dof))
        object.__setattr__(
            self, "axes_by_bone", {b: tuple(v) for b, v in by_bone.items()}
        )

    def __len__(self) -> int:
        return len(self.entries)


def dof_layout(skel: Skeleton, controlled: list[str]) -> DofLayout:
    """Build the angle-vector layout for the named bones.

    Entries are ordered by skeleton index then axis (x, y, z), independent of
    the order names are given in. Raises for names not in the skeleton.
    """
    indices = sorted(skel.index(name) for name in controlled)
    entries = []
    lower = []
    upper = []
    for bone_index in indices:
        bone = skel.bones[bone_index]
        for axis, (lo, hi) in zip(bone.controlled_axes, bone.limits):
            entries.append((bone_index, axis))
            lower.append(lo)
            upper.append(hi)
    return DofLayout(tuple(entries), np.array(lower, dtype=float), np.array(upper, dtype=float))


def _require(condition: bool, message: str):
    if not condition:
        raise SkeletonParseError(message)


def load_skeleton(path: str | Path) -> Skeleton:
    """Load and validate a skeleton file (see docs/formats in the README)."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise SkeletonParseError(f"cannot read skeleton file: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SkeletonParseError(f"skeleton file is not valid JSON: {exc}") from exc
    return skeleton_from_dict(doc)


def skeleton_from_dict(doc: dict) -> Skeleton:
    _require(isinstance(doc, dict), "top level must be an object")
    _require(doc.get("version") == FORMAT_VERSION, f"unsupported version {doc.get('version')!r}")
    units = doc.get("units", "radians")
    _require(units in ("radians", "degrees"), f"units must be 'radians' or 'degrees', got {units!r}")
    scale = math.pi / 180.0 if units == "degrees" else 1.0
    raw_bones = doc.get("bones")
    _require(isinstance(raw_bones, list) and raw_bones, "'bones' must be a non-empty list")

    seen: dict[str, int] = {}
    names = [b.get("name") for b in raw_bones]
    bones: list[Bone] = []
    for i, entry in enumerate(raw_bones):
        _require(isinstance(entry, dict), f"bone #{i} must be an object")
        name = entry.get("name")
        _require(isinstance(name, str) and name, f"bone #{i} needs a non-empty name")
        parent_name = entry.get("parent")
        if parent_name is None:
            parent = None
        else:
            if parent_name not in seen:
                if parent_name in names:
                    raise SkeletonValidationError(
                        f"bone '{name}': parent '{parent_name}' appears after it"
                    )
                raise SkeletonValidationError(f"bone '{name}': unknown parent '{parent_name}'")
            parent = seen[parent_name]
        try:
            translation = [float(v) for v in entry["translation"]]
            rest = [float(v) for v in entry.get("rest_rotation", [1.0, 0.0, 0.0, 0.0])]
        except (KeyError, TypeError, ValueError) as exc:
            raise SkeletonParseError(f"bone '{name}': bad translation/rest_rotation") from exc
        _require(len(translation) == 3, f"bone '{name}': translation must have 3 components")
        _require(len(rest) == 4, f"bone '{name}': rest_rotation must have 4 components")
        axis_names = entry.get("controlled_axes", [])
        _require(
            isinstance(axis_names, list) and all(a in AXIS_NAMES for a in axis_names),
            f"bone '{name}': controlled_axes must be a subset of ['x','y','z']",
        )
        axes = tuple(sorted(AXIS_NAMES.index(a) for a in axis_names))
        raw_limits = entry.get("limits", {})
        limits = []
        for axis in axes:
            axis_name = AXIS_NAMES[axis]
            if axis_name not in raw_limits:
                raise SkeletonValidationError(
                    f"bone '{name}': missing limits for controlled axis {axis_name}"
                )
            pair = raw_limits[axis_name]
            _require(
                isinstance(pair, list) and len(pair) == 2,
                f"bone '{name}': limits.{axis_name} must be [min, max]",
            )
            limits.append((float(pair[0]) * scale, float(pair[1]) * scale))
        bones.append(Bone(name, parent, np.array(translation), np.array(rest), axes, tuple(limits)))
        seen[name] = i
    return Skeleton(tuple(bones))


def skeleton_to_dict(skel: Skeleton) -> dict:
    """Serialize to the canonical (radians) file structure."""
    bones = []
    for bone in skel.bones:
        entry = {
            "name": bone.name,
            "parent": None if bone.parent is None else skel.bones[bone.parent].name,
            "translation": [float(v) for v in bone.translation],
            "rest_rotation": [float(v) for v in bone.rest_rotation],
            "controlled_axes": [AXIS_NAMES[a] for a in bone.controlled_axes],
            "limits": {
                AXIS_NAMES[a]: [float(lo), float(hi)]
                for a, (lo, hi) in zip(bone.controlled_axes, bone.limits)
            },
        }
        bones.append(entry)
    return {"version": FORMAT_VERSION, "units": "radians", "bones": bones}


def save_skeleton(skel: Skeleton, path: str | Path):
    Path(path).write_text(json.dumps(skeleton_to_dict(skel), indent=2) + "\n")


def subtree_reach(skel: Skeleton, base_index: int) -> float:
    """Summed segment lengths of all bones strictly below ``base_index``."""
    descendants = {base_index}
    total = 0.0
    for i, bone in enumerate(skel.bones):
        if bone.parent in descendants:
            descendants.add(i)
            total += float(np.linalg.norm(bone.translation))
    return total


def bundled_asset_path(name: str = "humanoid_upper_body") -> Path:
    """Filesystem path of a skeleton asset shipped with the package."""
    return Path(resources.files("diffik").joinpath(f"assets/{name}.json"))
