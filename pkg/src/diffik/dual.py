"""Forward-mode differentiable values.

A :class:`Dual` carries a value (scalar or ndarray) together with its tangent
with respect to the angle vector; tangents hold one leading axis of length K
(the DOF count) followed by the value's shape. Arithmetic on the value
component applies exactly the same floating-point operations as plain numpy,
so evaluating an objective through duals reproduces the undifferentiated
value bit for bit.

The helper functions at the bottom (``vdot``, ``sqrt_s`` ...) accept either
plain numbers/arrays or duals, which lets objective formulas be written once
and used for both evaluation and differentiation.
"""
from __future__ import annotations

import numpy as np


def _lift(const):
    """Insert the tangent axis into a constant so it broadcasts against tangents."""
    arr = np.asarray(const)
    return arr[None, ...] if arr.ndim else arr


def _conform(value, tangent):
    """Broadcast a tangent to (K,) + value.shape after a shape-growing op."""
    shape = (tangent.shape[0],) + np.shape(value)
    if tangent.shape != shape:
        tangent = np.broadcast_to(tangent, shape)
    return tangent


class Dual:
    """Value plus tangent; see module docstring for the shape convention."""

    __slots__ = ("value", "tangent")
    __array_ufunc__ = None  # keep numpy from absorbing us into object arrays

    def __init__(self, value, tangent):
        self.value = value
        self.tangent = np.asarray(tangent)

    @classmethod
    def seed(cls, vector) -> "Dual":
        """Independent variable: tangent is the identity."""
        vector = np.asarray(vector, dtype=float)
        return cls(vector, np.eye(vector.size))

    def __repr__(self):
        return f"Dual(value={self.value!r})"

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __add__(self, other):
        if isinstance(other, Dual):
            value = self.value + other.value
            return Dual(value, _conform(value, self.tangent) + _conform(value, other.tangent))
        value = self.value + other
        return Dual(value, _conform(value, self.tangent))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            value = self.value - other.value
            return Dual(value, _conform(value, self.tangent) - _conform(value, other.tangent))
        value = self.value - other
        return Dual(value, _conform(value, self.tangent))

    def __rsub__(self, other):
        value = other - self.value
        return Dual(value, _conform(value, -self.tangent))

    def __mul__(self, other):
        if isinstance(other, Dual):
            value = self.value * other.value
            tangent = self.tangent * _lift(other.value) + _lift(self.value) * other.tangent
            return Dual(value, _conform(value, tangent))
        value = self.value * other
        return Dual(value, _conform(value, self.tangent * _lift(other)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            value = self.value / other.value
            tangent = (
                self.tangent * _lift(other.value) - _lift(self.value) * other.tangent
            ) / _lift(other.value * other.value)
            return Dual(value, _conform(value, tangent))
        value = self.value / other
        return Dual(value, _conform(value, self.tangent / _lift(other)))

    def __rtruediv__(self, other):
        value = other / self.value
        tangent = -_lift(other) * self.tangent / _lift(self.value * self.value)
        return Dual(value, _conform(value, tangent))

    def __matmul__(self, other):
        if isinstance(other, Dual):
            value = self.value @ other.value
            tangent = self.tangent @ other.value + self.value @ other.tangent
            return Dual(value, tangent)
        return Dual(self.value @ other, self.tangent @ other)

    def __rmatmul__(self, other):
        return Dual(other @ self.value, other @ self.tangent)

    def __getitem__(self, idx):
        key = idx if isinstance(idx, tuple) else (idx,)
        return Dual(self.value[idx], self.tangent[(slice(None),) + key])

    def sum(self):
        axes = tuple(range(1, self.tangent.ndim))
        return Dual(np.sum(self.value), self.tangent.sum(axis=axes) if axes else self.tangent)


def value_of(x):
    return x.value if isinstance(x, Dual) else x


def sum_s(x):
    """Sum of all elements."""
    return x.sum() if isinstance(x, Dual) else np.sum(x)


def vdot(a, b):
    """Dot product along the last value axis."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        prod = a * b if isinstance(a, Dual) else b * a
        return Dual(np.sum(prod.value, axis=-1), np.sum(prod.tangent, axis=-1))
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def sqrt_s(x):
    if isinstance(x, Dual):
        value = np.sqrt(x.value)
        return Dual(value, x.tangent * _lift(0.5 / value))
    return np.sqrt(x)


def arccos_s(x):
    if isinstance(x, Dual):
        value = np.arccos(x.value)
        return Dual(value, x.tangent * _lift(-1.0 / np.sqrt(1.0 - x.value * x.value)))
    return np.arccos(x)


def clip_s(x, lo, hi):
    """Clamp; the tangent is zeroed on the clamped set."""
    if isinstance(x, Dual):
        value = np.clip(x.value, lo, hi)
        inside = np.asarray((x.value > lo) & (x.value < hi), dtype=float)
        return Dual(value, x.tangent * _lift(inside))
    return np.clip(x, lo, hi)
