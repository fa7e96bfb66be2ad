"""Dual variables: dense and index-addressed multipliers.

Inequality multipliers live on the nonnegative orthant; the element-wise
projection max(value, 0) is applied after every delta, never lazily. Equality
multipliers are unconstrained. IndexedMultiplier additionally tracks how many
times each entry has been updated, supporting problems that observe only a
subset of a large constraint group per step. Indexed dual updates are not
rescaled to correct for sampling bias of the observed subset; callers who
subsample constraints non-uniformly should account for that in their signals.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import ConstraintType, EvaluationError

__all__ = [
    "Multiplier",
    "DenseMultiplier",
    "IndexedMultiplier",
    "multiplier_values_for",
]


def _check_indices(indices, size: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("indices must be a 1-d index list")
    if idx.size:
        if idx.min() < 0 or idx.max() >= size:
            raise ValueError(f"index out of range for multiplier of size {size}")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate indices in dual update")
    return idx


class Multiplier:
    """Common storage and update semantics for dual variables."""

    def __init__(self, size: int, constraint_type: ConstraintType, values=None):
        size = int(size)
        if size < 1:
            raise ValueError(f"multiplier size must be >= 1, got {size}")
        if not isinstance(constraint_type, ConstraintType):
            raise ValueError("constraint_type must be a ConstraintType")
        self._size = size
        self._constraint_type = constraint_type
        if values is None:
            initial = np.zeros(size, dtype=np.float64)
        else:
            initial = np.asarray(values, dtype=np.float64).copy()
            if initial.shape != (size,):
                raise ValueError(
                    f"initial values shape {initial.shape} != ({size},)"
                )
        self._validate_values(initial)
        self._values = initial

    @property
    def size(self) -> int:
        return self._size

    @property
    def constraint_type(self) -> ConstraintType:
        return self._constraint_type

    @property
    def values(self) -> np.ndarray:
        """Current dual values. Treat as read-only."""
        return self._values

    def copy_values(self) -> np.ndarray:
        return self._values.copy()

    def _validate_values(self, values: np.ndarray) -> None:
        if not np.isfinite(values).all():
            raise EvaluationError("non-finite multiplier values")
        if self._constraint_type is ConstraintType.INEQUALITY and values.size:
            if values.min() < 0.0:
                raise ValueError("inequality multiplier values must be >= 0")

    def project(self) -> "Multiplier":
        """Clamp inequality multipliers at zero element-wise; equality is a no-op."""
        if self._constraint_type is ConstraintType.INEQUALITY:
            self._values = np.maximum(self._values, 0.0)
        return self

    def preview_delta(self, delta, indices=None) -> np.ndarray:
        """Values after adding delta (at ``indices`` if given) and projecting.

        Pure: the multiplier itself is not touched. With partial indices only
        the addressed entries change; unaddressed entries keep their exact
        bits.
        """
        delta = np.asarray(delta, dtype=np.float64)
        if delta.ndim != 1:
            raise ValueError("delta must be a 1-d vector")
        if indices is None:
            if delta.size != self._size:
                raise ValueError(
                    f"delta length {delta.size} != multiplier size {self._size}"
                )
            new = self._values + delta
            if self._constraint_type is ConstraintType.INEQUALITY:
                new = np.maximum(new, 0.0)
        else:
            idx = _check_indices(indices, self._size)
            if delta.size != idx.size:
                raise ValueError(
                    f"delta length {delta.size} != indices length {idx.size}"
                )
            updated = self._values[idx] + delta
            if self._constraint_type is ConstraintType.INEQUALITY:
                updated = np.maximum(updated, 0.0)
            new = self._values.copy()
            new[idx] = updated
        if not np.isfinite(new).all():
            raise EvaluationError("dual update produced non-finite multiplier values")
        return new

    def apply_dual_delta(self, delta, indices=None) -> "Multiplier":
        """Add delta at the addressed positions, then project. Returns self."""
        self._values = self.preview_delta(delta, indices)
        return self

    def load_values(self, values) -> None:
        """Replace values wholesale (checkpoint restore); invariants still checked."""
        arr = np.asarray(values, dtype=np.float64).copy()
        if arr.shape != (self._size,):
            raise ValueError(f"values shape {arr.shape} != ({self._size},)")
        self._validate_values(arr)
        self._values = arr


class DenseMultiplier(Multiplier):
    """Plain multiplier vector, updated in full (or at explicit indices)."""


class IndexedMultiplier(Multiplier):
    """Multiplier with per-index update counters for partially observed groups.

    Only indices named in a step's update have their values or counters
    changed; everything else is bitwise frozen.
    """

    def __init__(self, size: int, constraint_type: ConstraintType, values=None):
        super().__init__(size, constraint_type, values)
        self._update_count = np.zeros(self._size, dtype=np.int64)

    @property
    def update_count(self) -> np.ndarray:
        return self._update_count

    def apply_dual_delta(self, delta, indices=None) -> "IndexedMultiplier":
        new = self.preview_delta(delta, indices)
        if indices is None:
            self._update_count += 1
        else:
            self._update_count[_check_indices(indices, self._size)] += 1
        self._values = new
        return self

    def load_update_count(self, counts) -> None:
        arr = np.asarray(counts, dtype=np.int64).copy()
        if arr.shape != (self._size,):
            raise ValueError(f"update_count shape {arr.shape} != ({self._size},)")
        if arr.size and arr.min() < 0:
            raise ValueError("update counts must be >= 0")
        self._update_count = arr


def multiplier_values_for(state, multiplier: Multiplier) -> np.ndarray:
    """Gather the multiplier entries matching a state's observed indices.

    Returns the full values (as a copy) when ``observed_indices`` is absent,
    else the gathered subset in the order of the violation entries.
    """
    if state.observed_indices is None:
        return multiplier.copy_values()
    idx = _check_indices(state.observed_indices, multiplier.size)
    return multiplier.values[idx]
