"""Constrained minimization problem abstraction and evaluation-state types.

A problem is an objective f(x) minimized subject to named groups of
constraints. Inequality groups use the convention g(x) <= 0, so a positive
violation value means "infeasible"; equality groups use h(x) = 0. Each group
carries its own multiplier vector and formulation choice, which lets one
problem mix plain Lagrangian, augmented Lagrangian, and quadratic penalty
treatment across groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Mapping, Optional

import numpy as np

__all__ = [
    "EvaluationError",
    "ConstraintType",
    "Formulation",
    "ConstraintState",
    "ConstraintGroup",
    "CMPState",
    "Evaluation",
    "ConstrainedMinimizationProblem",
]

_GROUP_NAME_CHARS = frozenset(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-"
)


class EvaluationError(RuntimeError):
    """Non-finite value produced by an evaluation or an update.

    ``group_id`` names the offending constraint group when the failure can be
    attributed to one; it is None for objective or primal-point failures.
    """

    def __init__(self, message: str, group_id: Optional[str] = None):
        super().__init__(message)
        self.group_id = group_id


class ConstraintType(Enum):
    """Constraint sign convention: g(x) <= 0 for INEQUALITY, h(x) = 0 for EQUALITY."""

    INEQUALITY = "inequality"
    EQUALITY = "equality"


class Formulation(Enum):
    """How a group's violations enter the primal objective and the dual signal."""

    LAGRANGIAN = "lagrangian"
    AUGMENTED_LAGRANGIAN = "augmented_lagrangian"
    QUADRATIC_PENALTY = "quadratic_penalty"


def _as_float_vector(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConstraintState:
    """One measurement of a constraint group.

    Parameters
    ----------
    violation : array_like
        Raw constraint values g(x) or h(x); no clamping is applied at report
        time (dual updates need the signed value).
    strict_violation : array_like, optional
        A possibly non-differentiable measurement used only for dual updates
        (the proxy rule). Same length as ``violation``.
    observed_indices : array_like of int, optional
        Indices into the group's constraint set that this state observes.
        When present its length matches ``violation`` and all indices are
        pairwise distinct.
    """

    violation: np.ndarray
    strict_violation: Optional[np.ndarray] = None
    observed_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        violation = _as_float_vector(self.violation, "violation")
        if not np.isfinite(violation).all():
            raise EvaluationError("non-finite constraint violation")
        object.__setattr__(self, "violation", violation)

        if self.strict_violation is not None:
            strict = _as_float_vector(self.strict_violation, "strict_violation")
            if strict.shape != violation.shape:
                raise ValueError(
                    "strict_violation length "
                    f"{strict.size} != violation length {violation.size}"
                )
            if not np.isfinite(strict).all():
                raise EvaluationError("non-finite strict violation")
            object.__setattr__(self, "strict_violation", strict)

        if self.observed_indices is not None:
            idx = np.asarray(self.observed_indices, dtype=np.int64)
            if idx.ndim != 1:
                raise ValueError("observed_indices must be a 1-d index list")
            if idx.size != violation.size:
                raise ValueError(
                    f"observed_indices length {idx.size} != violation length "
                    f"{violation.size}"
                )
            if idx.size and (np.unique(idx).size != idx.size):
                raise ValueError("observed_indices contains duplicates")
            if idx.size and idx.min() < 0:
                raise ValueError("observed_indices contains negative indices")
            object.__setattr__(self, "observed_indices", idx)

    @property
    def dual_violation(self) -> np.ndarray:
        """The measurement that feeds dual updates: strict if present, else violation."""
        if self.strict_violation is not None:
            return self.strict_violation
        return self.violation


class ConstraintGroup:
    """A named block of scalar constraints sharing one multiplier and formulation.

    Parameters
    ----------
    name : str
        Unique group id (letters, digits, ``_`` and ``-`` only; the id appears
        in checkpoint keys).
    constraint_type : ConstraintType
    size : int
        Number of scalar constraints in the group.
    formulation : Formulation
    multiplier : Multiplier, optional
        Pre-built multiplier; allocated automatically at registration when
        omitted. Forbidden for QUADRATIC_PENALTY groups.
    penalty : PenaltyCoefficient, optional
        Required for AUGMENTED_LAGRANGIAN and QUADRATIC_PENALTY, forbidden for
        LAGRANGIAN.
    indexed : bool
        Allocate an IndexedMultiplier (per-index update counters) instead of a
        DenseMultiplier.
    initial_multiplier : array_like, optional
        Initial multiplier values overriding the zero default.
    """

    def __init__(
        self,
        name: str,
        constraint_type: ConstraintType,
        size: int,
        formulation: Formulation = Formulation.LAGRANGIAN,
        multiplier=None,
        penalty=None,
        indexed: bool = False,
        initial_multiplier=None,
    ):
        if not isinstance(name, str) or not name:
            raise ValueError("group name must be a non-empty string")
        if not set(name) <= _GROUP_NAME_CHARS:
            raise ValueError(
                f"group name {name!r} may only contain letters, digits, '_' and '-'"
            )
        if not isinstance(constraint_type, ConstraintType):
            raise ValueError("constraint_type must be a ConstraintType")
        if not isinstance(formulation, Formulation):
            raise ValueError("formulation must be a Formulation")
        size = int(size)
        if size <= 0:
            raise ValueError(f"group size must be positive, got {size}")

        if formulation is Formulation.QUADRATIC_PENALTY:
            if multiplier is not None or initial_multiplier is not None or indexed:
                raise ValueError(
                    f"group {name!r}: quadratic penalty groups have no multiplier"
                )
        if formulation is Formulation.LAGRANGIAN and penalty is not None:
            raise ValueError(f"group {name!r}: Lagrangian groups have no penalty")
        if formulation in (
            Formulation.AUGMENTED_LAGRANGIAN,
            Formulation.QUADRATIC_PENALTY,
        ):
            if penalty is None:
                raise ValueError(
                    f"group {name!r}: {formulation.value} requires a penalty coefficient"
                )

        if multiplier is not None:
            if indexed:
                raise ValueError(
                    f"group {name!r}: pass either a multiplier or indexed=True, not both"
                )
            if initial_multiplier is not None:
                raise ValueError(
                    f"group {name!r}: pass either a multiplier or initial values, not both"
                )
            if multiplier.size != size:
                raise ValueError(
                    f"group {name!r}: multiplier size {multiplier.size} != group size {size}"
                )
            if multiplier.constraint_type is not constraint_type:
                raise ValueError(
                    f"group {name!r}: multiplier constraint type mismatch"
                )

        if penalty is not None:
            from .formulations import PenaltyCoefficient

            if not isinstance(penalty, PenaltyCoefficient):
                penalty = PenaltyCoefficient(penalty)
            # vector penalties must match the group size; scalars broadcast
            penalty.expand(size)

        self.name = name
        self.constraint_type = constraint_type
        self.size = size
        self.formulation = formulation
        self.multiplier = multiplier
        self.penalty = penalty
        self._indexed = bool(indexed)
        self._initial_multiplier = initial_multiplier

    @property
    def indexed(self) -> bool:
        """True when the group addresses its multiplier through observed indices."""
        return self._indexed

    def __repr__(self):
        return (
            f"ConstraintGroup(name={self.name!r}, "
            f"constraint_type={self.constraint_type.value}, size={self.size}, "
            f"formulation={self.formulation.value})"
        )


@dataclass(frozen=True)
class CMPState:
    """One evaluation of the problem: loss plus per-group constraint measurements."""

    loss: float
    observed_constraints: Mapping[str, ConstraintState] = field(default_factory=dict)
    misc: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        loss = float(self.loss)
        if not np.isfinite(loss):
            raise EvaluationError(f"non-finite loss {loss}")
        object.__setattr__(self, "loss", loss)
        constraints = dict(self.observed_constraints)
        for gid, state in constraints.items():
            if not isinstance(state, ConstraintState):
                raise ValueError(f"group {gid!r}: expected a ConstraintState")
        object.__setattr__(self, "observed_constraints", MappingProxyType(constraints))
        object.__setattr__(self, "misc", MappingProxyType(dict(self.misc)))


@dataclass(frozen=True)
class Evaluation:
    """A CMPState bundled with the gradients needed for one primal-dual step.

    ``grad_f`` is the objective gradient at the evaluated point and
    ``jacobians`` maps each observed group id to the Jacobian of its observed
    violations, one row per constraint.
    """

    state: CMPState
    grad_f: np.ndarray
    jacobians: Mapping[str, np.ndarray]


class ConstrainedMinimizationProblem:
    """Base class: registered constraint groups plus a primal point x.

    Subclasses implement ``compute_cmp_state`` (and ``evaluate_with_gradients``
    when driven by the optimizers). Group registration is open until the first
    evaluation, after which the group set is frozen; multiplier sizes derive
    from it. A problem instance is single-owner: one roll at a time.
    """

    def __init__(self, dim: int, x0=None):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"problem dimension must be >= 1, got {dim}")
        self._dim = dim
        self._groups: dict[str, ConstraintGroup] = {}
        self._frozen = False
        if x0 is None:
            self._x = np.zeros(dim, dtype=np.float64)
        else:
            self._x = self._check_point(x0)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def x(self) -> np.ndarray:
        """Current primal point. Treat as read-only; update via set_x."""
        return self._x

    def set_x(self, x) -> None:
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape != (self._dim,):
            raise ValueError(f"x must have shape ({self._dim},), got {arr.shape}")
        self._x = arr.copy()

    def _check_point(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape != (self._dim,):
            raise ValueError(f"x must have shape ({self._dim},), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise EvaluationError("non-finite primal point")
        return arr.copy()

    # -- group registry -----------------------------------------------------

    def register_group(self, group: ConstraintGroup) -> str:
        """Register a constraint group and allocate its multiplier.

        Returns the group id. Raises on duplicate ids, on invalid
        formulation/multiplier/penalty combinations (enforced by
        ConstraintGroup), and after registration has been frozen by the first
        evaluation.
        """
        if self._frozen:
            raise ValueError("group registration is frozen after the first evaluation")
        if not isinstance(group, ConstraintGroup):
            raise ValueError("expected a ConstraintGroup")
        if group.name in self._groups:
            raise ValueError(f"duplicate group id {group.name!r}")
        if group.multiplier is None and group.formulation is not Formulation.QUADRATIC_PENALTY:
            from .multipliers import DenseMultiplier, IndexedMultiplier

            cls = IndexedMultiplier if group._indexed else DenseMultiplier
            group.multiplier = cls(
                group.size,
                group.constraint_type,
                values=group._initial_multiplier,
            )
        self._groups[group.name] = group
        return group.name

    def freeze_registration(self) -> None:
        self._frozen = True

    def group(self, group_id: str) -> ConstraintGroup:
        try:
            return self._groups[group_id]
        except KeyError:
            raise ValueError(f"unknown group id {group_id!r}") from None

    @property
    def groups(self) -> Mapping[str, ConstraintGroup]:
        """Read-only view of the registered groups, in registration order."""
        return MappingProxyType(self._groups)

    # -- evaluation ----------------------------------------------------------

    def compute_cmp_state(self, x) -> CMPState:
        """Evaluate loss and constraint violations at x. Pure; must be overridden."""
        raise NotImplementedError

    def evaluate_with_gradients(self, x) -> Evaluation:
        """Evaluate state plus objective gradient and per-group Jacobians."""
        raise NotImplementedError

    def check_state(self, state: CMPState) -> None:
        """Validate a CMPState against the registered groups.

        Every observed group must be registered; full observations must match
        the group size and partial observations must stay in range.
        """
        for gid, cstate in state.observed_constraints.items():
            group = self.group(gid)
            if cstate.observed_indices is None:
                if cstate.violation.size != group.size:
                    raise ValueError(
                        f"group {gid!r}: violation length {cstate.violation.size} "
                        f"!= group size {group.size}"
                    )
            else:
                idx = cstate.observed_indices
                if idx.size and idx.max() >= group.size:
                    raise ValueError(
                        f"group {gid!r}: observed index {int(idx.max())} out of "
                        f"range for size {group.size}"
                    )

    def is_feasible(self, state: CMPState, tol: float = 0.0) -> bool:
        """True iff every inequality violation <= tol and every |equality violation| <= tol."""
        tol = float(tol)
        if tol < 0:
            raise ValueError(f"tol must be >= 0, got {tol}")
        for gid, cstate in state.observed_constraints.items():
            group = self.group(gid)
            if group.constraint_type is ConstraintType.INEQUALITY:
                if cstate.violation.size and cstate.violation.max() > tol:
                    return False
            else:
                if cstate.violation.size and np.abs(cstate.violation).max() > tol:
                    return False
        return True
