"""Benchmark problems with independently certified solutions.

Each factory builds a ``BenchmarkProblem`` whose certificate, when one
exists, comes from an analytic KKT argument or a dense linear solve, never
from the library's own optimizers. Certificates are re-verified against the
KKT residual at construction time.

The synthetic logistic dataset uses a fully specified counter-based PRNG
(SplitMix64 feeding Box-Muller), so the bytes are reproducible across
platforms and processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _kernels as _k
from .core import (
    CMPState,
    ConstrainedMinimizationProblem,
    ConstraintGroup,
    ConstraintState,
    ConstraintType,
    Evaluation,
    EvaluationError,
    Formulation,
)
from .formulations import PenaltyCoefficient
from .gradients import DifferentiableFunction

__all__ = [
    "ConstraintBlock",
    "CertifiedSolution",
    "BenchmarkProblem",
    "KKTResidual",
    "kkt_residual",
    "current_kkt_residual",
    "problem_projection_ball",
    "problem_equality_qp",
    "problem_norm_constrained_logreg",
    "problem_bilinear_game",
    "splitmix64",
    "normal_stream",
    "two_gaussian_dataset",
    "PROBLEM_NAMES",
]

CERTIFICATE_TOL = 1e-10

PROBLEM_NAMES = ("projection_ball", "equality_qp", "norm_logreg", "bilinear")


@dataclass(frozen=True)
class ConstraintBlock:
    """One constraint group plus the oracle that measures it.

    ``strict_function``, when set, supplies the non-differentiable violation
    that drives dual updates while ``function`` keeps feeding the primal
    gradient (the proxy-constraint split).
    """

    group: ConstraintGroup
    function: DifferentiableFunction
    strict_function: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class CertifiedSolution:
    """A solution certificate: x* plus concatenated multipliers.

    ``lam`` concatenates the inequality multipliers in registration order,
    ``mu`` the equality multipliers.
    """

    x: np.ndarray
    lam: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None


class KKTResidual(NamedTuple):
    stationarity: float
    feasibility: float
    complementarity: float


class BenchmarkProblem(ConstrainedMinimizationProblem):
    """A problem built from differentiable oracles for objective and constraints.

    ``feasible_start`` is the run's starting point; for the bilinear game it
    is deliberately infeasible (the interesting dynamics start off the
    constraint surface).
    """

    def __init__(
        self,
        name: str,
        dim: int,
        objective: DifferentiableFunction,
        blocks=(),
        feasible_start=None,
        certified_solution: Optional[CertifiedSolution] = None,
    ):
        super().__init__(dim)
        if objective.output_size != 1:
            raise ValueError("objective must have output size 1")
        self.name = str(name)
        self.objective = objective
        self.blocks = tuple(blocks)
        self._block_by_gid = {}
        for block in self.blocks:
            gid = self.register_group(block.group)
            self._block_by_gid[gid] = block
        self.freeze_registration()
        if feasible_start is None:
            feasible_start = np.zeros(dim, dtype=np.float64)
        self.feasible_start = np.asarray(feasible_start, dtype=np.float64).copy()
        self.set_x(self.feasible_start)
        self.certified_solution = certified_solution
        if certified_solution is not None:
            res = kkt_residual(
                self, certified_solution.x, certified_solution.lam, certified_solution.mu
            )
            worst = max(res)
            if not worst <= CERTIFICATE_TOL:
                raise ValueError(
                    f"certificate for {self.name!r} fails KKT check: "
                    f"stationarity={res.stationarity:.3e} "
                    f"feasibility={res.feasibility:.3e} "
                    f"complementarity={res.complementarity:.3e}"
                )

    def _observed(self, block, violation, x):
        group = block.group
        strict = None
        if block.strict_function is not None:
            strict = np.asarray(block.strict_function(x), dtype=np.float64)
        indices = np.arange(group.size, dtype=np.int64) if group.indexed else None
        try:
            return ConstraintState(
                violation=violation, strict_violation=strict, observed_indices=indices
            )
        except EvaluationError as exc:
            raise EvaluationError(str(exc), group_id=group.name) from None

    def compute_cmp_state(self, x) -> CMPState:
        x = np.asarray(x, dtype=np.float64)
        self._check_point(x)
        loss = float(self.objective.values(x)[0])
        observed = {}
        for gid, block in self._block_by_gid.items():
            observed[gid] = self._observed(block, block.function.values(x), x)
        return CMPState(loss=loss, observed_constraints=observed)

    def evaluate_with_gradients(self, x) -> Evaluation:
        x = np.asarray(x, dtype=np.float64)
        self._check_point(x)
        obj_values, obj_jac = self.objective.value_and_jacobian(x)
        observed = {}
        jacobians = {}
        for gid, block in self._block_by_gid.items():
            values, jac = block.function.value_and_jacobian(x)
            observed[gid] = self._observed(block, values, x)
            jacobians[gid] = jac
        state = CMPState(loss=float(obj_values[0]), observed_constraints=observed)
        return Evaluation(state=state, grad_f=obj_jac[0], jacobians=jacobians)

    def oracle_functions(self) -> dict:
        """Named differentiable oracles for gradient checking."""
        oracles = {"objective": self.objective}
        for gid, block in self._block_by_gid.items():
            oracles[gid] = block.function
        return oracles


# ---------------------------------------------------------------------------
# KKT residual


def _split_concat(problem, vector, ctype, what):
    """Split a concatenated per-type multiplier vector into per-group pieces."""
    groups = [g for g in problem.groups.values() if g.constraint_type is ctype]
    total = sum(g.size for g in groups)
    if vector is None:
        vector = np.zeros(total, dtype=np.float64)
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (total,):
        raise ValueError(f"{what} must have length {total}, got shape {vector.shape}")
    pieces = {}
    offset = 0
    for g in groups:
        pieces[g.name] = vector[offset : offset + g.size]
        offset += g.size
    return pieces


def _kkt_pieces(problem, evaluation, values_by_gid) -> KKTResidual:
    state = evaluation.state
    stationarity_vec = np.asarray(evaluation.grad_f, dtype=np.float64).copy()
    feasibility = 0.0
    complementarity = 0.0
    for gid, cstate in state.observed_constraints.items():
        group = problem.group(gid)
        values = np.asarray(values_by_gid.get(gid, np.zeros(group.size)), dtype=np.float64)
        if cstate.observed_indices is not None:
            values = values[cstate.observed_indices]
        jac = np.asarray(evaluation.jacobians[gid], dtype=np.float64)
        if values.size:
            stationarity_vec = _k.add_weighted_rows(stationarity_vec, jac, values)
        v = cstate.violation
        if group.constraint_type is ConstraintType.INEQUALITY:
            if v.size:
                feasibility = max(feasibility, float(np.max(np.maximum(v, 0.0))))
                complementarity = max(complementarity, float(np.max(np.abs(values * v))))
        else:
            if v.size:
                feasibility = max(feasibility, float(np.max(np.abs(v))))
    stationarity = float(np.max(np.abs(stationarity_vec))) if stationarity_vec.size else 0.0
    return KKTResidual(stationarity, feasibility, complementarity)


def kkt_residual(problem, x, lam=None, mu=None) -> KKTResidual:
    """First-order optimality residual at (x, lam, mu).

    ``lam`` concatenates the inequality multipliers over groups in
    registration order and must be nonnegative; ``mu`` the equality
    multipliers. Either may be omitted when zero. Components:
    stationarity ``max-norm of grad f + sum lam_i grad g_i + sum mu_j grad h_j``,
    feasibility ``max(max_i g_i clamped at 0, max_j |h_j|)``, and
    complementarity ``max_i |lam_i g_i|``.
    """
    lam_pieces = _split_concat(problem, lam, ConstraintType.INEQUALITY, "lam")
    for gid, piece in lam_pieces.items():
        if piece.size and piece.min() < 0:
            raise ValueError(f"inequality multipliers must be >= 0 (group {gid!r})")
    mu_pieces = _split_concat(problem, mu, ConstraintType.EQUALITY, "mu")
    evaluation = problem.evaluate_with_gradients(np.asarray(x, dtype=np.float64))
    return _kkt_pieces(problem, evaluation, {**lam_pieces, **mu_pieces})


def current_kkt_residual(problem, evaluation=None) -> KKTResidual:
    """KKT residual at the problem's current x and stored multiplier values.

    Groups without multipliers (quadratic penalty) count as zero multipliers.
    Reuses ``evaluation`` when the caller already has one for the current x.
    """
    if evaluation is None:
        evaluation = problem.evaluate_with_gradients(problem.x)
    values = {
        gid: group.multiplier.values
        for gid, group in problem.groups.items()
        if group.multiplier is not None
    }
    return _kkt_pieces(problem, evaluation, values)


# ---------------------------------------------------------------------------
# deterministic synthetic data


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First n outputs of the SplitMix64 stream for the given seed, as uint64."""
    if n < 0:
        raise ValueError("n must be >= 0")
    counter = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(seed) + counter * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def normal_stream(seed: int, n: int) -> np.ndarray:
    """n standard normals via Box-Muller over SplitMix64 uniforms in (0, 1]."""
    pairs = (n + 1) // 2
    bits = splitmix64(seed, 2 * pairs)
    u = ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * math.pi) * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


def two_gaussian_dataset(seed: int, n_points: int = 200, dim: int = 5):
    """Two unit-covariance Gaussians at +-(1/sqrt(dim)) * ones, labels alternating +-1.

    Returns (features, labels) with shapes (n_points, dim) and (n_points,).
    """
    if n_points < 1 or dim < 1:
        raise ValueError("n_points and dim must be >= 1")
    center = np.ones(dim, dtype=np.float64) / math.sqrt(dim)
    labels = np.where(np.arange(n_points) % 2 == 0, 1.0, -1.0)
    noise = normal_stream(seed, n_points * dim).reshape(n_points, dim)
    features = labels[:, None] * center[None, :] + noise
    return features, labels


# ---------------------------------------------------------------------------
# factories


def _as_formulation(formulation) -> Formulation:
    return formulation if isinstance(formulation, Formulation) else Formulation(formulation)


def _as_penalty(formulation: Formulation, penalty) -> Optional[PenaltyCoefficient]:
    if formulation is Formulation.LAGRANGIAN:
        if penalty is not None:
            raise ValueError("plain Lagrangian takes no penalty coefficient")
        return None
    if penalty is None:
        return PenaltyCoefficient(1.0)
    return penalty if isinstance(penalty, PenaltyCoefficient) else PenaltyCoefficient(penalty)


def problem_projection_ball(
    a, *, formulation=Formulation.LAGRANGIAN, penalty=None, indexed: bool = False
) -> BenchmarkProblem:
    """min ||x - a||^2 subject to ||x||^2 <= 1, certified by analytic KKT.

    The solution projects a onto the unit ball: x* = a / max(1, ||a||) with
    lam* = max(0, ||a|| - 1) from 2(x - a) + 2 lam x = 0 on the boundary.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise ValueError("a must be a 1-d vector with dim >= 1")
    if not np.isfinite(a).all():
        raise ValueError("a must be finite")
    formulation = _as_formulation(formulation)
    dim = a.size

    def obj_values(x):
        d = x - a
        return np.array([np.dot(d, d)])

    def obj_jac(x):
        return (2.0 * (x - a))[None, :]

    def obj_val_jac(x):
        d = x - a
        return np.array([np.dot(d, d)]), (2.0 * d)[None, :]

    objective = DifferentiableFunction(
        eval=obj_values,
        grad_row=lambda x, i: 2.0 * (x - a),
        output_size=1,
        name="objective",
        jac=obj_jac,
        val_jac=obj_val_jac,
    )

    def ball_values(x):
        return np.array([np.dot(x, x) - 1.0])

    def ball_jac(x):
        return (2.0 * x)[None, :]

    ball = DifferentiableFunction(
        eval=ball_values,
        grad_row=lambda x, i: 2.0 * x,
        output_size=1,
        name="ball",
        jac=ball_jac,
        val_jac=lambda x: (np.array([np.dot(x, x) - 1.0]), (2.0 * x)[None, :]),
    )

    group = ConstraintGroup(
        name="ball",
        constraint_type=ConstraintType.INEQUALITY,
        size=1,
        formulation=formulation,
        penalty=_as_penalty(formulation, penalty),
        indexed=indexed,
    )
    norm_a = float(np.linalg.norm(a))
    x_star = a / max(1.0, norm_a)
    lam_star = np.array([max(0.0, norm_a - 1.0)])
    certificate = CertifiedSolution(x=x_star, lam=lam_star)
    return BenchmarkProblem(
        name="projection_ball",
        dim=dim,
        objective=objective,
        blocks=(ConstraintBlock(group=group, function=ball),),
        feasible_start=np.zeros(dim),
        certified_solution=certificate,
    )


def problem_equality_qp(
    Q, b, A, c, *, formulation=Formulation.LAGRANGIAN, penalty=None
) -> BenchmarkProblem:
    """min (1/2) x'Qx - b'x subject to Ax = c, certified by a dense KKT solve.

    Q must be symmetric positive definite and A full row rank; the
    certificate solves [[Q, A'], [A, 0]] [x; mu] = [b; c] independently of
    the iterative machinery.
    """
    Q = np.asarray(Q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("Q must be square")
    dim = Q.shape[0]
    if b.shape != (dim,):
        raise ValueError(f"b must have shape ({dim},)")
    if A.ndim != 2 or A.shape[1] != dim:
        raise ValueError(f"A must have {dim} columns")
    m = A.shape[0]
    if c.shape != (m,):
        raise ValueError(f"c must have shape ({m},)")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12):
        raise ValueError("Q must be symmetric")
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise ValueError("Q must be positive definite") from None
    formulation = _as_formulation(formulation)

    kkt = np.zeros((dim + m, dim + m))
    kkt[:dim, :dim] = Q
    kkt[:dim, dim:] = A.T
    kkt[dim:, :dim] = A
    rhs = np.concatenate([b, c])
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        raise ValueError("singular KKT matrix") from None
    x_star, mu_star = solution[:dim], solution[dim:]

    def obj_values(x):
        return np.array([0.5 * np.dot(x, Q @ x) - np.dot(b, x)])

    def obj_jac(x):
        return (Q @ x - b)[None, :]

    objective = DifferentiableFunction(
        eval=obj_values,
        grad_row=lambda x, i: Q @ x - b,
        output_size=1,
        name="objective",
        jac=obj_jac,
        val_jac=lambda x: (obj_values(x), obj_jac(x)),
    )

    linear = DifferentiableFunction(
        eval=lambda x: A @ x - c,
        grad_row=lambda x, i: A[i].copy(),
        output_size=m,
        name="linear",
        jac=lambda x: A.copy(),
        val_jac=lambda x: (A @ x - c, A.copy()),
    )

    group = ConstraintGroup(
        name="linear",
        constraint_type=ConstraintType.EQUALITY,
        size=m,
        formulation=formulation,
        penalty=_as_penalty(formulation, penalty),
    )
    start, *_ = np.linalg.lstsq(A, c, rcond=None)
    return BenchmarkProblem(
        name="equality_qp",
        dim=dim,
        objective=objective,
        blocks=(ConstraintBlock(group=group, function=linear),),
        feasible_start=start,
        certified_solution=CertifiedSolution(x=x_star, mu=mu_star),
    )


def problem_norm_constrained_logreg(
    dataset_seed: int,
    threshold: float,
    *,
    dim: int = 5,
    n_points: int = 200,
    formulation=Formulation.LAGRANGIAN,
    penalty=None,
) -> BenchmarkProblem:
    """Logistic regression with ||w||^2 + b^2 <= threshold on synthetic Gaussians.

    The decision variables stack the weights and the bias: x = (w, b). No
    closed-form solution exists, so there is no certificate; acceptance is
    KKT-residual based. At x = 0 the loss is ln 2 and the violation is
    -threshold.
    """
    threshold = float(threshold)
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    formulation = _as_formulation(formulation)
    features, labels = two_gaussian_dataset(dataset_seed, n_points=n_points, dim=dim)
    n_vars = dim + 1

    def split(x):
        return x[:dim], x[dim]

    def obj_val_jac(x):
        w, bias = split(x)
        loss, grad_w, grad_b = _k.logistic_loss_grad(features, labels, w, bias)
        jac = np.empty((1, n_vars))
        jac[0, :dim] = grad_w
        jac[0, dim] = grad_b
        return np.array([loss]), jac

    objective = DifferentiableFunction(
        eval=lambda x: obj_val_jac(x)[0],
        grad_row=lambda x, i: obj_val_jac(x)[1][0],
        output_size=1,
        name="objective",
        jac=lambda x: obj_val_jac(x)[1],
        val_jac=obj_val_jac,
    )

    norm = DifferentiableFunction(
        eval=lambda x: np.array([np.dot(x, x) - threshold]),
        grad_row=lambda x, i: 2.0 * x,
        output_size=1,
        name="norm",
        jac=lambda x: (2.0 * x)[None, :],
        val_jac=lambda x: (np.array([np.dot(x, x) - threshold]), (2.0 * x)[None, :]),
    )

    group = ConstraintGroup(
        name="norm",
        constraint_type=ConstraintType.INEQUALITY,
        size=1,
        formulation=formulation,
        penalty=_as_penalty(formulation, penalty),
    )
    problem = BenchmarkProblem(
        name="norm_logreg",
        dim=n_vars,
        objective=objective,
        blocks=(ConstraintBlock(group=group, function=norm),),
        feasible_start=np.zeros(n_vars),
    )
    problem.features = features
    problem.labels = labels
    problem.threshold = threshold
    return problem


def problem_bilinear_game(*, formulation=Formulation.LAGRANGIAN, penalty=None) -> BenchmarkProblem:
    """f(x) = 0 with the single equality constraint h(x) = x, dim 1.

    The Lagrangian is mu * x with its saddle at the origin; the start
    (x, mu) = (1, 1) is deliberately infeasible so the rotational dynamics
    are visible from step one. Under the quadratic penalty there is no
    multiplier and the game degenerates to minimizing (c/2) x^2.
    """
    formulation = _as_formulation(formulation)

    objective = DifferentiableFunction(
        eval=lambda x: np.zeros(1),
        grad_row=lambda x, i: np.zeros(1),
        output_size=1,
        name="objective",
        jac=lambda x: np.zeros((1, 1)),
        val_jac=lambda x: (np.zeros(1), np.zeros((1, 1))),
    )

    level = DifferentiableFunction(
        eval=lambda x: x.copy(),
        grad_row=lambda x, i: np.ones(1),
        output_size=1,
        name="level",
        jac=lambda x: np.ones((1, 1)),
        val_jac=lambda x: (x.copy(), np.ones((1, 1))),
    )

    has_multiplier = formulation is not Formulation.QUADRATIC_PENALTY
    group = ConstraintGroup(
        name="level",
        constraint_type=ConstraintType.EQUALITY,
        size=1,
        formulation=formulation,
        penalty=_as_penalty(formulation, penalty),
        initial_multiplier=np.array([1.0]) if has_multiplier else None,
    )
    return BenchmarkProblem(
        name="bilinear",
        dim=1,
        objective=objective,
        blocks=(ConstraintBlock(group=group, function=level),),
        feasible_start=np.array([1.0]),
        certified_solution=CertifiedSolution(x=np.zeros(1), mu=np.zeros(1)),
    )
