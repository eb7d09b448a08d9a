"""Provably feasible local sets built from constraint queries.

Each constraint ``f_i`` is replaced near the anchor ``x_k`` by the quadratic
upper model ``f_i(x_k) + g_i.(x - x_k) + 2 M_i ||x - x_k||^2``, whose zero
sublevel set is a Euclidean ball. The intersection of those balls is the
region of the next subproblem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation, InfeasibleAnchorError
from .estimator import estimate_gradient
from .problem import BlackBoxProblem, SafetyLedger, SmoothnessConstants, query

#: probe steps are kept below this fraction of l_star so probes stay in B(x_k, l_star)
FD_CLAMP = 0.9
MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True)
class LocalBall:
    """Ball ``||x - center|| <= radius`` stored together with its model.

    The model form is ``h(x) = ||x - anchor||^2 + (g.(x - anchor) + offset) / curvature``;
    ``h <= 0`` is exactly the ball. Keeping the anchored form lets the
    subsolver evaluate slacks near the anchor without cancellation.
    """

    center: np.ndarray
    radius: float
    source_constraint: int
    linear_coeff: np.ndarray
    offset: float
    anchor: np.ndarray
    curvature: float

    @classmethod
    def from_model(cls, anchor, value: float, grad, curvature: float, source: int = -1) -> "LocalBall":
        """Ball of ``{x : value + grad.(x - anchor) + curvature ||x - anchor||^2 <= 0}``."""
        anchor = np.asarray(anchor, dtype=float)
        g = np.asarray(grad, dtype=float)
        center = anchor - g / (2.0 * curvature)
        r2 = -value / curvature + float(g @ g) / (4.0 * curvature**2)
        if r2 <= 0:
            raise ContractViolation("model sublevel set is empty")
        return cls(center, float(np.sqrt(r2)), source, g, float(value), anchor, float(curvature))

    @classmethod
    def centered(cls, center, radius: float, source: int = -1) -> "LocalBall":
        center = np.asarray(center, dtype=float)
        if not radius > 0:
            raise ContractViolation("radius must be positive")
        return cls(center, float(radius), source, np.zeros_like(center), -float(radius) ** 2, center, 1.0)

    @property
    def dim(self) -> int:
        return self.center.size

    def h(self, x) -> float:
        """Constraint value; negative strictly inside."""
        y = np.asarray(x, dtype=float) - self.anchor
        return float(y @ y) + (float(self.linear_coeff @ y) + self.offset) / self.curvature

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.center)) <= self.radius + tol


@dataclass(frozen=True)
class LocalSet:
    balls: tuple
    anchor: np.ndarray
    l_star: float
    nu_star: float

    @property
    def dim(self) -> int:
        return self.anchor.size

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.max([b.center - b.radius for b in self.balls], axis=0)
        hi = np.min([b.center + b.radius for b in self.balls], axis=0)
        return lo, hi

    def interval(self) -> tuple[float, float]:
        """Endpoints of the set when ``dim == 1``."""
        if self.dim != 1:
            raise ContractViolation("interval() is only defined in one dimension")
        lo, hi = self.bounding_box()
        return float(lo[0]), float(hi[0])


def _check_strict(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(values >= 0)
    if bad.size:
        i = int(bad[0])
        raise InfeasibleAnchorError(
            f"anchor is not strictly feasible: constraint {i} has value {float(values[i])!r}",
            constraint=i,
            value=float(values[i]),
        )
    return values


def step_schedule(constraint_values, L_max: float, d: int, k: int, clamp: float = FD_CLAMP) -> tuple[float, float]:
    """Return ``(l_star, nu_star)`` for iteration ``k``.

    ``l_star = min_i(-f_i) / L_max`` and
    ``nu_star = min(2 l_star / sqrt(d), 1 / (k + 1), clamp * l_star)``.
    """
    if not 0 < clamp < 1:
        raise ContractViolation("clamp must lie in (0, 1)")
    if k < 0:
        raise ContractViolation("iteration index must be nonnegative")
    values = _check_strict(constraint_values)
    l_star = float(np.min(-values)) / L_max
    nu_star = min(2.0 * l_star / np.sqrt(d), 1.0 / (k + 1), clamp * l_star)
    return l_star, nu_star


def build_local_set(
    problem: BlackBoxProblem,
    ledger: SafetyLedger,
    x_k,
    constants: SmoothnessConstants,
    k: int,
    clamp: float = FD_CLAMP,
    values: Optional[Sequence[float]] = None,
) -> LocalSet:
    """Query the anchor, estimate every gradient and return the ball intersection.

    Pass ``values`` when the anchor has already been queried this iteration;
    no duplicate queries are issued then.
    """
    x_k = np.asarray(x_k, dtype=float)
    m = problem.num_constraints
    if constants.num_constraints != m:
        raise ContractViolation("constants do not match the number of constraints")
    if values is None:
        values = [query(problem, ledger, i, x_k) for i in range(m)]
    values = _check_strict(values)
    l_star, nu_star = step_schedule(values, constants.L_max, problem.dim, k, clamp)
    balls = []
    for i in range(m):
        est = estimate_gradient(problem, ledger, i, x_k, nu_star, constants.M[i], fx=values[i])
        balls.append(LocalBall.from_model(x_k, values[i], est.grad, 2.0 * constants.M[i], i))
    return LocalSet(tuple(balls), x_k.copy(), l_star, nu_star)


def comparison_set(x_k, constraint_values, L_max: float) -> LocalBall:
    """The Lipschitz-only ball ``||x - x_k|| <= min_i(-f_i(x_k)) / L_max``."""
    values = _check_strict(constraint_values)
    i = int(np.argmin(-values))
    return LocalBall.centered(np.asarray(x_k, dtype=float), float(-values[i]) / L_max, source=i)


def membership(region, x, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff ``x`` lies in every ball of ``region`` (a LocalSet or LocalBall)."""
    balls = region.balls if isinstance(region, LocalSet) else (region,)
    return all(b.contains(x, tol) for b in balls)
