"""Black-box problems, the query ledger and the epigraph reformulation."""

from __future__ import annotations

import csv
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, InfeasibleStartError, OracleError

ConstraintEval = Callable[[int, np.ndarray], float]


@dataclass(frozen=True)
class QuadraticObjective:
    """Known convex objective ``c.x + 0.5 x'Hx + b``.

    ``hessian=None`` means the objective is affine.
    """

    linear: np.ndarray
    hessian: Optional[np.ndarray] = None
    offset: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.linear, dtype=float).ravel()
        object.__setattr__(self, "linear", c)
        if self.hessian is not None:
            H = np.asarray(self.hessian, dtype=float)
            if H.shape != (c.size, c.size):
                raise ContractViolation(f"hessian must be {c.size}x{c.size}, got {H.shape}")
            H = 0.5 * (H + H.T)
            if np.linalg.eigvalsh(H).min() < -1e-12:
                raise ContractViolation("objective hessian must be positive semidefinite")
            object.__setattr__(self, "hessian", H)

    @property
    def dim(self) -> int:
        return self.linear.size

    @property
    def is_affine(self) -> bool:
        return self.hessian is None or not np.any(self.hessian)

    @property
    def gradient_lipschitz(self) -> float:
        """Largest Hessian eigenvalue (0 for affine objectives)."""
        if self.hessian is None:
            return 0.0
        return float(max(np.linalg.eigvalsh(self.hessian).max(), 0.0))

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        v = float(self.linear @ x) + self.offset
        if self.hessian is not None:
            v += 0.5 * float(x @ self.hessian @ x)
        return v

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hessian is None:
            return self.linear.copy()
        return self.linear + self.hessian @ x


@dataclass(frozen=True)
class SmoothnessConstants:
    """Per-constraint Lipschitz (``L``) and gradient-Lipschitz (``M``) bounds."""

    L: np.ndarray
    M: np.ndarray
    M0: float = 0.0

    def __post_init__(self):
        L = np.atleast_1d(np.asarray(self.L, dtype=float)).copy()
        M = np.atleast_1d(np.asarray(self.M, dtype=float)).copy()
        if L.shape != M.shape or L.ndim != 1:
            raise ContractViolation("L and M must be vectors of equal length")
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(M))):
            raise ContractViolation("smoothness constants must be finite")
        if np.any(L <= 0) or np.any(M <= 0):
            raise ContractViolation("L_i and M_i must be strictly positive")
        if self.M0 < 0:
            raise ContractViolation("M0 must be nonnegative")
        L.flags.writeable = False
        M.flags.writeable = False
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "M0", float(self.M0))

    @classmethod
    def uniform(cls, m: int, L: float, M: float, M0: float = 0.0) -> "SmoothnessConstants":
        return cls(np.full(m, float(L)), np.full(m, float(M)), M0)

    @property
    def num_constraints(self) -> int:
        return self.L.size

    @property
    def L_max(self) -> float:
        return float(self.L.max())

    @property
    def M_max(self) -> float:
        return float(self.M.max())

    def alpha(self, dim: int) -> np.ndarray:
        """Gradient-error slopes ``sqrt(d) * M_i / 2``."""
        return np.sqrt(dim) * self.M / 2.0

    def scaled(self, factor: float) -> "SmoothnessConstants":
        return SmoothnessConstants(self.L * factor, self.M * factor, self.M0)


class SafetyLedger:
    """Append-only record of every oracle query.

    Set ``keep_points=False`` on long runs to keep only indices and values.
    ``sink`` is an optional text stream receiving one CSV row per query.
    """

    def __init__(self, keep_points: bool = True, sink=None):
        self.keep_points = keep_points
        self.constraints: list[int] = []
        self.values: list[float] = []
        self.timestamps: list[float] = []
        self.points: list[np.ndarray] = []
        self.violation_count = 0
        self._lock = threading.Lock()
        self._writer = None
        self._header_written = False
        if sink is not None:
            self._writer = csv.writer(sink)

    @property
    def total_evals(self) -> int:
        return len(self.values)

    def record(self, i: int, x: np.ndarray, value: float) -> None:
        with self._lock:
            idx = len(self.values)
            self.constraints.append(i)
            self.values.append(value)
            self.timestamps.append(time.perf_counter())
            if self.keep_points:
                self.points.append(np.array(x, dtype=float))
            if value > 0:
                self.violation_count += 1
            if self._writer is not None:
                if not self._header_written:
                    self._writer.writerow(_ledger_header(len(x)))
                    self._header_written = True
                self._writer.writerow(_ledger_row(idx, i, x, value))

    def violations(self) -> list[tuple[int, int, float]]:
        """``(eval_index, constraint, value)`` for every positive return."""
        return [(k, c, v) for k, (c, v) in enumerate(zip(self.constraints, self.values)) if v > 0]

    def write_csv(self, path) -> None:
        if not self.keep_points:
            raise ContractViolation("ledger was created with keep_points=False")
        dim = self.points[0].size if self.points else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_ledger_header(dim))
            for k, (c, x, v) in enumerate(zip(self.constraints, self.points, self.values)):
                w.writerow(_ledger_row(k, c, x, v))


def _ledger_header(dim):
    return ["eval_index", "constraint"] + [f"x{j + 1}" for j in range(dim)] + ["value", "violated"]


def _ledger_row(k, i, x, value):
    return [k, i] + [repr(float(v)) for v in x] + [repr(float(value)), int(value > 0)]


@dataclass
class BlackBoxProblem:
    """Minimize a known objective subject to ``f_i(x) <= 0`` for queryable ``f_i``.

    Constraint indices are 0-based. Construction queries each constraint once
    at ``x0`` (directly, outside any ledger) and rejects a start that is not
    strictly feasible; those calls are counted in ``construction_evals``.
    """

    dim: int
    num_constraints: int
    objective: QuadraticObjective
    constraint_eval: ConstraintEval
    x0: np.ndarray
    ground_truth_feasible: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "problem"
    initial_values: np.ndarray = field(init=False, repr=False)
    construction_evals: int = field(init=False, default=0)

    def __post_init__(self):
        if self.dim < 1 or self.num_constraints < 1:
            raise ContractViolation("dim and num_constraints must be >= 1")
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if self.x0.size != self.dim:
            raise ContractViolation(f"x0 has size {self.x0.size}, expected {self.dim}")
        if self.objective.dim != self.dim:
            raise ContractViolation("objective dimension does not match problem")
        vals = np.array([self._raw(i, self.x0) for i in range(self.num_constraints)])
        self.construction_evals = self.num_constraints
        self.initial_values = vals
        bad = np.flatnonzero(vals >= 0)
        if bad.size:
            raise InfeasibleStartError(
                f"x0 is not strictly feasible: f_{bad[0]}(x0) = {float(vals[bad[0]])!r}"
            )

    def _raw(self, i: int, x: np.ndarray) -> float:
        v = float(self.constraint_eval(i, x))
        if not np.isfinite(v):
            raise OracleError(f"constraint {i} returned non-finite value {float(v)!r}")
        return v

    def f0(self, x) -> float:
        return self.objective.value(x)

    def query(self, ledger: SafetyLedger, i: int, x) -> float:
        return query(self, ledger, i, x)


def query(problem: BlackBoxProblem, ledger: SafetyLedger, i: int, x) -> float:
    """Evaluate ``f_i(x)`` through the ledger."""
    if not 0 <= i < problem.num_constraints:
        raise ContractViolation(f"constraint index {i} out of range [0, {problem.num_constraints})")
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,) or not np.all(np.isfinite(x)):
        raise ContractViolation("query point must be a finite vector of the problem dimension")
    v = problem._raw(i, x)
    ledger.record(i, x, v)
    return v


@dataclass
class UnknownObjectiveProblem:
    """A problem whose convex objective can only be queried."""

    dim: int
    num_constraints: int
    objective_eval: Callable[[np.ndarray], float]
    constraint_eval: ConstraintEval
    x0: np.ndarray
    name: str = "problem"


def default_slack(g0_x0: float) -> float:
    return max(0.1, 0.01 * abs(g0_x0))


def epigraph_transform(problem: UnknownObjectiveProblem, slack: Optional[float] = None) -> BlackBoxProblem:
    """Lift to ``(x, gamma)`` with objective ``gamma``.

    Constraint 0 of the result is ``g0(x) - gamma``; constraint ``i + 1`` is
    the original ``f_i``. The start is ``(x0, g0(x0) + slack)``.
    """
    x0 = np.asarray(problem.x0, dtype=float).ravel()
    g0_x0 = float(problem.objective_eval(x0))
    if not np.isfinite(g0_x0):
        raise OracleError("objective is not finite at x0")
    s0 = default_slack(g0_x0) if slack is None else float(slack)
    if s0 <= 0:
        raise ContractViolation("epigraph slack must be strictly positive")
    d = problem.dim

    def lifted(i, z):
        if i == 0:
            return problem.objective_eval(z[:d]) - z[d]
        return problem.constraint_eval(i - 1, z[:d])

    c = np.zeros(d + 1)
    c[d] = 1.0
    return BlackBoxProblem(
        dim=d + 1,
        num_constraints=problem.num_constraints + 1,
        objective=QuadraticObjective(c),
        constraint_eval=lifted,
        x0=np.append(x0, g0_x0 + s0),
        name=f"{problem.name}-epigraph",
    )


def epigraph_constants(L0: float, M0: float, constants: SmoothnessConstants) -> SmoothnessConstants:
    """Constants for the lifted problem: ``g0 - gamma`` gets ``(L0 + 1, M0)``."""
    return SmoothnessConstants(
        np.concatenate([[L0 + 1.0], constants.L]),
        np.concatenate([[M0], constants.M]),
        0.0,
    )
