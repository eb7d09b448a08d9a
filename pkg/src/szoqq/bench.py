"""Built-in benchmark problems with ground-truth metadata.

``BENCHMARKS`` maps a name to a factory returning ``(problem, meta)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import BenchmarkUnavailable, ContractViolation
from .problem import (
    BlackBoxProblem,
    QuadraticObjective,
    SmoothnessConstants,
    UnknownObjectiveProblem,
    epigraph_transform,
)


@dataclass
class BenchmarkMeta:
    name: str
    known_optimum_value: Optional[float] = None
    known_optimizer: Optional[np.ndarray] = None
    true_L: Optional[np.ndarray] = None
    true_M: Optional[np.ndarray] = None
    default_constants: Optional[SmoothnessConstants] = None
    default_config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _verify_optimum(problem: BlackBoxProblem, meta: BenchmarkMeta, tol: float = 0.0) -> None:
    if meta.known_optimizer is None:
        return
    x = meta.known_optimizer
    worst = max(problem.constraint_eval(i, x) for i in range(problem.num_constraints))
    if worst > tol:
        raise BenchmarkUnavailable(f"{meta.name}: registered optimizer violates a constraint by {worst:g}")
    if meta.known_optimum_value is not None and not np.isclose(problem.f0(x), meta.known_optimum_value, rtol=0, atol=1e-9):
        raise BenchmarkUnavailable(f"{meta.name}: optimum value does not match its optimizer")


def make_example1():
    """``min 3x`` subject to ``x^2 - x - 0.75 <= 0`` from ``x0 = 1.49``."""
    problem = BlackBoxProblem(
        dim=1,
        num_constraints=1,
        objective=QuadraticObjective([3.0]),
        constraint_eval=lambda i, x: x[0] ** 2 - x[0] - 0.75,
        x0=[1.49],
        # roots of x^2 - x - 0.75 are -0.5 and 1.5
        ground_truth_feasible=lambda x: -0.5 <= x[0] <= 1.5,
        name="example1",
    )
    meta = BenchmarkMeta(
        name="example1",
        known_optimum_value=-1.5,
        known_optimizer=np.array([-0.5]),
        true_L=np.array([2.0]),  # |2x - 1| <= 2 on [-0.5, 1.5]
        true_M=np.array([2.0]),
        default_constants=SmoothnessConstants([3.01], [3.0]),
        default_config={"mu": 1e-3, "xi": 1e-4, "max_iters": 1000},
    )
    _verify_optimum(problem, meta)
    return problem, meta


def qcqp_2d_constraint(i, x):
    if i == 0:
        return -x[0]
    if i == 1:
        return x[1] - 1.0
    return x[0] ** 2 - x[1]


def make_qcqp_2d():
    """``min 0.1 x1^2 + x2`` s.t. ``-x1 <= 0, x2 <= 1, x1^2 <= x2`` from ``(0.9, 0.9)``."""
    problem = BlackBoxProblem(
        dim=2,
        num_constraints=3,
        objective=QuadraticObjective([0.0, 1.0], np.diag([0.2, 0.0])),
        constraint_eval=qcqp_2d_constraint,
        x0=[0.9, 0.9],
        ground_truth_feasible=lambda x: all(qcqp_2d_constraint(i, x) <= 0 for i in range(3)),
        name="qcqp_2d",
    )
    meta = BenchmarkMeta(
        name="qcqp_2d",
        known_optimum_value=0.0,
        known_optimizer=np.zeros(2),
        # feasible x1 lies in [0, 1], so ||(2 x1, -1)|| <= sqrt(5)
        true_L=np.array([1.0, 1.0, np.sqrt(5.0)]),
        true_M=np.array([0.0, 0.0, 2.0]),
        default_constants=SmoothnessConstants.uniform(3, 5.0, 3.0, M0=0.2),
        default_config={"mu": 1e-3, "xi": 0.0, "max_iters": 2000},
    )
    _verify_optimum(problem, meta)
    return problem, meta


def make_random_qcqp(d: int = 2, m: int = 3, seed: int = 0, margin_factor: float = 1.1):
    """Random ellipsoidal constraints ``0.5 (x - a_i)' Q_i (x - a_i) - c_i <= 0`` and a random linear objective.

    ``x0`` is strictly feasible by construction. The true constants are
    ``M_i = lambda_max(Q_i)`` and ``L_i = sqrt(2 c_i lambda_max(Q_i))`` (the
    largest gradient norm on the i-th ellipsoid); the default constants are
    ``margin_factor`` times those.
    """
    if d < 1 or m < 1:
        raise ContractViolation("d and m must be >= 1")
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, d)
    Qs, centers, levels = [], [], []
    for _ in range(m):
        A = rng.normal(size=(d, d))
        Q = A @ A.T / d + 0.5 * np.eye(d)
        a = x0 + 0.5 * rng.normal(size=d)
        r = x0 - a
        Qs.append(Q)
        centers.append(a)
        levels.append(0.5 * r @ Q @ r + rng.uniform(0.05, 0.5))
    Qs, centers, levels = np.array(Qs), np.array(centers), np.array(levels)
    c = rng.normal(size=d)

    def constraint(i, x):
        r = x - centers[i]
        return 0.5 * r @ Qs[i] @ r - levels[i]

    lam_max = np.array([np.linalg.eigvalsh(Q).max() for Q in Qs])
    true_M = lam_max
    true_L = np.sqrt(2.0 * levels * lam_max)
    problem = BlackBoxProblem(
        dim=d,
        num_constraints=m,
        objective=QuadraticObjective(c),
        constraint_eval=constraint,
        x0=x0,
        ground_truth_feasible=lambda x: all(constraint(i, x) <= 0 for i in range(m)),
        name=f"random_qcqp(d={d},m={m},seed={seed})",
    )
    cons = [
        {"type": "ineq", "fun": (lambda x, i=i: -constraint(i, x)), "jac": (lambda x, i=i: -Qs[i] @ (x - centers[i]))}
        for i in range(m)
    ]
    res = minimize(lambda x: c @ x, x0, jac=lambda x: c, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    meta = BenchmarkMeta(
        name="random_qcqp",
        known_optimum_value=float(c @ res.x),
        known_optimizer=res.x,
        true_L=true_L,
        true_M=true_M,
        default_constants=SmoothnessConstants(margin_factor * true_L, margin_factor * true_M),
        default_config={"mu": 1e-3, "xi": 1e-4, "max_iters": 500},
        extra={"Q": Qs, "centers": centers, "levels": levels, "seed": seed},
    )
    _verify_optimum(problem, meta, tol=1e-8)
    return problem, meta


# --- open-loop optimal control with an unmodelled disturbance ---------------


@dataclass(frozen=True)
class OcpSpec:
    A: np.ndarray = field(default_factory=lambda: np.array([[1.1, 1.0], [-0.5, 1.1]]))
    B: np.ndarray = field(default_factory=lambda: np.eye(2))
    horizon: int = 6
    Q: np.ndarray = field(default_factory=lambda: 0.5 * np.eye(2))
    R: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(2))
    x_init: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    state_bound: float = 0.7
    input_bound: float = 1.5
    disturbance_coeff: float = 0.1
    # u_0 is left unbounded: with |u_0| <= 1.5 the first state bound has no interior
    bound_first_input: bool = False

    @property
    def dim(self) -> int:
        return 2 * self.horizon

    @property
    def first_bounded_input(self) -> int:
        return 0 if self.bound_first_input else 1

    @property
    def num_constraints(self) -> int:
        return 4 * self.horizon + 4 * (self.horizon - self.first_bounded_input)

    def disturbance(self, x) -> float:
        return self.disturbance_coeff * x[1] ** 2


def rollout(spec: OcpSpec, u, disturbance: bool = True) -> np.ndarray:
    """States ``x_1 .. x_N`` (shape ``(N, 2)``) under the inputs ``u`` stacked as ``(u_0, ..., u_{N-1})``."""
    u = np.asarray(u, dtype=float).reshape(spec.horizon, 2)
    x = np.array(spec.x_init, dtype=float)
    out = np.empty((spec.horizon, 2))
    for k in range(spec.horizon):
        nxt = spec.A @ x + spec.B @ u[k]
        if disturbance:
            nxt[0] += spec.disturbance(x)
        x = nxt
        out[k] = x
    return out


def ocp_cost(spec: OcpSpec, u, disturbance: bool = True) -> float:
    """``sum_k x_{k+1}' Q x_{k+1} + u_k' R u_k`` over the horizon."""
    xs = rollout(spec, u, disturbance)
    us = np.asarray(u, dtype=float).reshape(spec.horizon, 2)
    return float(np.einsum("ki,ij,kj->", xs, spec.Q, xs) + np.einsum("ki,ij,kj->", us, spec.R, us))


def ocp_constraints(spec: OcpSpec, u, disturbance: bool = True) -> np.ndarray:
    """Box constraints as smooth scalars, ordered ``(+x, -x)`` per state coordinate, then per input coordinate."""
    xs = rollout(spec, u, disturbance)
    us = np.asarray(u, dtype=float).reshape(spec.horizon, 2)[spec.first_bounded_input:]
    sx = np.stack([xs - spec.state_bound, -xs - spec.state_bound], axis=-1).ravel()
    su = np.stack([us - spec.input_bound, -us - spec.input_bound], axis=-1).ravel()
    return np.concatenate([sx, su])


def _nominal_matrices(spec: OcpSpec):
    """Linear maps with ``x_{1..N} = F + G u`` for the disturbance-free model."""
    N = spec.horizon
    F = np.empty(2 * N)
    G = np.zeros((2 * N, 2 * N))
    Ak = np.eye(2)
    powers = [np.eye(2)]
    for k in range(N):
        Ak = spec.A @ Ak
        powers.append(Ak)
        F[2 * k:2 * k + 2] = Ak @ spec.x_init
    for k in range(N):
        for j in range(k + 1):
            G[2 * k:2 * k + 2, 2 * j:2 * j + 2] = powers[k - j] @ spec.B
    return F, G


def _solve_nominal(spec: OcpSpec, state_bound: float, input_bound: float) -> np.ndarray:
    N = spec.horizon
    F, G = _nominal_matrices(spec)
    Qb = np.kron(np.eye(N), spec.Q)
    Rb = np.kron(np.eye(N), spec.R)
    H = 2.0 * (G.T @ Qb @ G + Rb)
    g = 2.0 * G.T @ Qb @ F

    def cost(u):
        return 0.5 * u @ H @ u + g @ u

    cons = [
        {"type": "ineq", "fun": lambda u: state_bound - (F + G @ u), "jac": lambda u: -G},
        {"type": "ineq", "fun": lambda u: state_bound + (F + G @ u), "jac": lambda u: G},
    ]
    lo = spec.first_bounded_input * 2
    bounds = [(None, None)] * lo + [(-input_bound, input_bound)] * (2 * N - lo)
    res = minimize(cost, np.zeros(2 * N), jac=lambda u: H @ u + g, bounds=bounds, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-12, "maxiter": 500})
    return res.x


def find_initial_inputs(spec: OcpSpec, start_bound: float = 0.55, floor: float = 0.3, step: float = 0.05) -> np.ndarray:
    """Strictly feasible inputs for the true dynamics.

    Solves the disturbance-free problem with tightened state (and input)
    bounds and keeps the first solution whose true rollout is strictly
    feasible, tightening by ``step`` down to ``floor``.
    """
    margin = spec.state_bound - start_bound
    bound = start_bound
    while bound >= floor - 1e-12:
        u = _solve_nominal(spec, bound, spec.input_bound - margin)
        if np.all(np.isfinite(u)) and np.all(ocp_constraints(spec, u) < 0):
            return u
        bound -= step
        margin += step
    raise BenchmarkUnavailable(f"no strictly feasible input sequence found down to state bound {floor}")


def ocp_reference_optimum(spec: OcpSpec, u_start) -> np.ndarray:
    """Local optimum of the true problem from a model-aware solver (ground truth for tests)."""
    lo = spec.first_bounded_input * 2
    bounds = [(None, None)] * lo + [(-spec.input_bound, spec.input_bound)] * (spec.dim - lo)
    cons = [{"type": "ineq", "fun": lambda u: -ocp_constraints(spec, u)[: 4 * spec.horizon]}]
    res = minimize(lambda u: ocp_cost(spec, u), u_start, bounds=bounds, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-13, "maxiter": 1000})
    return res.x


def make_ocp(spec: Optional[OcpSpec] = None, slack: Optional[float] = 0.01):
    """The optimal-control benchmark in epigraph form: variables ``(u, gamma)``, objective ``gamma``.

    ``gamma`` starts ``slack`` above the initial cost. A small slack keeps the
    true cost non-increasing from the first step; with a large one the first
    steps may trade cost for a lower ``gamma``.

    Constraint 0 is ``cost(u) - gamma``; the box constraints follow in the
    order of :func:`ocp_constraints`.
    """
    spec = OcpSpec() if spec is None else spec
    u0 = find_initial_inputs(spec)

    @functools.lru_cache(maxsize=256)
    def evaluate(key: bytes):
        u = np.frombuffer(key, dtype=float)
        return ocp_cost(spec, u), ocp_constraints(spec, u)

    def key(u):
        return np.ascontiguousarray(u, dtype=float).tobytes()

    inner = UnknownObjectiveProblem(
        dim=spec.dim,
        num_constraints=spec.num_constraints,
        objective_eval=lambda u: evaluate(key(u))[0],
        constraint_eval=lambda i, u: evaluate(key(u))[1][i],
        x0=u0,
        name="ocp",
    )
    problem = epigraph_transform(inner, slack)
    problem.ground_truth_feasible = lambda z: bool(np.all(ocp_constraints(spec, z[: spec.dim]) <= 0))

    u_ref = ocp_reference_optimum(spec, u0)
    ref_cost = ocp_cost(spec, u_ref)
    meta = BenchmarkMeta(
        name="ocp",
        known_optimum_value=ref_cost,
        known_optimizer=np.append(u_ref, ref_cost),
        default_constants=SmoothnessConstants.uniform(problem.num_constraints, 20.0, 20.0),
        default_config={"mu": 1e-4, "xi": 1e-4, "max_iters": 20000},
        extra={"spec": spec, "initial_inputs": u0, "initial_cost": ocp_cost(spec, u0)},
    )
    _verify_optimum(problem, meta, tol=1e-8)
    return problem, meta


BENCHMARKS = {
    "example1": make_example1,
    "qcqp_2d": make_qcqp_2d,
    "random_qcqp": make_random_qcqp,
    "ocp": make_ocp,
}


def ocp_cost_of(problem_point, spec: Optional[OcpSpec] = None) -> float:
    """True rollout cost of a point ``(u, gamma)`` of the lifted problem."""
    spec = OcpSpec() if spec is None else spec
    return ocp_cost(spec, np.asarray(problem_point)[: spec.dim])
