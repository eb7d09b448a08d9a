"""The sequential local-set / subproblem loop and its Lipschitz-ball baseline."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, InfeasibleAnchorError
from .local_sets import FD_CLAMP, LocalSet, build_local_set, comparison_set, step_schedule
from .problem import BlackBoxProblem, SafetyLedger, SmoothnessConstants, query
from .subsolver import (
    DEFAULT_TOL,
    KktResidual,
    SubSolution,
    Subproblem,
    EtaKktCertificate,
    eta_kkt_certificate,
    kkt_residual_original,
    solve,
    solve_single_ball,
)

logger = logging.getLogger(__name__)


@dataclass
class DriverConfig:
    mu: float = 1e-3
    xi: float = 1e-4
    max_iters: int = 1000
    subsolver_tol: float = DEFAULT_TOL
    escalation_factor: float = 2.0
    escalation_enabled: bool = True
    max_escalations: int = 10
    kkt_check_nu: float = 1e-7
    fd_clamp: float = FD_CLAMP

    def __post_init__(self):
        if not self.mu > 0:
            raise ContractViolation("mu must be positive")
        if not self.xi >= 0:
            raise ContractViolation("xi must be nonnegative")
        if not self.escalation_factor > 1:
            raise ContractViolation("escalation_factor must exceed 1")
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be positive")
        if not self.subsolver_tol > 0 or not self.kkt_check_nu > 0:
            raise ContractViolation("tolerances must be positive")


@dataclass
class IterationRecord:
    k: int
    x: np.ndarray
    f0: float
    increment: float
    l_star: float
    nu_star: float
    oracle_evals: int
    wall_time: float


@dataclass
class SolveTrace:
    method: str
    iterations: list = field(default_factory=list)
    terminated: bool = False
    final_point: Optional[np.ndarray] = None
    final_f0: Optional[float] = None
    final_kkt: Optional[KktResidual] = None
    final_certificate: Optional[EtaKktCertificate] = None
    final_multipliers: Optional[np.ndarray] = None
    K: Optional[int] = None
    K_bar: Optional[float] = None
    escalations: int = 0
    constants: Optional[SmoothnessConstants] = None
    ledger: Optional[SafetyLedger] = None

    @property
    def f0_values(self) -> np.ndarray:
        """Objective at ``x_0 .. x_K`` followed by the final point."""
        vals = [r.f0 for r in self.iterations]
        if self.final_f0 is not None:
            vals.append(self.final_f0)
        return np.array(vals)

    @property
    def points(self) -> np.ndarray:
        pts = [r.x for r in self.iterations]
        if self.final_point is not None:
            pts.append(self.final_point)
        return np.array(pts)

    @property
    def evals(self) -> np.ndarray:
        """Cumulative oracle evaluations after each iterate became known."""
        return np.array([0] + [r.oracle_evals for r in self.iterations])

    def objective_at_evals(self, budget) -> np.ndarray:
        """Objective of the latest iterate available within each evaluation budget."""
        idx = np.searchsorted(self.evals, np.asarray(budget), side="right") - 1
        return self.f0_values[np.clip(idx, 0, None)]

    @property
    def eta_kkt(self) -> Optional[float]:
        """Best certified eta over the subproblem multipliers and the least-squares ones."""
        cands = []
        if self.final_kkt is not None:
            cands.append(max(self.final_kkt.stationarity, self.final_kkt.complementarity))
        if self.final_certificate is not None:
            cands.append(self.final_certificate.eta)
        return min(cands) if cands else None

    @property
    def violation_count(self) -> int:
        return self.ledger.violation_count if self.ledger is not None else 0

    @property
    def total_evals(self) -> int:
        return self.ledger.total_evals if self.ledger is not None else 0

    def summary(self) -> dict:
        kkt = self.final_kkt
        return {
            "method": self.method,
            "iterations": len(self.iterations),
            "terminated": self.terminated,
            "final_point": [float(v) for v in self.final_point],
            "final_objective": float(self.final_f0),
            "K": self.K,
            "K_bar": self.K_bar,
            "escalations": self.escalations,
            "violation_count": self.violation_count,
            "total_evals": self.total_evals,
            "kkt_stationarity": None if kkt is None else kkt.stationarity,
            "kkt_complementarity": None if kkt is None else kkt.complementarity,
            "eta_kkt": self.eta_kkt,
        }

    def write_csv(self, path) -> None:
        """One row per iterate; the last row is the final point (no increment)."""
        d = self.final_point.size
        header = ["k"] + [f"x{j + 1}" for j in range(d)] + [
            "f0", "increment", "l_star", "nu_star", "oracle_evals", "wall_time",
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.iterations:
                w.writerow(
                    [r.k] + [repr(float(v)) for v in r.x]
                    + [repr(r.f0), repr(r.increment), repr(r.l_star), repr(r.nu_star), r.oracle_evals, repr(r.wall_time)]
                )
            last = self.iterations[-1] if self.iterations else None
            w.writerow(
                [len(self.iterations)] + [repr(float(v)) for v in self.final_point]
                + [repr(self.final_f0), "", "", "", last.oracle_evals if last else 0, repr(last.wall_time) if last else ""]
            )

    def write_summary(self, path, **extra) -> None:
        with open(path, "w") as fh:
            json.dump({**extra, **self.summary()}, fh, indent=2)
            fh.write("\n")


def complexity_bound(f0_x0: float, f0_inf: float, mu: float, xi: float) -> float:
    """Worst-case iteration count ``(f0(x0) - inf f0) / (mu xi^2)``."""
    if not xi > 0:
        raise ContractViolation("the iteration bound is undefined for xi = 0")
    if not mu > 0:
        raise ContractViolation("mu must be positive")
    if f0_x0 < f0_inf:
        raise ContractViolation("f0(x0) is below the supplied infimum")
    return (f0_x0 - f0_inf) / (mu * xi**2)


def _subproblem(problem: BlackBoxProblem, x_k, mu, region) -> Subproblem:
    obj = problem.objective
    return Subproblem(obj.linear, x_k, mu, region, None if obj.is_affine else obj.hessian)


def _model_multipliers(local_set: LocalSet, sol: SubSolution) -> np.ndarray:
    # ball constraint h_i = q_i / curvature_i, so the model multiplier is lam_i / curvature_i
    return np.array([lam / b.curvature for lam, b in zip(sol.multipliers, local_set.balls)])


def _loop(
    problem: BlackBoxProblem,
    constants: SmoothnessConstants,
    config: DriverConfig,
    method: str,
    step_fn,
    f0_inf: Optional[float],
    ledger: Optional[SafetyLedger],
    callback,
) -> SolveTrace:
    if constants.num_constraints != problem.num_constraints:
        raise ContractViolation("constants do not match the number of constraints")
    trace = SolveTrace(method=method, ledger=ledger)
    m = problem.num_constraints
    x = problem.x0.copy()
    prev = None  # last accepted anchor, restored on escalation
    multipliers = np.zeros(m)
    t_start = time.perf_counter()
    k = 0
    while k < config.max_iters:
        values = [query(problem, ledger, i, x) for i in range(m)]
        try:
            x_next, l_star, nu_star, multipliers, payload = step_fn(x, values, constants, k)
        except InfeasibleAnchorError as exc:
            exc.point = x.copy()
            if not config.escalation_enabled or prev is None or trace.escalations >= config.max_escalations:
                raise
            trace.escalations += 1
            constants = constants.scaled(config.escalation_factor)
            logger.warning(
                "constraint %s infeasible at iteration %d (value %r); escalating constants to L_max=%g, M_max=%g",
                exc.constraint, k, exc.value, constants.L_max, constants.M_max,
            )
            x = prev
            k -= 1
            trace.iterations.pop()
            prev = trace.iterations[-1].x if trace.iterations else None
            continue
        increment = float(np.linalg.norm(x_next - x))
        trace.iterations.append(
            IterationRecord(k, x.copy(), problem.f0(x), increment, l_star, nu_star,
                            ledger.total_evals, time.perf_counter() - t_start)
        )
        if callback is not None:
            callback(k, payload)
        prev = x
        x = x_next
        if config.xi > 0 and increment <= config.xi:
            trace.terminated = True
            trace.K = k
            break
        k += 1
    trace.final_point = x
    trace.final_f0 = problem.f0(x)
    trace.constants = constants
    trace.final_multipliers = multipliers
    if f0_inf is not None and config.xi > 0:
        trace.K_bar = complexity_bound(problem.f0(problem.x0), f0_inf, config.mu, config.xi)
    return trace


def run_szoqq(
    problem: BlackBoxProblem,
    constants: SmoothnessConstants,
    config: DriverConfig = None,
    f0_inf: Optional[float] = None,
    ledger: Optional[SafetyLedger] = None,
    callback: Optional[Callable] = None,
    check_kkt: bool = True,
) -> SolveTrace:
    """Run the local-set / proximal-subproblem loop from ``problem.x0``.

    Each iteration queries the ``m`` constraints at the anchor, estimates their
    gradients (``m d`` more queries), builds the ball intersection and moves to
    the subproblem minimizer. The loop stops once an increment is at most
    ``xi`` (never for ``xi = 0``) or after ``max_iters`` iterations.

    An infeasible anchor means the constants were too small for the previous
    set; with escalation enabled, ``L`` and ``M`` are multiplied by
    ``escalation_factor`` and the previous iteration is redone.

    ``callback(k, (local_set, solution))`` is invoked after every accepted
    iteration. With ``check_kkt`` the final point is checked against the
    approximate-KKT conditions of the original problem twice: with the
    subproblem's multipliers (``final_kkt``) and with least-squares
    multipliers (``final_certificate``). Those queries are recorded in the
    ledger after the loop.
    """
    config = DriverConfig() if config is None else config
    ledger = SafetyLedger() if ledger is None else ledger

    def step(x, values, consts, k):
        region = build_local_set(problem, ledger, x, consts, k, config.fd_clamp, values=values)
        sol = solve(_subproblem(problem, x, config.mu, region), config.subsolver_tol)
        return sol.x_opt, region.l_star, region.nu_star, _model_multipliers(region, sol), (region, sol)

    trace = _loop(problem, constants, config, "szoqq", step, f0_inf, ledger, callback)
    if check_kkt:
        _final_kkt(problem, trace, config)
    return trace


def run_lbm_baseline(
    problem: BlackBoxProblem,
    constants: SmoothnessConstants,
    config: DriverConfig = None,
    f0_inf: Optional[float] = None,
    ledger: Optional[SafetyLedger] = None,
    callback: Optional[Callable] = None,
    check_kkt: bool = True,
) -> SolveTrace:
    """Same loop over the Lipschitz ball ``||x - x_k|| <= min_i(-f_i) / L_max``.

    Only the ``m`` anchor values are needed per iteration, so no gradient
    probes are issued. Multipliers returned by the single-ball solve have no
    per-constraint meaning and are reported as zeros.
    """
    config = DriverConfig() if config is None else config
    ledger = SafetyLedger() if ledger is None else ledger
    m = problem.num_constraints

    def step(x, values, consts, k):
        ball = comparison_set(x, values, consts.L_max)
        l_star, nu_star = step_schedule(values, consts.L_max, problem.dim, k, config.fd_clamp)
        sol = solve_single_ball(_subproblem(problem, x, config.mu, [ball]))
        return sol.x_opt, l_star, nu_star, np.zeros(m), (ball, sol)

    trace = _loop(problem, constants, config, "lbm-baseline", step, f0_inf, ledger, callback)
    if check_kkt:
        _final_kkt(problem, trace, config)
    return trace


def _final_kkt(problem, trace: SolveTrace, config: DriverConfig) -> None:
    # both raise InfeasibleAnchorError if the last subproblem step left the feasible set
    trace.final_kkt = kkt_residual_original(
        problem, trace.ledger, trace.final_point, trace.final_multipliers,
        trace.constants, config.kkt_check_nu, config.fd_clamp,
    )
    trace.final_certificate = eta_kkt_certificate(
        problem, trace.ledger, trace.final_point, trace.constants, config.kkt_check_nu, config.fd_clamp,
    )
