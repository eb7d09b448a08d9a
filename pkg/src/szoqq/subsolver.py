"""Proximal convex-quadratic minimization over an intersection of balls.

The solver is a primal log-barrier method started at the prox center, which
is strictly interior by construction, so no phase-I is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.optimize import brentq, lsq_linear

from .errors import ContractViolation, ConvergenceFailure, NumericalFailure
from .estimator import estimate_gradient
from .local_sets import FD_CLAMP, LocalBall, LocalSet, step_schedule
from .problem import BlackBoxProblem, SafetyLedger, SmoothnessConstants, query

DEFAULT_TOL = 1e-8
MAX_NEWTON = 200
DEGENERATE_STEP = 1e-14


@dataclass(frozen=True)
class KktResidual:
    stationarity: float
    complementarity: float

    def __post_init__(self):
        for name in ("stationarity", "complementarity"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not (np.isfinite(v) and v >= 0):
                raise NumericalFailure(f"KKT {name} residual is {v!r}")

    def within(self, eta: float) -> bool:
        return self.stationarity <= eta and self.complementarity <= eta


@dataclass(frozen=True)
class Subproblem:
    """``min c.x + 0.5 x'Hx + mu ||x - prox_center||^2`` over ``region``."""

    linear: np.ndarray
    prox_center: np.ndarray
    prox_weight: float
    region: Union[LocalSet, Sequence[LocalBall]]
    quadratic: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.prox_weight > 0:
            raise ContractViolation("prox_weight must be positive")
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).ravel())
        object.__setattr__(self, "prox_center", np.asarray(self.prox_center, dtype=float).ravel())

    @property
    def balls(self) -> tuple:
        return tuple(self.region.balls) if isinstance(self.region, LocalSet) else tuple(self.region)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        y = x - self.prox_center
        v = float(self.linear @ x) + self.prox_weight * float(y @ y)
        if self.quadratic is not None:
            v += 0.5 * float(x @ self.quadratic @ x)
        return v


@dataclass(frozen=True)
class SubSolution:
    x_opt: np.ndarray
    multipliers: np.ndarray
    objective_value: float
    kkt: KktResidual
    newton_iters: int
    gap: float


def _local_form(sub: Subproblem):
    """Rewrite every ball as ``h_i(y) = ||y||^2 + p_i.y + h0_i`` with ``y = x - x_k``."""
    xk = sub.prox_center
    balls = sub.balls
    if not balls:
        raise ContractViolation("region has no balls")
    P = np.empty((len(balls), xk.size))
    h0 = np.empty(len(balls))
    for i, b in enumerate(balls):
        shift = xk - b.anchor
        P[i] = 2.0 * shift + b.linear_coeff / b.curvature
        h0[i] = float(shift @ shift) + (float(b.linear_coeff @ shift) + b.offset) / b.curvature
    if np.any(h0 >= 0):
        raise ContractViolation("prox_center must be strictly inside every ball")
    return P, h0


def _objective_terms(sub: Subproblem):
    d = sub.prox_center.size
    W = 2.0 * sub.prox_weight * np.eye(d)
    q = sub.linear.copy()
    if sub.quadratic is not None:
        H = np.asarray(sub.quadratic, dtype=float)
        W = W + H
        q = q + H @ sub.prox_center
    return q, W


def _result(sub, y, lam, P, h0, q, W, iters, gap):
    h = y @ y + P @ y + h0
    G = 2.0 * y[None, :] + P
    kkt = KktResidual(
        stationarity=float(np.linalg.norm(q + W @ y + G.T @ lam)),
        complementarity=float(np.max(np.abs(lam * h))) if lam.size else 0.0,
    )
    x = sub.prox_center + y
    return SubSolution(x, lam, sub.objective(x), kkt, iters, gap)


def solve(sub: Subproblem, tol: float = DEFAULT_TOL, max_newton: int = MAX_NEWTON) -> SubSolution:
    """Barrier method with ``t <- 10 t`` until the duality gap ``m / t`` is at most ``tol``.

    Multipliers are ``1 / (t s_i)`` at the final central point. If the barrier
    iterate does not improve on the prox center (possible only within the
    certified gap) or moves less than ``1e-14``, the prox center is returned.
    """
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    P, h0 = _local_form(sub)
    q, W = _objective_terms(sub)
    m, d = P.shape
    y = np.zeros(d)
    qnorm = float(np.linalg.norm(q))
    if qnorm == 0.0:
        return _result(sub, y, np.zeros(m), P, h0, q, W, 0, 0.0)

    t = max(1.0, m / qnorm)
    iters = 0
    while True:
        y, stage_iters = _center(y, t, P, h0, q, W, max_newton)
        iters += stage_iters
        if m / t <= tol:
            break
        t *= 10.0

    s = -(y @ y + P @ y + h0)
    lam = 1.0 / (t * s)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(lam))):
        raise NumericalFailure("non-finite barrier iterate")
    improvement = float(q @ y) + 0.5 * float(y @ W @ y)
    if np.linalg.norm(y) < DEGENERATE_STEP or improvement >= 0.0:
        y = np.zeros(d)
    return _result(sub, y, lam, P, h0, q, W, iters, m / t)


def _center(y, t, P, h0, q, W, max_newton, newton_eps=1e-12):
    """Damped Newton on ``t F(y) - sum log s_i(y)``."""
    d = y.size
    eye = np.eye(d)
    s = -(y @ y + P @ y + h0)
    for it in range(max_newton):
        G = 2.0 * y[None, :] + P
        inv_s = 1.0 / s
        gF = q + W @ y
        grad = t * gF + G.T @ inv_s
        hess = t * W + 2.0 * inv_s.sum() * eye + (G * inv_s[:, None] ** 2).T @ G
        try:
            dy = -linalg.cho_solve(linalg.cho_factor(hess), grad)
        except linalg.LinAlgError as exc:
            raise NumericalFailure(f"Newton system not positive definite: {exc}") from exc
        if not np.all(np.isfinite(dy)):
            raise NumericalFailure("non-finite Newton direction")
        slope = float(grad @ dy)
        if -slope / 2.0 <= newton_eps:
            return y, it
        dWd = float(dy @ W @ dy)
        gFd = float(gF @ dy)
        step = 1.0
        while True:
            yn = y + step * dy
            sn = -(yn @ yn + P @ yn + h0)
            if np.all(sn > 0):
                # change in the barrier function, formed from differences to avoid cancellation
                dphi = t * (step * gFd + 0.5 * step * step * dWd) - np.sum(np.log1p((sn - s) / s))
                if dphi <= 0.25 * step * slope:
                    break
            step *= 0.5
            if step < 1e-16:
                # no representable decrease left at this t
                return y, it + 1
        y, s = yn, sn
    raise ConvergenceFailure(f"Newton centering did not converge in {max_newton} steps (t={t:g})", best=y)


def solve_single_ball(sub: Subproblem) -> SubSolution:
    """Exact solution when the region is one ball centered at the prox center.

    Finds the radial multiplier ``lam`` with ``||(W + 2 lam I)^-1 q|| = rho``
    by bracketing; ``lam = 0`` when the unconstrained minimizer is inside.
    """
    balls = sub.balls
    if len(balls) != 1 or not np.allclose(balls[0].center, sub.prox_center, rtol=0, atol=0):
        raise ContractViolation("solve_single_ball needs one ball centered at the prox center")
    rho = balls[0].radius
    q, W = _objective_terms(sub)
    d = q.size
    P = np.zeros((1, d))
    h0 = np.array([-rho * rho])
    eye = np.eye(d)

    def y_of(lam):
        return -np.linalg.solve(W + 2.0 * lam * eye, q)

    y = y_of(0.0)
    lam = 0.0
    if float(np.linalg.norm(y)) > rho:
        hi = 1.0
        while np.linalg.norm(y_of(hi)) > rho:
            hi *= 2.0
        lam = brentq(lambda v: np.linalg.norm(y_of(v)) - rho, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        y = y_of(lam)
        n = float(np.linalg.norm(y))
        if n > rho:
            y *= rho / n
    return _result(sub, y, np.array([lam]), P, h0, q, W, 0, 0.0)


def kkt_residual_original(
    problem: BlackBoxProblem,
    ledger: SafetyLedger,
    x,
    multipliers,
    constants: SmoothnessConstants,
    nu: float,
    clamp: float = FD_CLAMP,
) -> KktResidual:
    """Approximate-KKT residuals of the original problem at ``x``.

    Constraint values and forward-difference gradients are queried through
    the ledger. The probe step is ``min(nu, clamp * l_star(x))`` so every
    probe stays inside the Lipschitz ball around ``x``. Stationarity is
    inflated by ``sum_i lam_i alpha_i step`` to cover the gradient error.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    if lam.shape != (problem.num_constraints,) or np.any(lam < 0):
        raise ContractViolation("multipliers must be a nonnegative vector, one per constraint")
    if not nu > 0:
        raise ContractViolation("nu must be positive")
    values = np.array([query(problem, ledger, i, x) for i in range(problem.num_constraints)])
    l_star, _ = step_schedule(values, constants.L_max, problem.dim, 0, clamp)
    step = min(nu, clamp * l_star)
    r = problem.objective.gradient(x)
    slack = 0.0
    alpha = constants.alpha(problem.dim)
    for i in np.flatnonzero(lam > 0):
        est = estimate_gradient(problem, ledger, int(i), x, step, constants.M[i], fx=values[i])
        r = r + lam[i] * est.grad
        slack += lam[i] * alpha[i] * step
    return KktResidual(float(np.linalg.norm(r)) + slack, float(np.max(np.abs(lam * values))))


@dataclass(frozen=True)
class EtaKktCertificate:
    eta: float
    multipliers: np.ndarray
    residual: KktResidual


def eta_kkt_certificate(
    problem: BlackBoxProblem,
    ledger: SafetyLedger,
    x,
    constants: SmoothnessConstants,
    nu: float,
    clamp: float = FD_CLAMP,
    eta_max: float = 1e3,
    bisections: int = 60,
) -> EtaKktCertificate:
    """Smallest ``eta`` for which some ``lam >= 0`` makes ``(x, lam)`` an eta-KKT pair.

    For a trial ``eta`` the multipliers are the bounded least-squares solution
    of ``grad f0 + J' lam = 0`` with ``0 <= lam_i <= eta / |f_i(x)|``, which
    enforces the complementarity half exactly; the stationarity half (with
    the ``sum lam_i alpha_i step`` inflation) is then checked. The predicate is
    monotone in ``eta`` and is bisected on a log scale. Returns ``eta = inf``
    if ``eta_max`` does not certify.
    """
    x = np.asarray(x, dtype=float)
    m = problem.num_constraints
    values = np.array([query(problem, ledger, i, x) for i in range(m)])
    l_star, _ = step_schedule(values, constants.L_max, problem.dim, 0, clamp)
    step = min(nu, clamp * l_star)
    J = np.array([estimate_gradient(problem, ledger, i, x, step, constants.M[i], fx=values[i]).grad for i in range(m)])
    g0 = problem.objective.gradient(x)
    inflation = constants.alpha(problem.dim) * step

    def attempt(eta):
        lam = lsq_linear(J.T, -g0, bounds=(np.zeros(m), eta / -values), method="bvls").x
        lam = np.clip(lam, 0.0, eta / -values)
        res = KktResidual(float(np.linalg.norm(g0 + J.T @ lam) + inflation @ lam), float(np.max(np.abs(lam * values))))
        return lam, res

    lam, res = attempt(eta_max)
    if res.stationarity > eta_max:
        return EtaKktCertificate(float("inf"), lam, res)
    best = (eta_max, lam, res)
    lo, hi = np.log(1e-14), np.log(eta_max)
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        lam, res = attempt(np.exp(mid))
        if res.stationarity <= np.exp(mid):
            hi = mid
            best = (max(res.stationarity, res.complementarity), lam, res)
        else:
            lo = mid
    eta, lam, res = best
    return EtaKktCertificate(max(res.stationarity, res.complementarity), lam, res)
