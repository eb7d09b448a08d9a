"""Forward-difference gradient estimates with their worst-case error."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .problem import BlackBoxProblem, SafetyLedger, query


@dataclass(frozen=True)
class GradientEstimate:
    grad: np.ndarray
    step: float
    error_bound: float
    evals_used: int


def error_bound(dim: int, M: float, step: float) -> float:
    """``(sqrt(d) * M / 2) * step``: bound on ``||estimate - true gradient||``."""
    return np.sqrt(dim) * M / 2.0 * step


def forward_difference(fx: float, probes: np.ndarray, step: float) -> np.ndarray:
    """Assemble ``(f(x + step e_j) - f(x)) / step`` from probe values."""
    return (np.asarray(probes, dtype=float) - fx) / step


def estimate_gradient(
    problem: BlackBoxProblem,
    ledger: SafetyLedger,
    i: int,
    x,
    step: float,
    M_i: float,
    fx: Optional[float] = None,
) -> GradientEstimate:
    """Estimate the gradient of constraint ``i`` at ``x``.

    ``fx`` lets a caller that has already queried ``f_i(x)`` share that value;
    only the ``d`` probe queries are then issued. ``evals_used`` counts the
    anchor value either way.
    """
    if not step > 0:
        raise ContractViolation(f"finite-difference step must be positive, got {step!r}")
    x = np.asarray(x, dtype=float)
    d = x.size
    if fx is None:
        fx = query(problem, ledger, i, x)
    probes = np.empty(d)
    for j in range(d):
        xp = x.copy()
        xp[j] += step
        probes[j] = query(problem, ledger, i, xp)
    return GradientEstimate(
        grad=forward_difference(fx, probes, step),
        step=float(step),
        error_bound=error_bound(d, M_i, step),
        evals_used=d + 1,
    )
