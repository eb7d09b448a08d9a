"""Safe zeroth-order optimization for smooth convex programs with black-box constraints."""

from .bench import BENCHMARKS, BenchmarkMeta, OcpSpec, make_example1, make_ocp, make_qcqp_2d, make_random_qcqp
from .driver import DriverConfig, IterationRecord, SolveTrace, complexity_bound, run_lbm_baseline, run_szoqq
from .errors import (
    BenchmarkUnavailable,
    ContractViolation,
    ConvergenceFailure,
    InfeasibleAnchorError,
    InfeasibleStartError,
    NumericalFailure,
    OracleError,
    SZOQQError,
)
from .estimator import GradientEstimate, error_bound, estimate_gradient
from .local_sets import LocalBall, LocalSet, build_local_set, comparison_set, membership, step_schedule
from .problem import (
    BlackBoxProblem,
    QuadraticObjective,
    SafetyLedger,
    SmoothnessConstants,
    UnknownObjectiveProblem,
    epigraph_transform,
    query,
)
from .subsolver import KktResidual, SubSolution, Subproblem, eta_kkt_certificate, kkt_residual_original, solve

__version__ = "0.1.0"
