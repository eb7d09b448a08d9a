import csv
import json

import numpy as np
import pytest

from szoqq.bench import make_example1, make_qcqp_2d, make_random_qcqp
from szoqq.driver import DriverConfig, complexity_bound, run_lbm_baseline, run_szoqq
from szoqq.errors import ContractViolation, InfeasibleAnchorError
from szoqq.local_sets import LocalSet
from szoqq.problem import (
    BlackBoxProblem,
    QuadraticObjective,
    SafetyLedger,
    SmoothnessConstants,
    UnknownObjectiveProblem,
    epigraph_constants,
    epigraph_transform,
)


def check_invariants(trace, mu, tol=1e-9):
    f = trace.f0_values
    steps = np.diff(trace.points, axis=0)
    sq = np.sum(steps**2, axis=1)
    assert np.all(np.diff(f) <= tol)
    assert np.all(f[:-1] - f[1:] >= mu * sq - tol)
    assert np.all(mu * np.cumsum(sq) <= f[0] - f[1:] + tol)


@pytest.fixture(scope="module")
def qcqp_run():
    problem, meta = make_qcqp_2d()
    trace = run_szoqq(problem, meta.default_constants, DriverConfig(mu=1e-3, xi=0.0, max_iters=150), f0_inf=0.0)
    return problem, meta, trace


class TestConfig:
    def test_validation(self):
        for kw in ({"mu": 0.0}, {"xi": -1.0}, {"escalation_factor": 1.0}, {"max_iters": 0},
                   {"subsolver_tol": 0.0}, {"kkt_check_nu": -1.0}):
            with pytest.raises(ContractViolation):
                DriverConfig(**kw)

    def test_xi_zero_allowed(self):
        assert DriverConfig(xi=0.0).xi == 0.0


class TestComplexityBound:
    def test_values(self):
        assert complexity_bound(0.981, 0.0, 0.001, 0.1) == pytest.approx(98100)
        assert complexity_bound(5.0, 5.0, 0.1, 0.1) == 0.0
        # 1.03 / (1e-4 * 1e-8)
        assert complexity_bound(6.81, 5.78, 1e-4, 1e-4) == pytest.approx(1.03e12)

    def test_undefined(self):
        with pytest.raises(ContractViolation):
            complexity_bound(1.0, 0.0, 1e-3, 0.0)
        with pytest.raises(ContractViolation):
            complexity_bound(0.0, 1.0, 1e-3, 0.1)


class TestSzoqqOnQcqp:
    def test_monotone_decrease(self, qcqp_run):
        problem, _, trace = qcqp_run
        f = trace.f0_values
        assert f[0] == pytest.approx(0.981)
        assert np.all(np.diff(f) <= 1e-12)
        assert f[-1] < 0.05

    def test_invariants(self, qcqp_run):
        _, _, trace = qcqp_run
        check_invariants(trace, 1e-3)

    def test_no_violations(self, qcqp_run):
        problem, _, trace = qcqp_run
        assert trace.violation_count == 0
        for x in trace.points:
            assert problem.ground_truth_feasible(x)

    def test_eval_accounting(self, qcqp_run):
        problem, _, trace = qcqp_run
        m, d = 3, 2
        for r in trace.iterations:
            assert r.oracle_evals == (r.k + 1) * m * (d + 1)
        assert problem.construction_evals == m
        # the final KKT checks come after the loop
        assert trace.total_evals >= trace.iterations[-1].oracle_evals

    def test_schedule_recorded(self, qcqp_run):
        _, _, trace = qcqp_run
        for r in trace.iterations:
            assert 0 < r.nu_star <= 1.0 / (r.k + 1)
            assert r.nu_star <= 0.9 * r.l_star

    def test_runs_to_max_iters_with_xi_zero(self, qcqp_run):
        _, _, trace = qcqp_run
        assert len(trace.iterations) == 150
        assert not trace.terminated
        assert trace.K is None and trace.K_bar is None

    def test_termination(self):
        problem, meta = make_qcqp_2d()
        trace = run_szoqq(problem, meta.default_constants, DriverConfig(mu=1e-3, xi=1e-4, max_iters=2000), f0_inf=0.0)
        assert trace.terminated
        assert trace.iterations[-1].increment <= 1e-4
        assert trace.K == len(trace.iterations) - 1
        assert trace.K <= trace.K_bar
        assert trace.K_bar == pytest.approx(0.981 / (1e-3 * 1e-8))

    def test_callback_receives_sets(self):
        problem, meta = make_qcqp_2d()
        seen = []
        run_szoqq(problem, meta.default_constants, DriverConfig(max_iters=5, xi=0.0), callback=lambda k, p: seen.append((k, p)))
        assert [k for k, _ in seen] == list(range(5))
        for _, (region, sol) in seen:
            assert isinstance(region, LocalSet)
            assert all(b.contains(sol.x_opt, 1e-9) for b in region.balls)


class TestDegenerate:
    def test_already_optimal_terminates_at_zero(self):
        # zero objective: the subproblem minimizer is the prox center
        problem = BlackBoxProblem(2, 1, QuadraticObjective([0.0, 0.0]), lambda i, x: x @ x - 1.0, [0.1, 0.2])
        trace = run_szoqq(problem, SmoothnessConstants([3.0], [2.0]), DriverConfig(xi=1e-6))
        assert trace.terminated
        assert trace.K == 0
        np.testing.assert_array_equal(trace.final_point, [0.1, 0.2])
        assert trace.iterations[0].increment == 0.0


class TestExample1:
    def test_first_step_beats_baseline(self):
        problem, meta = make_example1()
        cfg = DriverConfig(mu=1e-3, xi=0.0, max_iters=1)
        sz = run_szoqq(problem, meta.default_constants, cfg)
        lb = run_lbm_baseline(problem, meta.default_constants, cfg)
        assert sz.final_point[0] == pytest.approx(1.1502, abs=1e-3)
        assert lb.final_point[0] == pytest.approx(1.49 - 0.0199 / 3.01, abs=1e-9)
        assert sz.final_f0 < lb.final_f0

    def test_converges_to_left_boundary(self):
        problem, meta = make_example1()
        trace = run_szoqq(problem, meta.default_constants, DriverConfig(**meta.default_config), f0_inf=meta.known_optimum_value)
        assert trace.violation_count == 0
        assert trace.final_f0 == pytest.approx(meta.known_optimum_value, abs=1e-3)
        check_invariants(trace, 1e-3)


class TestBaseline:
    def test_trace_shape_matches(self):
        problem, meta = make_qcqp_2d()
        cfg = DriverConfig(mu=1e-3, xi=0.0, max_iters=20)
        lb = run_lbm_baseline(problem, meta.default_constants, cfg)
        assert len(lb.iterations) == 20
        for r in lb.iterations:
            assert r.oracle_evals == (r.k + 1) * 3
        assert lb.violation_count == 0
        check_invariants(lb, 1e-3)
        np.testing.assert_array_equal(lb.final_multipliers, np.zeros(3))

    def test_inactive_ball_closed_form(self):
        # deep interior: the Lipschitz ball is large and the step is -c / (2 mu)
        problem = BlackBoxProblem(1, 1, QuadraticObjective([1e-3]), lambda i, x: x[0] ** 2 - 100.0, [0.0])
        trace = run_lbm_baseline(problem, SmoothnessConstants([20.0], [2.0]), DriverConfig(mu=1.0, xi=0.0, max_iters=1))
        assert trace.final_point[0] == pytest.approx(-1e-3 / 2)


class TestEscalation:
    def test_escalation_recovers(self):
        problem, meta = make_qcqp_2d()
        # M far below the true curvature of x1^2 - x2 makes the first sets too large
        small = SmoothnessConstants.uniform(3, 5.0, 0.05, M0=0.2)
        trace = run_szoqq(problem, small, DriverConfig(mu=1e-3, xi=0.0, max_iters=60))
        assert trace.escalations >= 1
        assert trace.constants.M_max == pytest.approx(0.05 * 2**trace.escalations)
        assert len(trace.iterations) == 60
        assert [r.k for r in trace.iterations] == list(range(60))
        check_invariants(trace, 1e-3)

    def test_disabled_aborts_with_diagnostic(self):
        problem, meta = make_qcqp_2d()
        small = SmoothnessConstants.uniform(3, 5.0, 0.01, M0=0.2)
        ledger = SafetyLedger()
        with pytest.raises(InfeasibleAnchorError) as info:
            run_szoqq(problem, small, DriverConfig(xi=0.0, max_iters=50, escalation_enabled=False), ledger=ledger)
        assert info.value.constraint is not None
        assert info.value.point is not None
        assert ledger.violation_count >= 1


class TestEpigraph:
    def test_unknown_objective_matches_known(self):
        # the qcqp objective hidden behind the oracle reaches the same optimum 0
        problem, meta = make_qcqp_2d()
        inner = UnknownObjectiveProblem(
            2, 3, lambda x: 0.1 * x[0] ** 2 + x[1], problem.constraint_eval, problem.x0, "hidden",
        )
        lifted = epigraph_transform(inner)
        # g0 is 0.2-smooth and sqrt(0.2^2 + 1)-Lipschitz on the feasible set
        consts = epigraph_constants(1.1, 0.3, meta.default_constants)
        trace = run_szoqq(lifted, consts, DriverConfig(mu=1e-3, xi=0.0, max_iters=400))
        direct = run_szoqq(problem, meta.default_constants, DriverConfig(mu=1e-3, xi=0.0, max_iters=400))
        assert trace.violation_count == 0
        x = trace.final_point[:2]
        assert 0.1 * x[0] ** 2 + x[1] == pytest.approx(0.0, abs=0.03)
        assert direct.final_f0 == pytest.approx(0.0, abs=0.03)
        assert np.all(np.diff(trace.f0_values) <= 1e-12)


class TestExport:
    def test_csv_and_summary_round_trip(self, tmp_path, qcqp_run):
        _, _, trace = qcqp_run
        trace.write_csv(tmp_path / "t.csv")
        trace.write_summary(tmp_path / "s.json", benchmark="qcqp_2d")
        rows = list(csv.DictReader(open(tmp_path / "t.csv")))
        summary = json.load(open(tmp_path / "s.json"))
        assert len(rows) == len(trace.iterations) + 1
        assert float(rows[-1]["f0"]) == summary["final_objective"]
        assert summary["violation_count"] == 0
        assert summary["benchmark"] == "qcqp_2d"
        assert list(rows[0]) == ["k", "x1", "x2", "f0", "increment", "l_star", "nu_star", "oracle_evals", "wall_time"]
        for key in ("final_point", "K", "K_bar", "total_evals", "kkt_stationarity", "kkt_complementarity", "eta_kkt"):
            assert key in summary

    def test_objective_at_evals(self, qcqp_run):
        _, _, trace = qcqp_run
        f = trace.f0_values
        assert trace.objective_at_evals(0) == f[0]
        assert trace.objective_at_evals(8) == f[0]
        assert trace.objective_at_evals(9) == f[1]
        assert trace.objective_at_evals(10**9) == f[-1]


class TestRandom:
    @pytest.mark.parametrize("d,m,seed", [(1, 3, 0), (2, 8, 1), (5, 3, 2)])
    def test_reaches_optimum_safely(self, d, m, seed):
        problem, meta = make_random_qcqp(d, m, seed)
        trace = run_szoqq(problem, meta.default_constants, DriverConfig(**meta.default_config), f0_inf=meta.known_optimum_value)
        assert trace.violation_count == 0
        assert trace.terminated and trace.K <= trace.K_bar
        assert trace.final_f0 - meta.known_optimum_value <= 1e-3
        check_invariants(trace, 1e-3)

    def test_mismatched_constants(self):
        problem, _ = make_random_qcqp(2, 3, 0)
        with pytest.raises(ContractViolation):
            run_szoqq(problem, SmoothnessConstants([1.0], [1.0]))
