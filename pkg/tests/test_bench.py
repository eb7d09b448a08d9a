import numpy as np
import pytest

from szoqq.bench import (
    BENCHMARKS,
    OcpSpec,
    find_initial_inputs,
    make_example1,
    make_ocp,
    make_qcqp_2d,
    make_random_qcqp,
    ocp_constraints,
    ocp_cost,
    ocp_cost_of,
    rollout,
)
from szoqq.errors import ContractViolation
from szoqq.problem import SafetyLedger, query


@pytest.fixture(scope="module")
def ocp():
    return make_ocp()


def direct_rollout(u, x=(1.0, 1.0), horizon=6):
    # x+ = A x + u + (0.1 x2^2, 0), written out by hand
    x1, x2 = x
    out = []
    for k in range(horizon):
        a, b = u[2 * k], u[2 * k + 1]
        x1, x2 = 1.1 * x1 + x2 + a + 0.1 * x2**2, -0.5 * x1 + 1.1 * x2 + b
        out.append((x1, x2))
    return np.array(out)


class TestRegistry:
    def test_names(self):
        assert set(BENCHMARKS) == {"example1", "qcqp_2d", "random_qcqp", "ocp"}

    @pytest.mark.parametrize("name", ["example1", "qcqp_2d", "random_qcqp"])
    def test_start_strictly_feasible(self, name):
        problem, meta = BENCHMARKS[name]()
        assert np.all(problem.initial_values < 0)
        assert problem.ground_truth_feasible(problem.x0)
        if meta.known_optimizer is not None:
            assert problem.f0(meta.known_optimizer) == pytest.approx(meta.known_optimum_value, abs=1e-9)


class TestExample1:
    def test_constraint_roots(self):
        problem, meta = make_example1()
        assert problem.constraint_eval(0, np.array([-0.5])) == 0.0
        assert problem.constraint_eval(0, np.array([1.5])) == 0.0
        assert problem.constraint_eval(0, np.array([1.49])) == pytest.approx(-0.0199)
        assert meta.known_optimum_value == -1.5

    def test_true_constants_bound_defaults(self):
        _, meta = make_example1()
        assert np.all(meta.true_L <= meta.default_constants.L)
        assert np.all(meta.true_M <= meta.default_constants.M)


class TestQcqp2d:
    def test_values(self):
        problem, meta = make_qcqp_2d()
        ledger = SafetyLedger()
        x = np.array([0.9, 0.9])
        assert [query(problem, ledger, i, x) for i in range(3)] == pytest.approx([-0.9, -0.1, 0.81 - 0.9])
        assert problem.f0(x) == pytest.approx(0.981)
        assert problem.f0(meta.known_optimizer) == 0.0

    def test_ground_truth(self):
        problem, _ = make_qcqp_2d()
        assert problem.ground_truth_feasible(np.array([0.5, 0.3]))
        assert not problem.ground_truth_feasible(np.array([0.5, 0.2]))
        assert not problem.ground_truth_feasible(np.array([-0.1, 0.5]))


class TestRandomQcqp:
    def test_deterministic(self):
        a, ma = make_random_qcqp(3, 4, 7)
        b, mb = make_random_qcqp(3, 4, 7)
        np.testing.assert_array_equal(a.x0, b.x0)
        np.testing.assert_array_equal(ma.extra["Q"], mb.extra["Q"])
        assert ma.known_optimum_value == mb.known_optimum_value

    def test_true_constants(self):
        problem, meta = make_random_qcqp(2, 3, 1)
        rng = np.random.default_rng(0)
        Q, A, c = meta.extra["Q"], meta.extra["centers"], meta.extra["levels"]
        for i in range(3):
            # gradient norm on the i-th ellipsoid never exceeds L_i; the Hessian is Q_i
            w, V = np.linalg.eigh(Q[i])
            for _ in range(200):
                z = rng.normal(size=2)
                z *= np.sqrt(2 * c[i]) / np.linalg.norm(z) * rng.uniform() ** 0.5
                x = A[i] + V @ (z / np.sqrt(w))
                assert problem.constraint_eval(i, x) <= 1e-12
                assert np.linalg.norm(Q[i] @ (x - A[i])) <= meta.true_L[i] * (1 + 1e-12)
            assert meta.true_M[i] == pytest.approx(w.max())
        np.testing.assert_allclose(meta.default_constants.M, 1.1 * meta.true_M)

    def test_optimum_on_boundary(self):
        problem, meta = make_random_qcqp(2, 3, 2)
        vals = [problem.constraint_eval(i, meta.known_optimizer) for i in range(3)]
        assert max(vals) == pytest.approx(0.0, abs=1e-7)

    def test_invalid(self):
        with pytest.raises(ContractViolation):
            make_random_qcqp(0, 1)


class TestOcp:
    def test_zero_input_first_state(self):
        xs = rollout(OcpSpec(), np.zeros(12))
        np.testing.assert_allclose(xs[0], [2.2, 0.6])

    def test_rollout_matches_hand_written(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            u = rng.uniform(-1, 1, 12)
            np.testing.assert_allclose(rollout(OcpSpec(), u), direct_rollout(u), rtol=0, atol=1e-12)

    def test_nominal_model_drops_disturbance(self):
        u = np.zeros(12)
        xs = rollout(OcpSpec(), u, disturbance=False)
        np.testing.assert_allclose(xs[0], [2.1, 0.6])

    def test_cost(self):
        u = np.linspace(-0.5, 0.5, 12)
        xs = direct_rollout(u)
        expected = 0.5 * np.sum(xs**2) + 2.0 * np.sum(u**2)
        assert ocp_cost(OcpSpec(), u) == pytest.approx(expected, rel=1e-13)

    def test_constraint_layout(self):
        spec = OcpSpec()
        assert spec.dim == 12
        assert spec.num_constraints == 44
        u = np.zeros(12)
        g = ocp_constraints(spec, u)
        assert g.shape == (44,)
        assert g[0] == pytest.approx(2.2 - 0.7)
        assert g[1] == pytest.approx(-2.2 - 0.7)
        assert np.all(g[24:] == -1.5)
        assert OcpSpec(bound_first_input=True).num_constraints == 48

    def test_initial_inputs(self, ocp):
        problem, meta = ocp
        u0 = meta.extra["initial_inputs"]
        assert np.all(ocp_constraints(OcpSpec(), u0) < 0)
        np.testing.assert_array_equal(find_initial_inputs(OcpSpec()), u0)
        assert meta.extra["initial_cost"] == pytest.approx(ocp_cost(OcpSpec(), u0))

    def test_lifted_problem(self, ocp):
        problem, meta = ocp
        assert problem.dim == 13 and problem.num_constraints == 45
        assert problem.x0[-1] == pytest.approx(meta.extra["initial_cost"] + 0.01)
        ledger = SafetyLedger()
        z = problem.x0
        assert query(problem, ledger, 0, z) == pytest.approx(-0.01)
        np.testing.assert_allclose([query(problem, ledger, i, z) for i in range(1, 45)],
                                   ocp_constraints(OcpSpec(), z[:12]), rtol=0, atol=1e-12)
        assert ocp_cost_of(z) == pytest.approx(meta.extra["initial_cost"])

    def test_reference_optimum(self, ocp):
        problem, meta = ocp
        assert meta.known_optimum_value == pytest.approx(5.964, abs=2e-3)
        assert meta.known_optimum_value < meta.extra["initial_cost"]
        assert np.all(ocp_constraints(OcpSpec(), meta.known_optimizer[:12]) <= 1e-8)
