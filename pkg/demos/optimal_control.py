"""Open-loop optimal control with an unmodelled disturbance, in epigraph form.

    python demos/optimal_control.py
"""

import numpy as np

from szoqq import SmoothnessConstants, make_ocp, run_szoqq
from szoqq.bench import ocp_constraints, ocp_cost_of, rollout
from szoqq.driver import DriverConfig


def main():
    problem, meta = make_ocp()
    spec = meta.extra["spec"]
    print(f"{problem.dim} variables, {problem.num_constraints} constraints, "
          f"initial true cost {meta.extra['initial_cost']:.4f}, reference optimum {meta.known_optimum_value:.4f}")
    trace = run_szoqq(problem, SmoothnessConstants.uniform(problem.num_constraints, 20.0, 20.0),
                      DriverConfig(mu=1e-4, xi=1e-4, max_iters=20000))
    costs = [ocp_cost_of(z, spec) for z in trace.points]
    print(f"{len(trace.iterations)} iterations, {trace.total_evals} rollouts, violations {trace.violation_count}")
    print("true cost every 10 iterations:", np.round(costs[::10], 4))
    u = trace.final_point[: spec.dim]
    print(f"final cost {costs[-1]:.5f}, eta-KKT {trace.eta_kkt:.2e}, "
          f"tightest constraint {ocp_constraints(spec, u).max():.2e}")
    print("final states:\n", np.round(rollout(spec, u), 4))


if __name__ == "__main__":
    main()
