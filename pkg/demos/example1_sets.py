"""Example 1: the inner local set versus the Lipschitz-ball comparison set at x0 = 1.49.

    python demos/example1_sets.py
"""

import numpy as np

from szoqq import SafetyLedger, build_local_set, comparison_set, make_example1, run_lbm_baseline, run_szoqq
from szoqq.driver import DriverConfig


def main():
    problem, meta = make_example1()
    consts = meta.default_constants
    region = build_local_set(problem, SafetyLedger(), problem.x0, consts, 0)
    lo, hi = region.interval()
    f = problem.initial_values
    ball = comparison_set(problem.x0, f, consts.L_max)
    print(f"f1(x0) = {f[0]:.4f}, l* = {region.l_star:.6f}")
    print(f"inner set S(x0)      = [{lo:.4f}, {hi:.4f}]  (width {hi - lo:.4f})")
    print(f"comparison ball C(x0) = [{ball.center[0] - ball.radius:.4f}, {ball.center[0] + ball.radius:.4f}]"
          f"  (width {2 * ball.radius:.4f})")

    cfg = DriverConfig(mu=1e-3, xi=0.0, max_iters=1)
    sz = run_szoqq(problem, consts, cfg)
    lb = run_lbm_baseline(problem, consts, cfg)
    print(f"one step: szoqq f0 {sz.final_f0:.4f}, baseline f0 {lb.final_f0:.4f}")

    trace = run_szoqq(problem, consts, DriverConfig(**meta.default_config), f0_inf=meta.known_optimum_value)
    print(f"to termination: {trace.K} iterations, x = {trace.final_point[0]:.5f}, f0 = {trace.final_f0:.5f}, "
          f"violations {trace.violation_count}")
    xs = np.linspace(lo, hi, 5)
    print("constraint on S(x0):", np.round(xs**2 - xs - 0.75, 4))


if __name__ == "__main__":
    main()
