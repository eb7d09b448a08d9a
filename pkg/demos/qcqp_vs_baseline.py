"""The 2D QCQP: SZO-QQ against the Lipschitz-ball baseline at equal evaluation budgets.

    python demos/qcqp_vs_baseline.py
"""

import numpy as np

from szoqq import make_qcqp_2d, run_lbm_baseline, run_szoqq
from szoqq.driver import DriverConfig


def main():
    problem, meta = make_qcqp_2d()
    consts = meta.default_constants
    sz = run_szoqq(problem, consts, DriverConfig(mu=1e-3, xi=1e-4, max_iters=2000), f0_inf=0.0)
    lb = run_lbm_baseline(problem, consts, DriverConfig(mu=1e-3, xi=0.0, max_iters=2000))
    print(f"szoqq: K = {sz.K} (bound {sz.K_bar:.3g}), f0 = {sz.final_f0:.2e}, "
          f"eta-KKT = {sz.eta_kkt:.2e}, violations {sz.violation_count}")
    print(f"baseline after 2000 iterations: f0 = {lb.final_f0:.4f}, violations {lb.violation_count}")
    print(f"{'evals':>7} {'szoqq':>10} {'baseline':>10}")
    for budget in (0, 45, 90, 180, 360, 720, 1440, 3000, 6000):
        print(f"{budget:7d} {float(sz.objective_at_evals(budget)):10.4f} {float(lb.objective_at_evals(budget)):10.4f}")
    steps = np.linalg.norm(np.diff(sz.points, axis=0), axis=1)
    print(f"largest step {steps.max():.3f}, last step {steps[-1]:.2e}")


if __name__ == "__main__":
    main()
