import os
import unittest

import numpy as np

from pyocp import malm
from pyocp.command import run_once
from pyocp.config import RunConfig
from pyocp.corpus import corpus_get
from pyocp.exceptions import SolverError
from pyocp.fem import ref_points
from pyocp.measures import empirical_order, gamma_bound, penalty_gap, rho_bound

ACCEPTANCE = os.environ.get("PYOCP_ACCEPTANCE") == "1"


def _solve(problem, method, N, **kwargs):
    return run_once(RunConfig(problem=problem, method=method, N=N, **kwargs).validate())


def _control_error(traj, reference, start):
    """L2-норма u* - u_h на интервалах сетки, лежащих правее start."""
    rule = ref_points("LG", 4 * traj.p)
    _, _, u = traj.on_reference(rule.points)
    times = traj.mesh.to_global(rule.points)
    u_star = np.asarray(reference.u_star(times.ravel()), dtype=float).reshape(u.shape)
    weights = 0.5 * traj.mesh.lengths[:, None] * rule.weights[None, :]
    keep = traj.mesh.nodes[:-1] >= start
    return float(np.sqrt(np.sum(weights[keep] * np.sum((u - u_star) ** 2, axis=2)[keep])))


@unittest.skipUnless(ACCEPTANCE, "long runs, set PYOCP_ACCEPTANCE=1")
class TestConvergence(unittest.TestCase):

    def test_box_counter_gamma(self):
        qpm = _solve("box_counter", "qpm", 7, p=4, q=5, m=64, omega=1e-8)
        self.assertLessEqual(qpm.measures.gamma, gamma_bound(4, 64, 2.0) + 1e-6)

        dcm = _solve("box_counter", "dcm", 7, p=4, scheme="lgr")
        self.assertAlmostEqual(dcm.measures.gamma, 0.25, delta=0.05)

    def test_col_counter_separation(self):
        levels = [3, 12, 48]
        dcm = [_solve("col_counter", "dcm", N, p=2, scheme="lgr").measures.rho for N in levels]
        self.assertGreaterEqual(min(dcm), 0.1)

        qpm = [_solve("col_counter", "qpm", N, p=2, q=6, m=6, omega=1e-8) for N in levels]
        rho = [outcome.measures.rho for outcome in qpm]
        self.assertTrue(all(a > b for a, b in zip(rho, rho[1:])))
        pairs = [(outcome.trajectory.mesh.h, outcome.measures.rho) for outcome in qpm]
        self.assertGreaterEqual(empirical_order(pairs), 0.5)

    def test_car_orders(self):
        outcomes = [_solve("car", "qpm", N, p=4, q=8, m=8, omega=1e-8) for N in (4, 8, 16, 32)]
        self.assertTrue(all(outcome.converged for outcome in outcomes))

        delta = [abs(outcome.measures.delta) for outcome in outcomes]
        self.assertTrue(all(a >= b for a, b in zip(delta, delta[1:])))
        pairs = [(outcome.trajectory.mesh.h, outcome.measures.rho) for outcome in outcomes]
        self.assertGreaterEqual(empirical_order(pairs), 2.0)

        # J = ∫ y² + u² >= 0, поэтому C_obj = 0
        final = outcomes[-1]
        objective_star = corpus_get("car")[1].objective_star
        chi = penalty_gap(final.measures.delta, final.measures.rho, 1e-8)
        self.assertLessEqual(final.measures.rho, 10.0 * rho_bound(objective_star, 0.0, chi, 1e-8))

    def test_vdp_bounds(self):
        qpm = _solve("vdp", "qpm", 100, p=4, q=8, m=8, omega=1e-6)
        self.assertLessEqual(qpm.measures.gamma, 1e-2)
        self.assertLessEqual(qpm.measures.rho, 1e-4)

        dcm = _solve("vdp", "dcm", 100, p=4, scheme="lgr")
        self.assertGreaterEqual(dcm.measures.gamma, 0.1)

    def test_pbf_singular_regulator_control(self):
        outcome = _solve("singular_regulator", "pbf", 100, p=5, omega=1e-10, tau=1e-10)
        self.assertTrue(outcome.converged)
        _, reference = corpus_get("singular_regulator")
        self.assertLessEqual(_control_error(outcome.trajectory, reference, 1.5), 1e-3)


@unittest.skipUnless(ACCEPTANCE, "long runs, set PYOCP_ACCEPTANCE=1")
class TestMalmTable(unittest.TestCase):

    # (ϖ, ε, опорная точка, значение расстояния до неё)
    CIRCLE_TABLE = [
        (1e-1, 0.0, malm.X_B, 4.4e-3),
        (1e-6, 0.0, malm.X_B, 4.4e-8),
        (1e-6, 1e-1, malm.X_A, 3.5e-3),
        (1e-8, 1e-6, malm.X_B, 7.1e-9),
    ]

    def test_circle_limit_points(self):
        for pval, eps, point, expected in self.CIRCLE_TABLE:
            with self.subTest(pval=pval, eps=eps):
                x, _, report = malm.malm_solve(malm.circle_instance(eps, pval))
                self.assertTrue(report.converged)
                self.assertLessEqual(np.linalg.norm(x - point), 10.0 * expected)

    def test_circle_pure_penalty_bound(self):
        x, _, _ = malm.malm_solve(malm.circle_instance(0.0, 1e-6))
        self.assertLessEqual(np.linalg.norm(x - malm.X_B), 4.4e-7)

    def test_alm_fails_where_malm_converges(self):
        config = malm.MalmConfig(max_total_inner=1000)
        with self.assertRaises(SolverError):
            malm.alm_solve(malm.circle_instance(1e-6, 1e-6), config)

        _, _, report = malm.malm_solve(malm.circle_instance(1e-6, 1e-6), config)
        self.assertTrue(report.converged)

    def test_contraction(self):
        config = malm.MalmConfig(rho0=1.0, freeze_rho=True, tol=1e-12)
        _, _, modified = malm.malm_solve(malm.circle_instance(0.0, 0.1), config)
        _, _, classic = malm.alm_solve(malm.circle_instance(0.0, 0.1), config)

        rate_modified = malm.contraction_rate(modified.lambda_history)
        rate_classic = malm.contraction_rate(classic.lambda_history)
        self.assertLessEqual(rate_modified, 0.909 * rate_classic * 1.15)


if __name__ == "__main__":
    unittest.main()
