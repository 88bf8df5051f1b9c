import json
import unittest

import numpy as np

from pyocp.corpus import corpus_get
from pyocp.exceptions import ConfigError, MissingReference
from pyocp.fem import Trajectory, make_uniform_mesh
from pyocp.measures import (
    MeasureReport,
    bound_diameter,
    compute_delta,
    compute_gamma,
    compute_rho,
    empirical_order,
    gamma_bound,
    measure,
    penalty_gap,
    rho_bound,
)


class TestResidualMeasure(unittest.TestCase):

    def test_reference_interpolant_converges(self):
        car, reference = corpus_get('car')
        coarse = compute_rho(car, reference.trajectory(make_uniform_mesh(3.0, 4), 3))
        fine = compute_rho(car, reference.trajectory(make_uniform_mesh(3.0, 8), 3))
        self.assertGreater(coarse / fine, 4.0)

    def test_boundary_part(self):
        car, _ = corpus_get('car')
        traj = Trajectory.zeros(make_uniform_mesh(3.0, 2), 2, 1, 1)
        # f = 0 for y = u = 0, boundary residual (-10, -20)
        self.assertAlmostEqual(compute_rho(car, traj), np.sqrt(500.0))

    def test_dynamics_part(self):
        car, _ = corpus_get('car')
        mesh = make_uniform_mesh(3.0, 3)
        traj = Trajectory(mesh, 2, np.full((3, 2, 1), 1.0), np.array([1.0]), np.full((3, 2, 1), 2.0))
        # ẏ = 0, f = u - y = 1 everywhere, ∫ 1 dt = 3, b = (-9, -19)
        self.assertAlmostEqual(compute_rho(car, traj), np.sqrt(3.0 + 81.0 + 361.0))


class TestBoundMeasure(unittest.TestCase):

    def test_inside_bounds(self):
        vdp, _ = corpus_get('vdp')
        traj = vdp.linear_guess(make_uniform_mesh(4.0, 4), 3)
        self.assertEqual(compute_gamma(vdp, traj), 0.0)

    def test_overshoot_between_nodes(self):
        vdp, _ = corpus_get('vdp')
        mesh = make_uniform_mesh(4.0, 1)
        guess = vdp.linear_guess(mesh, 3)
        # all nodal values inside [-1, 1], the quadratic overshoots towards the right end
        u_nodes = np.array([[[1.0], [0.0], [1.0]]])
        traj = Trajectory(mesh, 3, guess.y_nodes, guess.y_final, u_nodes)
        self.assertGreater(compute_gamma(vdp, traj), 0.5)

    def test_state_bound(self):
        problem, _ = corpus_get('state_constrained')
        mesh = make_uniform_mesh(1.0, 2)
        traj = Trajectory(mesh, 2, np.full((2, 2, 2), 0.5), np.array([0.5, 0.5]), np.zeros((2, 2, 1)))
        self.assertAlmostEqual(compute_gamma(problem, traj), np.sqrt(0.4) - 0.5)

    def test_gamma_bound(self):
        self.assertAlmostEqual(gamma_bound(2, 4, 2.0), np.pi ** 2 * 2.0 / 8.0 * np.sqrt(2.0) * 0.25)
        with self.assertRaises(ConfigError) as ctx:
            gamma_bound(3, 4, 1.0)
        self.assertEqual(ctx.exception.flag, 'm')

    def test_bound_diameter(self):
        self.assertEqual(bound_diameter(corpus_get('vdp')[0]), 2.0)
        self.assertEqual(bound_diameter(corpus_get('satellite_planar')[0]), 100.0)
        self.assertIsNone(bound_diameter(corpus_get('car')[0]))


class TestObjectiveGap(unittest.TestCase):

    def test_delta_of_reference_is_small(self):
        car, reference = corpus_get('car')
        traj = reference.trajectory(make_uniform_mesh(3.0, 16), 4)
        self.assertLess(abs(compute_delta(car, traj, reference)), 1e-4 * reference.objective_star)

    def test_missing_reference(self):
        vdp, _ = corpus_get('vdp')
        traj = vdp.linear_guess(make_uniform_mesh(4.0, 2), 2)
        with self.assertRaises(MissingReference):
            compute_delta(vdp, traj, None)

    def test_measure_without_reference(self):
        vdp, _ = corpus_get('vdp')
        report = measure(vdp, vdp.linear_guess(make_uniform_mesh(4.0, 2), 2), m=4, c_box=2.0)
        self.assertIsNone(report.delta)
        self.assertFalse(report.delta_from_below)
        self.assertIsNotNone(report.gamma_bound)
        data = json.loads(report.to_json())
        self.assertEqual(set(data['orders']), {'rho', 'delta', 'gamma'})
        self.assertIsNone(data['delta'])

    def test_measure_skips_bound_for_incompatible_m(self):
        vdp, _ = corpus_get('vdp')
        report = measure(vdp, vdp.linear_guess(make_uniform_mesh(4.0, 2), 3), m=4, c_box=2.0)
        self.assertIsNone(report.gamma_bound)

    def test_convergence_from_below(self):
        report = MeasureReport(delta=-1e-3, rho=0.0, gamma=0.0)
        self.assertTrue(report.delta_from_below)
        self.assertTrue(report.to_dict()['delta_from_below'])


class TestEmpiricalOrder(unittest.TestCase):

    def test_slope(self):
        pairs = [(h, 3.0 * h ** 4) for h in (0.4, 0.2, 0.1, 0.05)]
        self.assertAlmostEqual(empirical_order(pairs), 4.0)

    def test_noise_floor_excluded(self):
        pairs = [(0.4, 1e-2), (0.2, 2.5e-3), (0.1, 1e-13)]
        self.assertAlmostEqual(empirical_order(pairs), 2.0)

    def test_needs_two_points(self):
        with self.assertRaises(ValueError):
            empirical_order([(0.4, 1e-2), (0.2, 0.0), (0.1, None)])


class TestPenaltyBound(unittest.TestCase):

    def test_gap_counts_penalty_term(self):
        # δ = -1e-4 снизу, ρ²/(2ω) = 1e-6/2e-4 = 5e-3
        self.assertAlmostEqual(penalty_gap(-1e-4, 1e-3, 1e-4), 4.9e-3)
        self.assertEqual(penalty_gap(-1.0, 0.0, 1e-4), 0.0)

    def test_rho_bound(self):
        self.assertAlmostEqual(rho_bound(2.0, 0.0, 0.0, 1e-8), 2e-4)
        self.assertAlmostEqual(rho_bound(1.0, -0.5, 0.5, 0.5), np.sqrt(2.0))

    def test_rho_bound_needs_lower_objective_bound(self):
        with self.assertRaises(ValueError):
            rho_bound(1.0, 2.0, 0.0, 1e-8)


if __name__ == "__main__":
    unittest.main()
