import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np

from pyocp.corpus import corpus_get
from pyocp.exceptions import DimensionMismatch
from pyocp.fem import make_uniform_mesh, quadrature_rule, ref_points
from pyocp.ocp import Bounds, OcpProblem, augment_lagrange, fd_gradient


class TestBounds(unittest.TestCase):

    def test_box_defaults_to_infinite(self):
        bounds = Bounds.box(2, 1, u_lower=-1.0, u_upper=1.0)
        y_lower, y_upper, u_lower, u_upper = bounds.sample([0.0, 0.5, 1.0])
        self.assertEqual(y_lower.shape, (3, 2))
        self.assertTrue(np.all(np.isneginf(y_lower)))
        self.assertTrue(np.all(np.isposinf(y_upper)))
        np.testing.assert_array_equal(u_lower, -np.ones((3, 1)))
        np.testing.assert_array_equal(u_upper, np.ones((3, 1)))
        self.assertTrue(bounds.is_consistent([0.0, 1.0]))

    def test_time_dependent_bound(self):
        bounds = Bounds(1, 1, y_upper=lambda t: 1.0 + t)
        _, y_upper, u_lower, _ = bounds.sample(np.array([0.0, 2.0]))
        np.testing.assert_array_equal(y_upper, [[1.0], [3.0]])
        self.assertTrue(np.all(np.isneginf(u_lower)))

    def test_inconsistent_box(self):
        bounds = Bounds.box(1, 1, u_lower=1.0, u_upper=0.0)
        self.assertFalse(bounds.is_consistent([0.0]))


class TestOcpProblem(unittest.TestCase):

    def setUp(self):
        self.car, self.car_ref = corpus_get('car')

    def test_dimensions(self):
        pendulum, _ = corpus_get('pendulum_idx2')
        self.assertEqual(pendulum.n_f, 5)
        self.assertEqual(pendulum.n_z, 6)
        self.assertEqual(self.car.n_f, 1)

    def test_algebraic_rows_need_callback(self):
        with self.assertRaises(DimensionMismatch):
            replace(self.car, n_alg=1)
        with self.assertRaises(DimensionMismatch):
            replace(self.car, horizon=0.0)

    def test_residual_of_reference(self):
        t = np.linspace(0.0, 3.0, 9)
        f = self.car.residual(self.car_ref.ydot_star(t), self.car_ref.y_star(t), self.car_ref.u_star(t), t)
        self.assertEqual(f.shape, (9, 1))
        np.testing.assert_allclose(f, 0.0, atol=1e-10)

    def test_fd_fallbacks_match_analytic_derivatives(self):
        bare = replace(self.car, ode_jac=None, lagrange_grad=None, mayer_grad=None, boundary_jac=None)
        rng = np.random.default_rng(3)
        y, u, t = rng.normal(size=(4, 1)), rng.normal(size=(4, 1)), np.linspace(0.0, 3.0, 4)
        np.testing.assert_allclose(bare.residual_jac(y, u, t), self.car.residual_jac(y, u, t), atol=1e-7)
        np.testing.assert_allclose(bare.running_grad(y, u, t), self.car.running_grad(y, u, t), atol=1e-6)
        np.testing.assert_allclose(
            bare.boundary_jacobian(np.array([1.0]), np.array([2.0])), np.eye(2), atol=1e-8
        )
        np.testing.assert_allclose(bare.terminal_grad(np.array([1.0]), np.array([2.0])), 0.0)

    def test_running_hessian(self):
        y, u, t = np.ones((2, 1)), np.zeros((2, 1)), np.array([0.0, 1.0])
        hess = self.car.running_hess(y, u, t)
        np.testing.assert_allclose(hess, np.broadcast_to(2.0 * np.eye(2), (2, 2, 2)), atol=1e-6)

    def test_residual_hessian_of_linear_dynamics(self):
        y, u, t = np.ones((3, 1)), np.ones((3, 1)), np.zeros(3)
        hess = self.car.residual_hess(y, u, t, np.ones((3, 1)))
        np.testing.assert_allclose(hess, 0.0, atol=1e-8)

    def test_analytic_hessians_skip_finite_differences(self):
        vdp, _ = corpus_get('vdp')
        rng = np.random.default_rng(11)
        y, u, t = rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), np.linspace(0.0, 4.0, 5)
        w = rng.normal(size=(5, 2))

        with patch("pyocp.ocp.fd_pointwise_hessian") as mock_fd:
            residual = vdp.residual_hess(y, u, t, w)
            running = vdp.running_hess(y, u, t)
        mock_fd.assert_not_called()

        bare = replace(vdp, ode_hess=None, lagrange_hess=None)
        np.testing.assert_allclose(residual, bare.residual_hess(y, u, t, w), atol=1e-6)
        np.testing.assert_allclose(running, bare.running_hess(y, u, t), atol=1e-6)
        # -y1²·y2 in the second row: ∂²/∂y1² = -2·y2
        np.testing.assert_allclose(residual[:, 0, 0], -2.0 * w[:, 1] * y[:, 1], atol=1e-14)

    def test_augmented_problem_keeps_analytic_hessian(self):
        augmented = augment_lagrange(self.car, ref_points('LG', 3))
        y, u, t = np.ones((2, 1)), np.zeros((2, 1)), np.array([0.0, 1.0])
        with patch("pyocp.ocp.fd_pointwise_hessian") as mock_fd:
            hess = augmented.running_hess(y, u, t)
        mock_fd.assert_not_called()
        np.testing.assert_array_equal(hess, np.broadcast_to(2.0 * np.eye(2), (2, 2, 2)))

    def test_boundary_hess_of_nonlinear_boundary(self):
        problem = replace(
            self.car, boundary=lambda y0, yT: np.array([y0[0] ** 2, yT[0]]), boundary_jac=None,
            linear_boundary=False,
        )
        hess = problem.boundary_hess(np.array([1.0]), np.array([2.0]), np.array([3.0, 1.0]))
        np.testing.assert_allclose(hess, [[6.0, 0.0], [0.0, 0.0]], atol=1e-3)

    def test_objective_of_reference(self):
        traj = self.car_ref.trajectory(make_uniform_mesh(3.0, 32), 4)
        objective = self.car_ref.objective_star
        self.assertAlmostEqual(self.car.objective(traj), objective, delta=1e-5 * abs(objective))

    def test_linear_guess_hits_boundary_data(self):
        traj = self.car.linear_guess(make_uniform_mesh(3.0, 4), 2)
        self.assertAlmostEqual(float(traj.y_nodes[0, 0, 0]), 10.0)
        self.assertAlmostEqual(float(traj.y_final[0]), 20.0)
        np.testing.assert_array_equal(traj.u_nodes, 0.0)

    def test_linear_guess_without_guess_is_zero(self):
        problem = replace(self.car, guess=None)
        traj = problem.linear_guess(make_uniform_mesh(3.0, 2), 2)
        np.testing.assert_array_equal(traj.y_nodes, 0.0)


class TestAugmentLagrange(unittest.TestCase):

    def test_moves_running_cost(self):
        car, ref = corpus_get('car')
        mesh = make_uniform_mesh(3.0, 8)
        augmented = augment_lagrange(car, quadrature_rule(mesh, 5))
        self.assertIsNone(augmented.lagrange)
        self.assertEqual(augmented.running_cost.rule.size, 5)

        traj = ref.trajectory(mesh, 3)
        self.assertAlmostEqual(augmented.objective(traj), car.objective(traj, ref_points('LG', 5)), places=12)

    def test_without_running_cost_is_identity(self):
        mining, _ = corpus_get('mining')
        self.assertIs(augment_lagrange(mining, ref_points('LG', 3)), mining)

    def test_needs_weights(self):
        car, _ = corpus_get('car')
        with self.assertRaises(DimensionMismatch):
            augment_lagrange(car, ref_points('CGL', 3))


class TestFdGradient(unittest.TestCase):

    def test_vector_function(self):
        jac = fd_gradient(lambda z: np.array([z[0] * z[1], z[1] ** 2]), np.array([2.0, 3.0]))
        np.testing.assert_allclose(jac, [[3.0, 2.0], [0.0, 6.0]], atol=1e-6)


def _scalar_problem(**kwargs):
    fields = dict(
        name='scalar', horizon=1.0, n_y=1, n_u=1, n_alg=0, n_b=1,
        mayer=lambda y0, yT: float(yT[0]), boundary=lambda y0, yT: np.array([y0[0]]),
        ode=lambda y, u, t: u.copy(),
    )
    fields.update(kwargs)
    return OcpProblem(**fields)


class TestMinimalProblem(unittest.TestCase):

    def test_terminal_objective_only(self):
        problem = _scalar_problem()
        traj = problem.linear_guess(make_uniform_mesh(1.0, 2), 2)
        self.assertEqual(problem.objective(traj), 0.0)
        np.testing.assert_allclose(problem.terminal_grad(np.zeros(1), np.zeros(1)), [0.0, 1.0], atol=1e-8)
        np.testing.assert_allclose(problem.terminal_hess(np.zeros(1), np.zeros(1)), 0.0, atol=1e-3)
        self.assertEqual(problem.running(np.zeros((2, 1)), np.zeros((2, 1)), np.zeros(2)).shape, (2,))


if __name__ == "__main__":
    unittest.main()
