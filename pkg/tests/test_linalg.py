import unittest

import numpy as np
from scipy import sparse

from pyocp.exceptions import FactorizationError
from pyocp.linalg import ShiftedCholesky, bandwidth, lower_band, solve_shifted


def _tridiagonal(n):
    return sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


class TestBand(unittest.TestCase):

    def test_bandwidth(self):
        self.assertEqual(bandwidth(_tridiagonal(10)), 1)
        self.assertEqual(bandwidth(sparse.identity(5)), 0)
        self.assertEqual(bandwidth(sparse.csr_matrix((3, 3))), 0)

    def test_lower_band(self):
        ab = lower_band(_tridiagonal(4), 1)
        np.testing.assert_array_equal(ab[0], [2.0, 2.0, 2.0, 2.0])
        np.testing.assert_array_equal(ab[1, :3], [-1.0, -1.0, -1.0])


class TestShiftedCholesky(unittest.TestCase):

    def test_banded_solve(self):
        matrix = _tridiagonal(20)
        rhs = np.arange(20, dtype=float)
        chol = ShiftedCholesky(matrix).factorize()

        self.assertFalse(chol.dense)
        self.assertEqual(chol.shift, 0.0)
        np.testing.assert_allclose(matrix @ chol.solve(rhs), rhs, atol=1e-9)

    def test_dense_fallback(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        matrix = sparse.csr_matrix(a @ a.T + 4.0 * np.eye(4))
        rhs = np.ones(4)
        chol = ShiftedCholesky(matrix).factorize()

        self.assertTrue(chol.dense)
        np.testing.assert_allclose(matrix @ chol.solve(rhs), rhs, atol=1e-9)

    def test_indefinite_gets_shift(self):
        diagonal = np.ones(20)
        diagonal[3] = -1.0
        x, shift = solve_shifted(sparse.diags(diagonal), np.ones(20))

        self.assertAlmostEqual(shift, 1e-8 * 2.0 ** 27)
        np.testing.assert_allclose(x, np.ones(20) / (diagonal + shift))

    def test_factorization_error(self):
        diagonal = np.ones(20)
        diagonal[0] = -1.0
        with self.assertRaises(FactorizationError):
            ShiftedCholesky(sparse.diags(diagonal), max_shifts=3).factorize()

    def test_empty(self):
        chol = ShiftedCholesky(sparse.csr_matrix((0, 0))).factorize()
        self.assertEqual(chol.solve(np.zeros(0)).shape, (0,))


if __name__ == "__main__":
    unittest.main()
