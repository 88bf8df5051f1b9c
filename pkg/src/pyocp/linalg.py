"""
Решение симметричных систем Ньютона через ленточное разложение Холецкого со сдвигом.
"""
import logging

import numpy as np
from scipy import linalg, sparse

from .exceptions import FactorizationError

logger = logging.getLogger(__name__)

INITIAL_SHIFT = 1e-8
MAX_SHIFTS = 30
DENSE_WARNING_SIZE = 100


def bandwidth(matrix: sparse.spmatrix) -> int:
    coo = sparse.coo_matrix(matrix)
    mask = coo.data != 0.0
    return int(np.max(np.abs(coo.row[mask] - coo.col[mask]), initial=0))


def lower_band(matrix: sparse.spmatrix, kd: int) -> np.ndarray:
    """Нижняя ленточная форма для cholesky_banded: ab[i - j, j] = S[i, j]."""
    coo = sparse.coo_matrix(matrix)
    keep = coo.row >= coo.col
    ab = np.zeros((kd + 1, coo.shape[0]))
    np.add.at(ab, (coo.row[keep] - coo.col[keep], coo.col[keep]), coo.data[keep])
    return ab


class ShiftedCholesky:
    """
    Разложение S + δI с наименьшим δ из последовательности 0, δ₀, 2δ₀, 4δ₀, ...

    При ширине ленты больше четверти размера используется плотное разложение.

    :param matrix: симметричная разреженная матрица
    :param initial_shift: относительный первый сдвиг, умножается на max(1, max|diag S|)
    :param max_shifts: число попыток со сдвигом
    """

    def __init__(self, matrix: sparse.spmatrix, initial_shift: float = INITIAL_SHIFT,
                 max_shifts: int = MAX_SHIFTS):
        self.matrix = sparse.csr_matrix(matrix)
        self.matrix.eliminate_zeros()
        self.n = self.matrix.shape[0]
        self.kd = bandwidth(self.matrix)
        self.dense = self.kd > self.n // 4
        if self.dense and self.n >= DENSE_WARNING_SIZE:
            logger.warning('bandwidth %d of a %d x %d matrix, using dense cholesky', self.kd, self.n, self.n)
        self.initial_shift = initial_shift
        self.max_shifts = max_shifts
        self.shift = 0.0
        self._factor = None

    def factorize(self) -> 'ShiftedCholesky':
        if self.n == 0:
            return self
        scale = max(1.0, float(np.max(np.abs(self.matrix.diagonal()))))
        base = self.matrix.toarray() if self.dense else lower_band(self.matrix, self.kd)
        shift = 0.0
        for attempt in range(self.max_shifts + 1):
            try:
                self._factor = self._try(base, shift)
                self.shift = shift
                if shift > 0.0:
                    logger.debug('cholesky succeeded with shift %.3e after %d attempts', shift, attempt)
                return self
            except linalg.LinAlgError:
                shift = self.initial_shift * scale * 2.0 ** attempt
        raise FactorizationError(
            f'matrix of size {self.n} is not positive definite even with shift {shift:.3e}'
        )

    def _try(self, base: np.ndarray, shift: float):
        if self.dense:
            return linalg.cho_factor(base + shift * np.eye(self.n), lower=True)
        ab = base.copy()
        ab[0] += shift
        return linalg.cholesky_banded(ab, lower=True)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.n == 0:
            return rhs.copy()
        if self._factor is None:
            self.factorize()
        if self.dense:
            return linalg.cho_solve(self._factor, rhs)
        return linalg.cho_solve_banded((self._factor, True), rhs)


def solve_shifted(matrix: sparse.spmatrix, rhs) -> tuple[np.ndarray, float]:
    """Решение (S + δI) x = rhs; возвращает x и использованный сдвиг δ."""
    chol = ShiftedCholesky(matrix).factorize()
    return chol.solve(rhs), chol.shift
