"""
Модель задачи оптимального управления в форме Больца.

Все функции задачи векторизованы по точкам: состояния передаются массивом формы (K, n_y),
управления (K, n_u), моменты времени (K,).
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .exceptions import DimensionMismatch
from .fem import Mesh, PointFamily, QuadratureRule, RefPointSet, Trajectory, interpolate, ref_points

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
FD_HESS_STEP = 1e-4


def _steps(z: np.ndarray, base: float) -> np.ndarray:
    return base * (1.0 + np.abs(z))


def fd_pointwise_jacobian(fn: Callable, y: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    """
    Центральные разности функции fn(y, u, t) -> (K, m) по переменным (y, u).

    :return: массив формы (K, m, n_y + n_u)
    """
    n_y = y.shape[1]
    z = np.concatenate([y, u], axis=1)
    steps = _steps(z, FD_STEP)
    columns = []
    for j in range(z.shape[1]):
        plus, minus = z.copy(), z.copy()
        plus[:, j] += steps[:, j]
        minus[:, j] -= steps[:, j]
        diff = (
            np.asarray(fn(plus[:, :n_y], plus[:, n_y:], t), dtype=float).reshape(len(t), -1)
            - np.asarray(fn(minus[:, :n_y], minus[:, n_y:], t), dtype=float).reshape(len(t), -1)
        )
        columns.append(diff / (2.0 * steps[:, j:j + 1]))
    return np.stack(columns, axis=2)


def fd_pointwise_hessian(grad_fn: Callable, y: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    """
    Гессиан по (y, u) из центральных разностей градиента grad_fn(y, u, t) -> (K, n_z).

    :return: симметричный массив формы (K, n_z, n_z)
    """
    n_y = y.shape[1]
    z = np.concatenate([y, u], axis=1)
    steps = _steps(z, FD_HESS_STEP)
    columns = []
    for j in range(z.shape[1]):
        plus, minus = z.copy(), z.copy()
        plus[:, j] += steps[:, j]
        minus[:, j] -= steps[:, j]
        diff = grad_fn(plus[:, :n_y], plus[:, n_y:], t) - grad_fn(minus[:, :n_y], minus[:, n_y:], t)
        columns.append(diff / (2.0 * steps[:, j:j + 1]))
    hess = np.stack(columns, axis=2)
    return 0.5 * (hess + np.swapaxes(hess, 1, 2))


def fd_gradient(fn: Callable, z: np.ndarray) -> np.ndarray:
    """Центральные разности скалярной или векторной функции fn(z); строки соответствуют выходам."""
    z = np.asarray(z, dtype=float)
    steps = _steps(z, FD_STEP)
    columns = []
    for j in range(z.size):
        plus, minus = z.copy(), z.copy()
        plus[j] += steps[j]
        minus[j] -= steps[j]
        columns.append((np.atleast_1d(fn(plus)) - np.atleast_1d(fn(minus))) / (2.0 * steps[j]))
    return np.stack(columns, axis=-1)


@dataclass(frozen=True, eq=False)
class Bounds:
    """
    Ограничения y_L <= y <= y_R, u_L <= u <= u_R.

    Каждое поле либо постоянный вектор (бесконечности означают отсутствие ограничения),
    либо функция t -> (K, n), полиномиальная на интервалах сетки.
    """
    n_y: int
    n_u: int
    y_lower: object = None
    y_upper: object = None
    u_lower: object = None
    u_upper: object = None

    @classmethod
    def box(cls, n_y: int, n_u: int, y_lower=None, y_upper=None, u_lower=None, u_upper=None) -> 'Bounds':
        def const(value, n, default):
            if value is None:
                return np.full(n, default)
            return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()

        return cls(
            n_y,
            n_u,
            const(y_lower, n_y, -np.inf),
            const(y_upper, n_y, np.inf),
            const(u_lower, n_u, -np.inf),
            const(u_upper, n_u, np.inf),
        )

    def _sample(self, field, t: np.ndarray, n: int, default: float) -> np.ndarray:
        if field is None:
            return np.full((t.size, n), default)
        if callable(field):
            return np.asarray(field(t), dtype=float).reshape(t.size, n)
        return np.broadcast_to(np.asarray(field, dtype=float), (t.size, n)).copy()

    def sample(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (
            self._sample(self.y_lower, t, self.n_y, -np.inf),
            self._sample(self.y_upper, t, self.n_y, np.inf),
            self._sample(self.u_lower, t, self.n_u, -np.inf),
            self._sample(self.u_upper, t, self.n_u, np.inf),
        )

    def is_consistent(self, t) -> bool:
        y_lower, y_upper, u_lower, u_upper = self.sample(t)
        return bool(np.all(y_lower <= y_upper) and np.all(u_lower <= u_upper))


@dataclass(frozen=True, eq=False)
class RunningCost:
    """Интегральная часть цели, перенесённая в терминальную через квадратуру."""
    integrand: Callable
    gradient: Callable | None
    rule: RefPointSet
    hessian: Callable | None = None


@dataclass(frozen=True, eq=False)
class OcpProblem:
    """
    Задача оптимального управления:

        min mayer(y(0), y(T)) + ∫ lagrange(y, u, t) dt
        y' = ode(y, u, t), 0 = alg(y, u, t), boundary(y(0), y(T)) = 0, bounds.

    Производные функций необязательны; при их отсутствии используются центральные разности.

    :param ode_hess: (y, u, t, w) -> Σ_i w_i ∇²ode_i по (y, u), форма (K, n_z, n_z); w формы (K, n_y)
    :param alg_hess: то же для alg с w формы (K, n_alg)
    :param lagrange_hess: (y, u, t) -> ∇²lagrange, форма (K, n_z, n_z)
    """
    name: str
    horizon: float
    n_y: int
    n_u: int
    n_alg: int
    n_b: int
    mayer: Callable
    boundary: Callable
    ode: Callable
    alg: Callable | None = None
    lagrange: Callable | None = None
    bounds: Bounds | None = None
    ode_jac: Callable | None = None
    alg_jac: Callable | None = None
    ode_hess: Callable | None = None
    alg_hess: Callable | None = None
    lagrange_grad: Callable | None = None
    lagrange_hess: Callable | None = None
    mayer_grad: Callable | None = None
    mayer_hess: Callable | None = None
    boundary_jac: Callable | None = None
    running_cost: RunningCost | None = None
    linear_boundary: bool = False
    guess: tuple | None = None
    description: str = ''

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise DimensionMismatch(f'{self.name}: horizon must be positive')
        if self.n_alg > 0 and self.alg is None:
            raise DimensionMismatch(f'{self.name}: n_alg={self.n_alg} without algebraic callback')
        if self.bounds is None:
            object.__setattr__(self, 'bounds', Bounds.box(self.n_y, self.n_u))

    @property
    def n_f(self) -> int:
        return self.n_y + self.n_alg

    @property
    def n_z(self) -> int:
        return self.n_y + self.n_u

    def residual(self, ydot, y, u, t) -> np.ndarray:
        """Невязка f = (ode - y', alg) в точках, форма (K, n_y + n_alg)."""
        K = len(t)
        f1 = np.asarray(self.ode(y, u, t), dtype=float).reshape(K, self.n_y) - ydot
        if self.n_alg == 0:
            return f1
        f2 = np.asarray(self.alg(y, u, t), dtype=float).reshape(K, self.n_alg)
        return np.concatenate([f1, f2], axis=1)

    def _algebraic_part(self, y, u, t) -> np.ndarray:
        K = len(t)
        ode = np.asarray(self.ode(y, u, t), dtype=float).reshape(K, self.n_y)
        if self.n_alg == 0:
            return ode
        alg = np.asarray(self.alg(y, u, t), dtype=float).reshape(K, self.n_alg)
        return np.concatenate([ode, alg], axis=1)

    def residual_jac(self, y, u, t) -> np.ndarray:
        """Производная невязки по (y, u) без члена -y', форма (K, n_f, n_z)."""
        if self.ode_jac is None or (self.n_alg > 0 and self.alg_jac is None):
            return fd_pointwise_jacobian(self._algebraic_part, y, u, t)
        K = len(t)
        blocks = [np.asarray(self.ode_jac(y, u, t), dtype=float).reshape(K, self.n_y, self.n_z)]
        if self.n_alg > 0:
            blocks.append(np.asarray(self.alg_jac(y, u, t), dtype=float).reshape(K, self.n_alg, self.n_z))
        return np.concatenate(blocks, axis=1)

    def residual_hess(self, y, u, t, weights) -> np.ndarray:
        """Сумма гессианов строк невязки с весами weights формы (K, n_f)."""
        weights = np.asarray(weights, dtype=float)
        if self.ode_hess is not None and (self.n_alg == 0 or self.alg_hess is not None):
            K = len(t)
            shape = (K, self.n_z, self.n_z)
            hess = np.asarray(self.ode_hess(y, u, t, weights[:, :self.n_y]), dtype=float).reshape(shape)
            if self.n_alg > 0:
                hess = hess + np.asarray(self.alg_hess(y, u, t, weights[:, self.n_y:]), dtype=float).reshape(shape)
            return hess

        def contracted(yy, uu, tt):
            return np.einsum('kf,kfz->kz', weights, self.residual_jac(yy, uu, tt))

        return fd_pointwise_hessian(contracted, y, u, t)

    def running(self, y, u, t) -> np.ndarray:
        integrand = self._integrand()
        if integrand is None:
            return np.zeros(len(t))
        return np.asarray(integrand(y, u, t), dtype=float).reshape(len(t))

    def running_grad(self, y, u, t) -> np.ndarray:
        integrand = self._integrand()
        if integrand is None:
            return np.zeros((len(t), self.n_z))
        gradient = self.running_cost.gradient if self.running_cost else self.lagrange_grad
        if gradient is not None:
            return np.asarray(gradient(y, u, t), dtype=float).reshape(len(t), self.n_z)
        return fd_pointwise_jacobian(integrand, y, u, t)[:, 0, :]

    def running_hess(self, y, u, t) -> np.ndarray:
        if self._integrand() is None:
            return np.zeros((len(t), self.n_z, self.n_z))
        hessian = self.running_cost.hessian if self.running_cost else self.lagrange_hess
        if hessian is not None:
            return np.asarray(hessian(y, u, t), dtype=float).reshape(len(t), self.n_z, self.n_z)
        return fd_pointwise_hessian(self.running_grad, y, u, t)

    def _integrand(self) -> Callable | None:
        if self.running_cost is not None:
            return self.running_cost.integrand
        return self.lagrange

    def terminal_grad(self, y0, yT) -> np.ndarray:
        if self.mayer_grad is not None:
            return np.asarray(self.mayer_grad(y0, yT), dtype=float).reshape(2 * self.n_y)
        return fd_gradient(lambda z: self.mayer(z[:self.n_y], z[self.n_y:]), np.concatenate([y0, yT]))[0]

    def terminal_hess(self, y0, yT) -> np.ndarray:
        n = 2 * self.n_y
        if self.mayer_hess is not None:
            return np.asarray(self.mayer_hess(y0, yT), dtype=float).reshape(n, n)
        hess = fd_gradient(lambda z: self.terminal_grad(z[:self.n_y], z[self.n_y:]), np.concatenate([y0, yT]))
        return 0.5 * (hess + hess.T)

    def boundary_values(self, y0, yT) -> np.ndarray:
        return np.asarray(self.boundary(y0, yT), dtype=float).reshape(self.n_b)

    def boundary_jacobian(self, y0, yT) -> np.ndarray:
        if self.boundary_jac is not None:
            return np.asarray(self.boundary_jac(y0, yT), dtype=float).reshape(self.n_b, 2 * self.n_y)
        return fd_gradient(
            lambda z: self.boundary_values(z[:self.n_y], z[self.n_y:]), np.concatenate([y0, yT])
        ).reshape(self.n_b, 2 * self.n_y)

    def boundary_hess(self, y0, yT, weights) -> np.ndarray:
        if self.linear_boundary:
            return np.zeros((2 * self.n_y, 2 * self.n_y))
        hess = fd_gradient(
            lambda z: weights @ self.boundary_jacobian(z[:self.n_y], z[self.n_y:]),
            np.concatenate([y0, yT]),
        )
        return 0.5 * (hess + hess.T)

    def objective(self, traj: Trajectory, rule: RefPointSet | None = None) -> float:
        """
        Значение цели на траектории: терминальная часть плюс квадратура интегральной части.

        По умолчанию используется правило, записанное при дополнении задачи, иначе
        правило Гаусса-Лежандра степени 2p+2.
        """
        value = float(self.mayer(traj.y_nodes[0, 0], traj.y_final))
        if self._integrand() is None:
            return value
        if rule is None:
            rule = self.running_cost.rule if self.running_cost else ref_points(PointFamily.LG, 2 * traj.p + 2)
        y, _, u = traj.on_reference(rule.points)
        times = traj.mesh.to_global(rule.points)
        weights = 0.5 * traj.mesh.lengths[:, None] * rule.weights[None, :]
        integrand = self.running(y.reshape(-1, self.n_y), u.reshape(-1, self.n_u), times.ravel())
        return value + float(np.dot(weights.ravel(), integrand))

    def linear_guess(self, mesh: Mesh, p: int) -> Trajectory:
        """Начальное приближение: линейная интерполяция граничных данных, u = 0."""
        if self.guess is None:
            y0 = yT = np.zeros(self.n_y)
        else:
            y0, yT = (np.asarray(v, dtype=float) for v in self.guess)
        T = self.horizon

        def y_fn(t):
            return y0[None, :] + np.outer(t / T, yT - y0)

        def u_fn(t):
            return np.zeros((len(t), self.n_u))

        return interpolate(y_fn, u_fn, mesh, p)


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """
    Известное решение задачи.

    :param kind: 'analytic' или 'tabulated'
    :param y_star: t -> (K, n_y)
    :param u_star: t -> (K, n_u), непрерывна справа в точках разрыва
    :param objective_star: оптимальное значение цели
    :param ydot_star: t -> (K, n_y), производная состояния (для проверки невязок)
    """
    kind: str
    y_star: Callable
    u_star: Callable
    objective_star: float
    ydot_star: Callable | None = None

    def trajectory(self, mesh: Mesh, p: int) -> Trajectory:
        return interpolate(self.y_star, self.u_star, mesh, p)


def augment_lagrange(problem: OcpProblem, quadrature) -> OcpProblem:
    """
    Переносит интегральную часть цели в терминальную через квадратурное правило.

    :param quadrature: QuadratureRule или опорное правило RefPointSet; используется опорная часть,
        чтобы цель вычислялась по интервалам той сетки, на которой строится NLP
    """
    if problem.lagrange is None:
        return problem
    rule = quadrature.ref if isinstance(quadrature, QuadratureRule) else quadrature
    if rule.weights is None:
        raise DimensionMismatch('quadrature for the running cost needs weights')
    running = RunningCost(problem.lagrange, problem.lagrange_grad, rule, problem.lagrange_hess)
    return replace(problem, lagrange=None, lagrange_grad=None, lagrange_hess=None, running_cost=running)
