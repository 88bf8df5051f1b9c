"""
Встроенный набор тестовых задач.

Каждая задача регистрируется под строковым именем и возвращается вместе с известным
решением, если оно есть. Задачи на максимум хранятся как минимизация противоположной цели.
"""
import logging
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import expit

from .exceptions import UnknownProblem
from .ocp import Bounds, OcpProblem, ReferenceSolution

logger = logging.getLogger(__name__)

GRAVITY = 9.81
TRAIN_ROUTE_LENGTH = 1e4
TRAIN_SHARPNESS = 1e3

_REGISTRY: dict[str, Callable] = {}


def register(name: str):
    def decorator(builder):
        _REGISTRY[name] = builder
        return builder
    return decorator


def available_problems() -> list[str]:
    return sorted(_REGISTRY)


@lru_cache(maxsize=None)
def corpus_get(name: str) -> tuple[OcpProblem, ReferenceSolution | None]:
    """
    Возвращает задачу и её эталонное решение (или None).

    :raises UnknownProblem: имя отсутствует в реестре
    """
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise UnknownProblem(name, _REGISTRY) from None
    logger.debug('building corpus problem %s', name)
    return builder()


def _zeros(t, n):
    return np.zeros((len(t), n))


def _stack(*columns):
    return np.stack([np.asarray(c, dtype=float) for c in columns], axis=1)


def _zero_mayer(y0, yT):
    return 0.0


def _constant(value):
    value = np.asarray(value, dtype=float)

    def fn(*args):
        return value.copy()
    return fn


def _jacobian(rows: int, cols: int, entries: dict) -> Callable:
    """Поточечный якобиан из словаря {(строка, столбец): функция(y, u, t) или число}."""
    def jac(y, u, t):
        out = np.zeros((len(t), rows, cols))
        for (i, j), value in entries.items():
            out[:, i, j] = value(y, u, t) if callable(value) else value
        return out
    return jac


def _pointwise(matrix) -> Callable:
    """Постоянный поточечный гессиан; лишние аргументы (веса) игнорируются."""
    matrix = np.asarray(matrix, dtype=float)

    def hess(y, u, t, *weights):
        return np.broadcast_to(matrix, (len(t),) + matrix.shape).copy()
    return hess


@register('car')
def _car():
    def ode(y, u, t):
        return u - y

    def lagrange(y, u, t):
        return y[:, 0] ** 2 + u[:, 0] ** 2

    def lagrange_grad(y, u, t):
        return 2.0 * np.concatenate([y, u], axis=1)

    def boundary(y0, yT):
        return np.array([y0[0] - 10.0, yT[0] - 20.0])

    problem = OcpProblem(
        name='car',
        horizon=3.0,
        n_y=1,
        n_u=1,
        n_alg=0,
        n_b=2,
        mayer=_zero_mayer,
        boundary=boundary,
        ode=ode,
        lagrange=lagrange,
        ode_jac=_jacobian(1, 2, {(0, 0): -1.0, (0, 1): 1.0}),
        ode_hess=_pointwise(np.zeros((2, 2))),
        lagrange_grad=lagrange_grad,
        lagrange_hess=_pointwise(2.0 * np.eye(2)),
        mayer_grad=_constant(np.zeros(2)),
        mayer_hess=_constant(np.zeros((2, 2))),
        boundary_jac=_constant(np.eye(2)),
        linear_boundary=True,
        guess=(np.array([10.0]), np.array([20.0])),
        description='ẏ = u - y, y(0) = 10, y(3) = 20, min ∫ y² + u²',
    )

    a = np.sqrt(2.0)
    b = (20.0 - 10.0 * np.cosh(3.0 * a)) / np.sinh(3.0 * a)

    def y_star(t):
        t = np.asarray(t, dtype=float)
        return (10.0 * np.cosh(a * t) + b * np.sinh(a * t))[:, None]

    def ydot_star(t):
        t = np.asarray(t, dtype=float)
        return (10.0 * a * np.sinh(a * t) + b * a * np.cosh(a * t))[:, None]

    def u_star(t):
        return ydot_star(t) + y_star(t)

    objective, _ = quad(
        lambda s: float(y_star([s])[0, 0] ** 2 + u_star([s])[0, 0] ** 2), 0.0, 3.0,
        epsabs=1e-13, epsrel=1e-13,
    )
    return problem, ReferenceSolution('analytic', y_star, u_star, objective, ydot_star)


@register('col_counter')
def _col_counter():
    def ode(y, u, t):
        return _stack(u[:, 0], -u[:, 0], y[:, 0])

    def alg(y, u, t):
        return (y[:, 0] ** 2 - y[:, 1])[:, None]

    def mayer(y0, yT):
        return float(yT[2])

    mayer_grad = np.zeros(6)
    mayer_grad[5] = 1.0
    problem = OcpProblem(
        name='col_counter',
        horizon=1.0,
        n_y=3,
        n_u=1,
        n_alg=1,
        n_b=3,
        mayer=mayer,
        boundary=lambda y0, yT: np.asarray(y0, dtype=float).copy(),
        ode=ode,
        alg=alg,
        ode_jac=_jacobian(3, 4, {(0, 3): 1.0, (1, 3): -1.0, (2, 0): 1.0}),
        alg_jac=_jacobian(1, 4, {(0, 0): lambda y, u, t: 2.0 * y[:, 0], (0, 1): -1.0}),
        mayer_grad=_constant(mayer_grad),
        mayer_hess=_constant(np.zeros((6, 6))),
        boundary_jac=_constant(np.hstack([np.eye(3), np.zeros((3, 3))])),
        linear_boundary=True,
        guess=(np.zeros(3), np.zeros(3)),
        description='collocation counterexample, unique minimizer y = 0, u = 0',
    )
    reference = ReferenceSolution(
        'analytic',
        lambda t: _zeros(t, 3),
        lambda t: _zeros(t, 1),
        0.0,
        lambda t: _zeros(t, 3),
    )
    return problem, reference


def _right_sign(t):
    return np.where(np.asarray(t, dtype=float) >= 1.0, 1.0, -1.0)


@register('box_counter')
def _box_counter():
    problem = OcpProblem(
        name='box_counter',
        horizon=2.0,
        n_y=1,
        n_u=1,
        n_alg=1,
        n_b=1,
        mayer=lambda y0, yT: float(yT[0]),
        boundary=lambda y0, yT: np.array([y0[0] - 1.0]),
        ode=lambda y, u, t: u.copy(),
        alg=lambda y, u, t: (u[:, 0] - _right_sign(t))[:, None],
        bounds=Bounds.box(1, 1, u_lower=-1.0, u_upper=1.0),
        ode_jac=_jacobian(1, 2, {(0, 1): 1.0}),
        alg_jac=_jacobian(1, 2, {(0, 1): 1.0}),
        mayer_grad=_constant([0.0, 1.0]),
        mayer_hess=_constant(np.zeros((2, 2))),
        boundary_jac=_constant([[1.0, 0.0]]),
        linear_boundary=True,
        guess=(np.array([1.0]), np.array([1.0])),
        description='bound-feasibility counterexample, u jumps at t = 1',
    )
    reference = ReferenceSolution(
        'analytic',
        lambda t: np.abs(np.asarray(t, dtype=float) - 1.0)[:, None],
        lambda t: _right_sign(t)[:, None],
        1.0,
        lambda t: _right_sign(t)[:, None],
    )
    return problem, reference


@register('vdp')
def _vdp():
    def ode(y, u, t):
        return _stack(y[:, 1], -y[:, 0] + y[:, 1] * (1.0 - y[:, 0] ** 2) + u[:, 0])

    def lagrange(y, u, t):
        return 0.5 * (y[:, 0] ** 2 + y[:, 1] ** 2)

    def lagrange_grad(y, u, t):
        return np.concatenate([y, np.zeros_like(u)], axis=1)

    def ode_hess(y, u, t, w):
        # only the second row is nonlinear: -y1²·y2
        out = np.zeros((len(t), 3, 3))
        out[:, 0, 0] = -2.0 * w[:, 1] * y[:, 1]
        out[:, 0, 1] = out[:, 1, 0] = -2.0 * w[:, 1] * y[:, 0]
        return out

    problem = OcpProblem(
        name='vdp',
        horizon=4.0,
        n_y=2,
        n_u=1,
        n_alg=0,
        n_b=2,
        mayer=_zero_mayer,
        boundary=lambda y0, yT: np.array([y0[0], y0[1] - 1.0]),
        ode=ode,
        lagrange=lagrange,
        bounds=Bounds.box(2, 1, u_lower=-1.0, u_upper=1.0),
        ode_jac=_jacobian(2, 3, {
            (0, 1): 1.0,
            (1, 0): lambda y, u, t: -1.0 - 2.0 * y[:, 0] * y[:, 1],
            (1, 1): lambda y, u, t: 1.0 - y[:, 0] ** 2,
            (1, 2): 1.0,
        }),
        ode_hess=ode_hess,
        lagrange_grad=lagrange_grad,
        lagrange_hess=_pointwise(np.diag([1.0, 1.0, 0.0])),
        mayer_grad=_constant(np.zeros(4)),
        mayer_hess=_constant(np.zeros((4, 4))),
        boundary_jac=_constant([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
        linear_boundary=True,
        guess=(np.array([0.0, 1.0]), np.array([0.0, 1.0])),
        description='van der Pol oscillator with bounded control',
    )
    return problem, None


def _double_integrator(name, horizon, lagrange, lagrange_grad, description, end_guess):
    return OcpProblem(
        name=name,
        horizon=horizon,
        n_y=2,
        n_u=1,
        n_alg=0,
        n_b=2,
        mayer=_zero_mayer,
        boundary=lambda y0, yT: np.array([y0[0], y0[1] - 1.0]),
        ode=lambda y, u, t: _stack(y[:, 1], u[:, 0]),
        lagrange=lagrange,
        bounds=Bounds.box(2, 1, u_lower=-1.0, u_upper=1.0),
        ode_jac=_jacobian(2, 3, {(0, 1): 1.0, (1, 2): 1.0}),
        lagrange_grad=lagrange_grad,
        mayer_grad=_constant(np.zeros(4)),
        mayer_hess=_constant(np.zeros((4, 4))),
        boundary_jac=_constant([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
        linear_boundary=True,
        guess=(np.array([0.0, 1.0]), np.asarray(end_guess, dtype=float)),
        description=description,
    )


@register('singular_regulator')
def _singular_regulator():
    def lagrange(y, u, t):
        return y[:, 0] ** 2 + y[:, 1] ** 2

    def lagrange_grad(y, u, t):
        return np.concatenate([2.0 * y, np.zeros_like(u)], axis=1)

    problem = _double_integrator(
        'singular_regulator', 5.0, lagrange, lagrange_grad,
        'bang-singular regulator: u = -1 up to the junction, then a singular arc', (0.0, 0.0),
    )

    # на особой дуге y1 = A e^t + B e^-t, y2 = A e^t - B e^-t, y2(5) = 0
    def junction(s):
        return (1.0 - 0.5 * s * s) - np.exp(2.0 * s - 10.0) * (2.0 * s - 0.5 * s * s - 1.0)

    t1 = brentq(junction, 1.0, 2.0, xtol=1e-15, rtol=1e-15)
    b = ((t1 - 0.5 * t1 ** 2) - (1.0 - t1)) / (2.0 * np.exp(-t1))
    a = b * np.exp(-10.0)

    def y_star(t):
        t = np.asarray(t, dtype=float)
        bang = t < t1
        y1 = np.where(bang, t - 0.5 * t ** 2, a * np.exp(t) + b * np.exp(-t))
        y2 = np.where(bang, 1.0 - t, a * np.exp(t) - b * np.exp(-t))
        return _stack(y1, y2)

    def ydot_star(t):
        t = np.asarray(t, dtype=float)
        bang = t < t1
        d1 = np.where(bang, 1.0 - t, a * np.exp(t) - b * np.exp(-t))
        d2 = np.where(bang, -1.0, a * np.exp(t) + b * np.exp(-t))
        return _stack(d1, d2)

    def u_star(t):
        return ydot_star(t)[:, 1:2]

    objective = sum(
        quad(lambda s: float(np.sum(y_star([s]) ** 2)), lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
        for lo, hi in ((0.0, t1), (t1, 5.0))
    )
    return problem, ReferenceSolution('analytic', y_star, u_star, objective, ydot_star)


@register('aly_chan')
def _aly_chan():
    def lagrange(y, u, t):
        return y[:, 1] ** 2 - y[:, 0] ** 2

    def lagrange_grad(y, u, t):
        return _stack(-2.0 * y[:, 0], 2.0 * y[:, 1], np.zeros(len(t)))

    problem = _double_integrator(
        'aly_chan', 0.5 * np.pi, lagrange, lagrange_grad,
        'totally singular control, y = (sin t, cos t)', (1.0, 0.0),
    )

    def y_star(t):
        t = np.asarray(t, dtype=float)
        return _stack(np.sin(t), np.cos(t))

    def ydot_star(t):
        t = np.asarray(t, dtype=float)
        return _stack(np.cos(t), -np.sin(t))

    reference = ReferenceSolution(
        'analytic', y_star, lambda t: -np.sin(np.asarray(t, dtype=float))[:, None], 0.0, ydot_star,
    )
    return problem, reference


def _pendulum(name: str, index: int, constraint_force_limit: float | None = None):
    g = GRAVITY

    def ode(y, u, t):
        x1, x2, v1, v2 = y.T
        xi, force = u.T
        return _stack(v1, v2, -2.0 * x1 * xi - x2 * force, -g - 2.0 * x2 * xi + x1 * force)

    ode_jac = _jacobian(4, 6, {
        (0, 2): 1.0,
        (1, 3): 1.0,
        (2, 0): lambda y, u, t: -2.0 * u[:, 0],
        (2, 1): lambda y, u, t: -u[:, 1],
        (2, 4): lambda y, u, t: -2.0 * y[:, 0],
        (2, 5): lambda y, u, t: -y[:, 1],
        (3, 0): lambda y, u, t: u[:, 1],
        (3, 1): lambda y, u, t: -2.0 * u[:, 0],
        (3, 4): lambda y, u, t: -2.0 * y[:, 1],
        (3, 5): lambda y, u, t: y[:, 0],
    })

    if index == 1:
        def alg(y, u, t):
            return (y[:, 2] ** 2 + y[:, 3] ** 2 - 2.0 * u[:, 0] - g * y[:, 1])[:, None]
        alg_jac = _jacobian(1, 6, {
            (0, 1): -g,
            (0, 2): lambda y, u, t: 2.0 * y[:, 2],
            (0, 3): lambda y, u, t: 2.0 * y[:, 3],
            (0, 4): -2.0,
        })
    elif index == 2:
        def alg(y, u, t):
            return (y[:, 0] * y[:, 2] + y[:, 1] * y[:, 3])[:, None]
        alg_jac = _jacobian(1, 6, {
            (0, 0): lambda y, u, t: y[:, 2],
            (0, 1): lambda y, u, t: y[:, 3],
            (0, 2): lambda y, u, t: y[:, 0],
            (0, 3): lambda y, u, t: y[:, 1],
        })
    else:
        def alg(y, u, t):
            return (y[:, 0] ** 2 + y[:, 1] ** 2 - 1.0)[:, None]
        alg_jac = _jacobian(1, 6, {
            (0, 0): lambda y, u, t: 2.0 * y[:, 0],
            (0, 1): lambda y, u, t: 2.0 * y[:, 1],
        })

    start = np.array([1.0, 0.0, 0.0, 0.0])
    end = np.array([0.0, -1.0, 0.0, 0.0])
    upper = None if constraint_force_limit is None else [constraint_force_limit, np.inf]

    return OcpProblem(
        name=name,
        horizon=3.0,
        n_y=4,
        n_u=2,
        n_alg=1,
        n_b=8,
        mayer=_zero_mayer,
        boundary=lambda y0, yT: np.concatenate([y0 - start, yT - end]),
        ode=ode,
        alg=alg,
        lagrange=lambda y, u, t: u[:, 1] ** 2,
        bounds=Bounds.box(4, 2, u_upper=upper),
        ode_jac=ode_jac,
        alg_jac=alg_jac,
        lagrange_grad=lambda y, u, t: _stack(*([np.zeros(len(t))] * 5), 2.0 * u[:, 1]),
        mayer_grad=_constant(np.zeros(8)),
        mayer_hess=_constant(np.zeros((8, 8))),
        boundary_jac=_constant(np.eye(8)),
        linear_boundary=True,
        guess=(start, end),
        description=f'pendulum in differential-algebraic form, index {index}',
    )


@register('pendulum_idx1')
def _pendulum_idx1():
    return _pendulum('pendulum_idx1', 1), None


@register('pendulum_idx2')
def _pendulum_idx2():
    return _pendulum('pendulum_idx2', 2), None


@register('pendulum_idx3')
def _pendulum_idx3():
    return _pendulum('pendulum_idx3', 3), None


@register('pendulum_idx1_bounded')
def _pendulum_idx1_bounded():
    return _pendulum('pendulum_idx1_bounded', 1, constraint_force_limit=8.0), None


@register('mining')
def _mining():
    def ode(y, u, t):
        return _stack(0.1 * y[:, 0] * u[:, 0], 0.1 * y[:, 0] * (1.0 - u[:, 0]))

    # максимизация 0.5 y1(T) + y2(T) записана как минимизация
    problem = OcpProblem(
        name='mining',
        horizon=10.0,
        n_y=2,
        n_u=1,
        n_alg=0,
        n_b=2,
        mayer=lambda y0, yT: -(0.5 * float(yT[0]) + float(yT[1])),
        boundary=lambda y0, yT: np.array([y0[0] - 1.0, y0[1]]),
        ode=ode,
        bounds=Bounds.box(2, 1, u_lower=0.0, u_upper=1.0),
        ode_jac=_jacobian(2, 3, {
            (0, 0): lambda y, u, t: 0.1 * u[:, 0],
            (0, 2): lambda y, u, t: 0.1 * y[:, 0],
            (1, 0): lambda y, u, t: 0.1 * (1.0 - u[:, 0]),
            (1, 2): lambda y, u, t: -0.1 * y[:, 0],
        }),
        mayer_grad=_constant([0.0, 0.0, -0.5, -1.0]),
        mayer_hess=_constant(np.zeros((4, 4))),
        boundary_jac=_constant([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
        linear_boundary=True,
        guess=(np.array([1.0, 0.0]), np.array([np.exp(0.5), 0.5 * np.exp(0.5)])),
        description='reinvestment problem, maximization stored as negated minimization',
    )

    def y_star(t):
        t = np.asarray(t, dtype=float)
        return _stack(np.exp(0.1 * np.minimum(t, 5.0)), 0.1 * np.exp(0.5) * np.maximum(t - 5.0, 0.0))

    def ydot_star(t):
        t = np.asarray(t, dtype=float)
        invest = t < 5.0
        return _stack(np.where(invest, 0.1 * np.exp(0.1 * t), 0.0), np.where(invest, 0.0, 0.1 * np.exp(0.5)))

    def u_star(t):
        return np.where(np.asarray(t, dtype=float) < 5.0, 1.0, 0.0)[:, None]

    return problem, ReferenceSolution('analytic', y_star, u_star, -np.exp(0.5), ydot_star)


def _softplus(a):
    return np.logaddexp(0.0, TRAIN_SHARPNESS * a) / TRAIN_SHARPNESS


@register('commute_train')
def _commute_train():
    def ode(y, u, t):
        v, a = y[:, 1], u[:, 0]
        return _stack(v, a, v + 0.01 * v ** 2 + 100.0 * _softplus(a) ** 2)

    def energy_rate(y, u, t):
        a = u[:, 0]
        return 200.0 * _softplus(a) * expit(TRAIN_SHARPNESS * a)

    mayer_grad = np.zeros(6)
    mayer_grad[5] = 1.0
    boundary_jac = np.zeros((5, 6))
    boundary_jac[0, 0] = boundary_jac[1, 1] = boundary_jac[2, 2] = 1.0
    boundary_jac[3, 3] = boundary_jac[4, 4] = 1.0
    problem = OcpProblem(
        name='commute_train',
        horizon=600.0,
        n_y=3,
        n_u=1,
        n_alg=0,
        n_b=5,
        mayer=lambda y0, yT: float(yT[2]),
        boundary=lambda y0, yT: np.array([y0[0], y0[1], y0[2], yT[0] - TRAIN_ROUTE_LENGTH, yT[1]]),
        ode=ode,
        bounds=Bounds.box(3, 1, y_upper=[np.inf, 20.0, np.inf], u_lower=-0.25, u_upper=0.2),
        ode_jac=_jacobian(3, 4, {
            (0, 1): 1.0,
            (1, 3): 1.0,
            (2, 1): lambda y, u, t: 1.0 + 0.02 * y[:, 1],
            (2, 3): energy_rate,
        }),
        mayer_grad=_constant(mayer_grad),
        mayer_hess=_constant(np.zeros((6, 6))),
        boundary_jac=_constant(boundary_jac),
        linear_boundary=True,
        guess=(np.zeros(3), np.array([TRAIN_ROUTE_LENGTH, 0.0, TRAIN_ROUTE_LENGTH])),
        description='commuter train, smoothed traction cost softplus(a)^2',
    )
    return problem, None


@register('satellite_planar')
def _satellite_planar():
    def ode(y, u, t):
        q1, q2, w = y.T
        return _stack(-q2 * w, q1 * w, u[:, 0])

    def boundary(y0, yT):
        return np.array([y0[0] - 1.0, y0[1], y0[2], yT[2], 0.28 * yT[0] + 0.96 * yT[1]])

    boundary_jac = np.zeros((5, 6))
    boundary_jac[0, 0] = boundary_jac[1, 1] = boundary_jac[2, 2] = boundary_jac[3, 5] = 1.0
    boundary_jac[4, 3] = 0.28
    boundary_jac[4, 4] = 0.96
    problem = OcpProblem(
        name='satellite_planar',
        horizon=5.0,
        n_y=3,
        n_u=1,
        n_alg=0,
        n_b=5,
        mayer=_zero_mayer,
        boundary=boundary,
        ode=ode,
        lagrange=lambda y, u, t: u[:, 0] ** 2 + y[:, 2] ** 2,
        bounds=Bounds.box(3, 1, y_lower=[-np.inf, -np.inf, -20.0], y_upper=[np.inf, np.inf, 20.0],
                          u_lower=-50.0, u_upper=50.0),
        ode_jac=_jacobian(3, 4, {
            (0, 1): lambda y, u, t: -y[:, 2],
            (0, 2): lambda y, u, t: -y[:, 1],
            (1, 0): lambda y, u, t: y[:, 2],
            (1, 2): lambda y, u, t: y[:, 0],
            (2, 3): 1.0,
        }),
        lagrange_grad=lambda y, u, t: _stack(np.zeros(len(t)), np.zeros(len(t)), 2.0 * y[:, 2], 2.0 * u[:, 0]),
        mayer_grad=_constant(np.zeros(6)),
        mayer_hess=_constant(np.zeros((6, 6))),
        boundary_jac=_constant(boundary_jac),
        linear_boundary=True,
        guess=(np.array([1.0, 0.0, 0.0]), np.array([0.96, -0.28, 0.0])),
        description='planar satellite reorientation',
    )
    return problem, None


@register('state_constrained')
def _state_constrained():
    def ode(y, u, t):
        return _stack(u[:, 0] / (2.0 * y[:, 0]), 4.0 * y[:, 0] ** 4 + u[:, 0] ** 2)

    problem = OcpProblem(
        name='state_constrained',
        horizon=1.0,
        n_y=2,
        n_u=1,
        n_alg=0,
        n_b=2,
        mayer=lambda y0, yT: float(yT[1]),
        boundary=lambda y0, yT: np.array([y0[0] - 1.0, y0[1]]),
        ode=ode,
        bounds=Bounds.box(2, 1, y_lower=[np.sqrt(0.4), -np.inf], u_lower=-1.0),
        ode_jac=_jacobian(2, 3, {
            (0, 0): lambda y, u, t: -u[:, 0] / (2.0 * y[:, 0] ** 2),
            (0, 2): lambda y, u, t: 1.0 / (2.0 * y[:, 0]),
            (1, 0): lambda y, u, t: 16.0 * y[:, 0] ** 3,
            (1, 2): lambda y, u, t: 2.0 * u[:, 0],
        }),
        mayer_grad=_constant([0.0, 0.0, 0.0, 1.0]),
        mayer_hess=_constant(np.zeros((4, 4))),
        boundary_jac=_constant([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
        linear_boundary=True,
        guess=(np.array([1.0, 0.0]), np.array([0.7, 2.0])),
        description='state-constrained problem with boundary-control, free and boundary arcs',
    )

    t0 = 1.0 - np.sqrt(41.0) / 10.0
    t1 = t0 + np.log(2.0) - 0.5 * np.log(np.sqrt(41.0) - 5.0)
    y2_t0 = 4.0 / 3.0 * (1.0 - (1.0 - t0) ** 3) + t0
    y2_t1 = y2_t0 - 0.16 * np.sinh(4.0 * (t0 - t1))

    def square(t):
        return np.where(t < t0, 1.0 - t, np.where(t < t1, 0.4 * np.cosh(2.0 * (t - t1)), 0.4))

    def u_values(t):
        return np.where(t < t0, -1.0, np.where(t < t1, 0.8 * np.sinh(2.0 * (t - t1)), 0.0))

    def y_star(t):
        t = np.asarray(t, dtype=float)
        y2 = np.where(
            t < t0,
            4.0 / 3.0 * (1.0 - (1.0 - t) ** 3) + t,
            np.where(t < t1, y2_t0 + 0.16 * (np.sinh(4.0 * (t - t1)) - np.sinh(4.0 * (t0 - t1))),
                     y2_t1 + 0.64 * (t - t1)),
        )
        return _stack(np.sqrt(square(t)), y2)

    def ydot_star(t):
        t = np.asarray(t, dtype=float)
        d2 = np.where(t < t0, 4.0 * (1.0 - t) ** 2 + 1.0,
                      np.where(t < t1, 0.64 * np.cosh(4.0 * (t - t1)), 0.64))
        return _stack(u_values(t) / (2.0 * np.sqrt(square(t))), d2)

    def u_star(t):
        return u_values(np.asarray(t, dtype=float))[:, None]

    objective = float(y_star(np.array([1.0]))[0, 1])
    return problem, ReferenceSolution('analytic', y_star, u_star, objective, ydot_star)
