"""
Модифицированный метод модифицированной функции Лагранжа для программ с квадратичным штрафом

    min f(x) + ‖c(x)‖²/(2ϖ)   при   A_g x - b_g >= 0.

Каждая подзадача минимизирует Ψ(x) = f - λᵀc + ‖c + ϖλ‖²/(2(ϖ + ρ)) решателем ipm;
при ϖ = 0 метод совпадает с классическим методом модифицированной функции Лагранжа.
"""
import csv
import logging
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import minimize

from . import ipm
from .exceptions import IterationLimitError, NotApplicable, NotInteriorError, SolverError
from .fem import PointFamily, ref_points
from .transcription import Mode, Nlp

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('k', 'rho', 'residual', 'inner_iters', 'identity_gap')
NOISE_FLOOR = 1e-14

OCP_DISC_HORIZON = 5.0
OCP_DISC_Y0 = 0.5


@dataclass(frozen=True, eq=False)
class QppInstance:
    """
    Программа с квадратичным штрафом.

    :param hess_c: (x, w) -> Σ w_i ∇²c_i(x)
    :param A_g: матрица аффинных ограничений A_g x - b_g >= 0
    :param upper_g: верхние границы для A_g x (для двусторонних коробок), по умолчанию +inf
    :param trust_radius: радиус ящика ‖x - x_{k-1}‖∞ <= Δ вокруг предыдущей итерации; None отключает
    """
    name: str
    f: Callable
    grad_f: Callable
    hess_f: Callable
    c: Callable
    jac_c: Callable
    hess_c: Callable
    A_g: sparse.csr_matrix
    b_g: np.ndarray
    pval: float
    x0: np.ndarray
    lambda0: np.ndarray
    upper_g: np.ndarray | None = None
    trust_radius: float | None = 10.0

    def __post_init__(self):
        if self.pval < 0.0:
            raise ValueError(f'pval must be nonnegative, got {self.pval!r}')
        object.__setattr__(self, 'A_g', sparse.csr_matrix(self.A_g))
        if self.upper_g is None:
            object.__setattr__(self, 'upper_g', np.full(self.A_g.shape[0], np.inf))

    @property
    def n(self) -> int:
        return self.x0.size

    @property
    def m(self) -> int:
        return self.lambda0.size


@dataclass
class MalmConfig:
    tol: float = 1e-8
    rho0: float = 0.1
    c_rho: float = 0.1
    k_max: int = 100
    inner_tol: float = 1e-9
    rho_floor: float = 1e-12
    freeze_rho: bool = False
    max_total_inner: int | None = None
    inner_stall_iters: int = 10


@dataclass
class MalmReport:
    x: np.ndarray
    lam: np.ndarray
    converged: bool = False
    outer_iters: int = 0
    inner_iters: int = 0
    lambda_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    wall_time_s: float = 0.0
    message: str = ''


def _constraint_rows(inst: QppInstance, center: np.ndarray | None):
    A, lower, upper = inst.A_g, np.asarray(inst.b_g, dtype=float), np.asarray(inst.upper_g, dtype=float)
    if center is not None and inst.trust_radius is not None:
        A = sparse.vstack([A, sparse.identity(inst.n, format='csr')]).tocsr()
        lower = np.concatenate([lower, center - inst.trust_radius])
        upper = np.concatenate([upper, center + inst.trust_radius])
    return A, lower, upper


def _nlp(inst: QppInstance, objective, gradient, hessian, center=None, n_c=0, equality=None, jac=None,
         omega=None) -> Nlp:
    A, lower, upper = _constraint_rows(inst, center)
    empty = sparse.csr_matrix((0, inst.n))
    return Nlp(
        n_x=inst.n,
        n_c=n_c,
        n_bnd=A.shape[0],
        objective=objective,
        gradient=gradient,
        equality=equality or (lambda x: np.zeros(0)),
        jac=jac or (lambda x: empty),
        hess_lag=hessian,
        A=A,
        b_L=lower,
        b_R=upper,
        row_weights=np.ones(n_c),
        barrier_weights=np.ones(A.shape[0]),
        mode=Mode.QPP,
        omega=omega,
    )


def subproblem(inst: QppInstance, lam: np.ndarray, rho: float, center: np.ndarray | None = None) -> Nlp:
    """NLP для минимизации Ψ при фиксированных λ и ρ без блока равенств."""
    weight = 1.0 / (inst.pval + rho)

    def shifted(x):
        return np.asarray(inst.c(x), dtype=float) + inst.pval * lam

    def objective(x):
        r = shifted(x)
        return float(inst.f(x)) - float(lam @ inst.c(x)) + 0.5 * weight * float(r @ r)

    def gradient(x):
        J = sparse.csr_matrix(inst.jac_c(x))
        return np.asarray(inst.grad_f(x), dtype=float) + J.T @ (weight * shifted(x) - lam)

    def hessian(x, _):
        J = sparse.csr_matrix(inst.jac_c(x))
        curvature = weight * shifted(x) - lam
        return sparse.csr_matrix(inst.hess_f(x)) + sparse.csr_matrix(inst.hess_c(x, curvature)) \
            + weight * (J.T @ J)

    return _nlp(inst, objective, gradient, hessian, center=center)


def interior_start(inst: QppInstance, margin: float = 1e-4) -> np.ndarray:
    """Ближайшая к x0 точка со строгим запасом margin в аффинных ограничениях."""
    A, lower, upper = inst.A_g, np.asarray(inst.b_g, dtype=float), np.asarray(inst.upper_g, dtype=float)
    x0 = np.asarray(inst.x0, dtype=float)
    Ax = A @ x0
    finite_L, finite_R = np.isfinite(lower), np.isfinite(upper)
    if np.all(Ax[finite_L] > lower[finite_L]) and np.all(Ax[finite_R] < upper[finite_R]):
        return x0.copy()

    dense = A.toarray()
    rows = np.vstack([dense[finite_L], -dense[finite_R]])
    offsets = np.concatenate([lower[finite_L], -upper[finite_R]]) + margin
    result = minimize(
        lambda x: 0.5 * np.sum((x - x0) ** 2),
        x0,
        jac=lambda x: x - x0,
        method='SLSQP',
        constraints=[{'type': 'ineq', 'fun': lambda x: rows @ x - offsets, 'jac': lambda x: rows}],
    )
    x = result.x
    if not np.all(rows @ x - offsets >= -0.5 * margin):
        raise NotInteriorError(f'{inst.name}: no interior start found ({result.message})')
    logger.warning('%s: initial point projected into the inequality set', inst.name)
    return x


def _inner_config(config: MalmConfig) -> ipm.IpmConfig:
    return ipm.IpmConfig(
        tol=config.inner_tol, omega0=1.0, omega_target=1.0, mu_target=config.inner_tol,
        stall_iters=config.inner_stall_iters,
    )


def malm_solve(inst: QppInstance, config: MalmConfig | None = None) -> tuple[np.ndarray, np.ndarray, MalmReport]:
    """
    Внешний цикл: решение подзадачи, обновление λ ← λ - (c + ϖλ)/(ϖ + ρ),
    остановка при ‖c(x_k) + ϖλ_k‖∞ <= tol, иначе ρ ← c_ρ·ρ.

    :raises IterationLimitError: превышено k_max или общий бюджет внутренних итераций
    """
    config = config or MalmConfig()
    started = time.perf_counter()
    x = interior_start(inst)
    lam = np.array(inst.lambda0, dtype=float)
    rho = config.rho0
    report = MalmReport(x, lam, lambda_history=[lam.copy()])

    try:
        for k in range(1, config.k_max + 1):
            nlp = subproblem(inst, lam, rho, center=x)
            inner = ipm.solve(nlp, x, _inner_config(config))
            x = inner.state.x
            report.inner_iters += inner.inner_iters
            if not inner.converged:
                logger.info('%s k=%d: inner solve %s', inst.name, k, inner.message)

            c = np.asarray(inst.c(x), dtype=float)
            before = c + inst.pval * lam
            lam = lam - before / (inst.pval + rho)
            residual_vec = c + inst.pval * lam
            gap = float(np.max(np.abs(residual_vec - rho / (inst.pval + rho) * before), initial=0.0))
            residual = float(np.max(np.abs(residual_vec), initial=0.0))

            report.x, report.lam, report.outer_iters = x, lam, k
            report.lambda_history.append(lam.copy())
            report.trace.append({
                'k': k, 'rho': rho, 'residual': residual, 'inner_iters': inner.inner_iters,
                'identity_gap': gap,
            })
            logger.info('%s k=%d rho=%.1e residual=%.3e inner=%d', inst.name, k, rho, residual,
                        inner.inner_iters)

            if residual <= config.tol:
                report.converged = True
                report.message = 'converged'
                return x, lam, report
            if config.max_total_inner is not None and report.inner_iters >= config.max_total_inner:
                raise IterationLimitError(f'{inst.name}: {report.inner_iters} inner iterations without convergence')
            if not config.freeze_rho:
                rho = max(config.c_rho * rho, config.rho_floor)
        raise IterationLimitError(f'{inst.name}: no convergence in {config.k_max} outer iterations')
    except SolverError as err:
        report.message = str(err)
        err.report = report
        raise
    finally:
        report.wall_time_s = time.perf_counter() - started


def alm_solve(inst: QppInstance, config: MalmConfig | None = None):
    """Классический метод модифицированной функции Лагранжа для c(x) = 0."""
    return malm_solve(replace(inst, pval=0.0), config)


def pm_solve(inst: QppInstance, config: MalmConfig | None = None) -> tuple[np.ndarray, MalmReport]:
    """
    Прямая минимизация f + ‖c‖²/(2ϖ) одним решением ipm.

    :raises NotApplicable: ϖ = 0, штрафная функция не определена
    """
    if inst.pval <= 0.0:
        raise NotApplicable(f'{inst.name}: penalty method needs pval > 0')
    config = config or MalmConfig()
    started = time.perf_counter()

    def hessian(x, y):
        return sparse.csr_matrix(inst.hess_f(x)) + sparse.csr_matrix(inst.hess_c(x, -np.asarray(y)))

    nlp = _nlp(
        inst, inst.f, inst.grad_f, hessian,
        n_c=inst.m, equality=inst.c, jac=lambda x: sparse.csr_matrix(inst.jac_c(x)), omega=inst.pval,
    )
    settings = ipm.IpmConfig(tol=config.tol, mu_target=config.tol)
    if config.max_total_inner is not None:
        settings.max_inner = config.max_total_inner
    solution = ipm.solve(nlp, interior_start(inst), settings)
    x = solution.state.x
    report = MalmReport(
        x, -np.asarray(inst.c(x)) / inst.pval, converged=solution.converged,
        outer_iters=solution.outer_iters, inner_iters=solution.inner_iters,
        wall_time_s=time.perf_counter() - started, message=solution.message,
    )
    return x, report


def contraction_rate(lambda_history) -> float:
    """
    Множитель линейного сжатия по хвосту ‖λ_k - λ_{k-1}‖: exp наклона прямой
    наименьших квадратов через последние пять значимых разностей.

    Если все разности ниже 1e-14, история считается сошедшейся точно и возвращается 0.
    """
    history = [np.atleast_1d(np.asarray(lam, dtype=float)) for lam in lambda_history]
    if len(history) < 4:
        raise ValueError(f'need at least 4 iterates, got {len(history)}')
    diffs = np.array([np.linalg.norm(b - a) for a, b in zip(history, history[1:])])
    index = np.flatnonzero(diffs > NOISE_FLOOR)
    if index.size < 2:
        return 0.0
    index = index[-5:]
    slope, _ = np.polyfit(index.astype(float), np.log(diffs[index]), 1)
    return float(np.exp(slope))


def write_trace(report: MalmReport, path) -> None:
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in report.trace:
            writer.writerow({key: repr(value) for key, value in row.items()})


X_A = np.array([0.0, np.sqrt(2.0)])
X_B = np.array([1.0, 1.0])


def circle_instance(eps: float, pval: float) -> QppInstance:
    """
    f = -x₁, c = ((x₁ + ε)² + x₂² - 2, (x₁ - ε)² + x₂² - 2), g = (x₁, x₂ - x₁) >= 0,
    начальные приближения x0 = (2, 1), λ0 = 0.
    """
    def c(x):
        return np.array([(x[0] + eps) ** 2 + x[1] ** 2 - 2.0, (x[0] - eps) ** 2 + x[1] ** 2 - 2.0])

    def jac_c(x):
        return np.array([[2.0 * (x[0] + eps), 2.0 * x[1]], [2.0 * (x[0] - eps), 2.0 * x[1]]])

    return QppInstance(
        name='circle',
        f=lambda x: -x[0],
        grad_f=lambda x: np.array([-1.0, 0.0]),
        hess_f=lambda x: np.zeros((2, 2)),
        c=c,
        jac_c=jac_c,
        hess_c=lambda x, w: 2.0 * np.sum(w) * np.eye(2),
        A_g=np.array([[1.0, 0.0], [-1.0, 1.0]]),
        b_g=np.zeros(2),
        pval=pval,
        x0=np.array([2.0, 1.0]),
        lambda0=np.zeros(2),
        trust_radius=None,
    )


class _PiecewiseLinear:
    """
    Непрерывное кусочно-линейное y с фиксированным y(0) и разрывное кусочно-линейное u
    на равномерной сетке; x = [y(h..Nh), u⁺(0), u⁻(h), u⁺(h), ..., u⁻(Nh)].
    """

    def __init__(self, N: int, q: int):
        rule = ref_points(PointFamily.LG, q)
        h = OCP_DISC_HORIZON / N
        s = 0.5 * (rule.points + 1.0)
        n = 3 * N
        interval = np.repeat(np.arange(N), q)
        local = np.tile(np.arange(q), N)
        rows = np.arange(N * q)

        self.alpha = np.tile(0.5 * h * rule.weights, N)
        self.times = (interval + s[local]) * h

        left, right = 1.0 - s[local], s[local]
        keep = interval > 0
        self.My = sparse.coo_matrix(
            (np.concatenate([left[keep], right]),
             (np.concatenate([rows[keep], rows]), np.concatenate([interval[keep] - 1, interval]))),
            shape=(N * q, n),
        ).tocsr()
        self.y_offset = np.where(interval == 0, left * OCP_DISC_Y0, 0.0)

        self.Md = sparse.coo_matrix(
            (np.concatenate([np.full(keep.sum(), -1.0 / h), np.full(N * q, 1.0 / h)]),
             (np.concatenate([rows[keep], rows]), np.concatenate([interval[keep] - 1, interval]))),
            shape=(N * q, n),
        ).tocsr()
        self.d_offset = np.where(interval == 0, -OCP_DISC_Y0 / h, 0.0)

        self.Mu = sparse.coo_matrix(
            (np.concatenate([left, right]),
             (np.concatenate([rows, rows]), np.concatenate([N + 2 * interval, N + 2 * interval + 1]))),
            shape=(N * q, n),
        ).tocsr()
        self.n = n

    def y(self, x):
        return self.My @ x + self.y_offset

    def ydot(self, x):
        return self.Md @ x + self.d_offset

    def u(self, x):
        return self.Mu @ x


def ocp_disc_instance(N: int, pval: float, q: int = 3) -> QppInstance:
    """
    Дискретизация задачи min ∫₀⁵ (y² + t·u) dt, y' = y²/2 + u, y(0) = 0.5, |y|, |u| <= 1
    с квадратурой Гаусса-Лежандра из q точек на интервал:
    f = Σ α (y² + t·u), c = √α (y²/2 + u - y'), g: |x| <= 1.
    """
    basis = _PiecewiseLinear(N, q)
    alpha, sqrt_alpha, times = basis.alpha, np.sqrt(basis.alpha), basis.times

    def f(x):
        y = basis.y(x)
        return float(alpha @ (y ** 2 + times * basis.u(x)))

    def grad_f(x):
        return basis.My.T @ (2.0 * alpha * basis.y(x)) + basis.Mu.T @ (alpha * times)

    def hess_f(x):
        return basis.My.T @ sparse.diags(2.0 * alpha) @ basis.My

    def c(x):
        y = basis.y(x)
        return sqrt_alpha * (0.5 * y ** 2 + basis.u(x) - basis.ydot(x))

    def jac_c(x):
        return sparse.diags(sqrt_alpha) @ (sparse.diags(basis.y(x)) @ basis.My + basis.Mu - basis.Md)

    def hess_c(x, w):
        return basis.My.T @ sparse.diags(np.asarray(w) * sqrt_alpha) @ basis.My

    n = basis.n
    return QppInstance(
        name='ocp_disc',
        f=f,
        grad_f=grad_f,
        hess_f=hess_f,
        c=c,
        jac_c=jac_c,
        hess_c=hess_c,
        A_g=sparse.identity(n, format='csr'),
        b_g=-np.ones(n),
        upper_g=np.ones(n),
        pval=pval,
        x0=np.zeros(n),
        lambda0=np.zeros(alpha.size),
    )


@lru_cache(maxsize=None)
def ocp_disc_reference_objective(N: int = 320, pval: float = 1e-6, q: int = 3) -> float:
    """Значение цели на мелкой сетке, эталон для зазора δJ."""
    inst = ocp_disc_instance(N, pval, q)
    x, _, _ = malm_solve(inst)
    logger.info('ocp_disc reference objective computed on N=%d', N)
    return float(inst.f(x))
