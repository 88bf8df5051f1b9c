"""
Прямо-двойственный штрафно-барьерный метод внутренней точки с линейным поиском.

Внешний цикл уменьшает штраф ω и барьер μ до целевых значений, внутренний выполняет шаги
Ньютона по регуляризованной системе ККТ

    ∇f - Jᵀy - Aᵀ(z_L - z_R) = 0,   c + ωy = 0,
    z_L (Ax - b_L) = μ w_L,         z_R (b_R - Ax) = μ w_R.
"""
import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .exceptions import IterationLimitError, LineSearchError, NonFiniteError, NotInteriorError, SolverError
from .linalg import solve_shifted
from .transcription import Nlp

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('iter', 'omega', 'mu', 'kkt_inf', 'merit', 'step_size')


@dataclass
class IpmConfig:
    """
    Параметры решателя.

    :param omega_target: целевой штраф; по умолчанию ω транскрипции, для жёстких равенств 0.1·tol
    :param mu_target: целевой барьер; по умолчанию τ транскрипции PBF, иначе tol
    :param stall_iters: число итераций без уменьшения лучшей невязки ККТ на 10%, после которого
        внутренний цикл останавливается на лучшей итерации вместо IterationLimitError; None отключает
    """
    tol: float = 1e-7
    omega_target: float | None = None
    mu_target: float | None = None
    omega0: float = 0.1
    mu0: float = 0.1
    shrink: float = 0.1
    max_outer: int = 20
    max_inner: int = 200
    kappa: float = 0.995
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    stall_iters: int | None = None

    def targets(self, nlp: Nlp) -> tuple[float, float]:
        omega = self.omega_target
        if omega is None:
            omega = nlp.omega if nlp.omega is not None else 0.1 * self.tol
        mu = self.mu_target
        if mu is None:
            mu = nlp.tau if nlp.tau is not None else self.tol
        return omega, mu


@dataclass(frozen=True)
class IpmState:
    x: np.ndarray
    y: np.ndarray
    z_L: np.ndarray
    z_R: np.ndarray
    omega: float
    mu: float
    iter: int = 0


@dataclass(frozen=True)
class Direction:
    dx: np.ndarray
    dy: np.ndarray
    dz_L: np.ndarray
    dz_R: np.ndarray
    shift: float = 0.0

    def __neg__(self) -> 'Direction':
        return Direction(-self.dx, -self.dy, -self.dz_L, -self.dz_R, self.shift)


@dataclass
class SolveReport:
    state: IpmState
    converged: bool
    outer_iters: int
    inner_iters: int
    kkt_residual_inf: float
    merit_history: list = field(default_factory=list)
    wall_time_s: float = 0.0
    trace: list = field(default_factory=list)
    initial_objective: float = float('nan')
    final_objective: float = float('nan')
    message: str = ''

    @property
    def undercuts_initial_guess(self) -> bool:
        return bool(self.final_objective < self.initial_objective)


@dataclass(frozen=True)
class _Evaluation:
    """Значения функций задачи в одной точке."""
    f: float
    g: np.ndarray
    c: np.ndarray
    J: sparse.csr_matrix
    Ax: np.ndarray


def _evaluate(nlp: Nlp, x: np.ndarray) -> _Evaluation:
    return _Evaluation(
        f=float(nlp.objective(x)),
        g=np.asarray(nlp.gradient(x), dtype=float),
        c=np.asarray(nlp.equality(x), dtype=float),
        J=sparse.csr_matrix(nlp.jac(x), shape=(nlp.n_c, nlp.n_x)),
        Ax=nlp.A @ x,
    )


class _Bounds:
    """Маски конечных границ и веса барьера."""

    def __init__(self, nlp: Nlp):
        self.finite_L = np.isfinite(nlp.b_L)
        self.finite_R = np.isfinite(nlp.b_R)
        self.w_L = np.where(self.finite_L, nlp.barrier_weights, 0.0)
        self.w_R = np.where(self.finite_R, nlp.barrier_weights, 0.0)
        self.b_L = np.where(self.finite_L, nlp.b_L, 0.0)
        self.b_R = np.where(self.finite_R, nlp.b_R, 0.0)

    def slacks(self, Ax: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s_L = np.where(self.finite_L, Ax - self.b_L, 1.0)
        s_R = np.where(self.finite_R, self.b_R - Ax, 1.0)
        return s_L, s_R

    def interior(self, Ax: np.ndarray) -> bool:
        s_L, s_R = self.slacks(Ax)
        return bool(np.all(s_L > 0.0) and np.all(s_R > 0.0))


def initial_state(nlp: Nlp, x0, omega: float, mu: float) -> IpmState:
    """Начальное состояние: y = 0, z = μ·w / slack по конечным границам."""
    bounds = _Bounds(nlp)
    x = ensure_interior(nlp, x0)
    s_L, s_R = bounds.slacks(nlp.A @ x)
    return IpmState(
        x=x,
        y=np.zeros(nlp.n_c),
        z_L=np.where(bounds.finite_L, mu * bounds.w_L / s_L, 0.0),
        z_R=np.where(bounds.finite_R, mu * bounds.w_R / s_R, 0.0),
        omega=omega,
        mu=mu,
    )


def ensure_interior(nlp: Nlp, x0) -> np.ndarray:
    """
    Сдвигает x0 внутрь границ, если строки A выбирают отдельные компоненты x.

    :raises NotInteriorError: точка не внутренняя и A не является матрицей выбора
    """
    x = np.array(x0, dtype=float)
    bounds = _Bounds(nlp)
    if bounds.interior(nlp.A @ x):
        return x
    A = sparse.csr_matrix(nlp.A)
    selection = np.all(np.diff(A.indptr) == 1) and np.all(A.data == 1.0)
    if not selection:
        raise NotInteriorError('initial point violates bounds and cannot be shifted inward')
    for row in range(A.shape[0]):
        j = A.indices[A.indptr[row]]
        lo, hi = nlp.b_L[row], nlp.b_R[row]
        if np.isfinite(lo) and np.isfinite(hi):
            margin = 1e-8 * (hi - lo)
        else:
            margin = 1e-8 * (1.0 + abs(lo if np.isfinite(lo) else hi))
        x[j] = np.clip(x[j], lo + margin, hi - margin)
    if not bounds.interior(nlp.A @ x):
        raise NotInteriorError('initial point could not be moved strictly inside the bounds')
    logger.warning('initial point shifted inside the bounds')
    return x


def kkt_residuals(nlp: Nlp, state: IpmState, evaluation: _Evaluation | None = None) -> np.ndarray:
    """
    Четыре блока невязки ККТ подряд: стационарность, регуляризованные равенства,
    дополняющая нежёсткость по нижним и верхним границам.

    :raises NonFiniteError: в блоке есть неконечные значения
    """
    ev = evaluation or _evaluate(nlp, state.x)
    bounds = _Bounds(nlp)
    s_L, s_R = bounds.slacks(ev.Ax)
    blocks = {
        'stationarity': ev.g - ev.J.T @ state.y - nlp.A.T @ (state.z_L - state.z_R),
        'equality': ev.c + state.omega * state.y,
        'lower': np.where(bounds.finite_L, state.z_L * s_L - state.mu * bounds.w_L, 0.0),
        'upper': np.where(bounds.finite_R, state.z_R * s_R - state.mu * bounds.w_R, 0.0),
    }
    for name, block in blocks.items():
        if not np.all(np.isfinite(block)):
            raise NonFiniteError(name)
    return np.concatenate(list(blocks.values()))


def kkt_norm(residuals: np.ndarray) -> float:
    return float(np.max(np.abs(residuals), initial=0.0))


def _reduced_rhs(nlp: Nlp, state: IpmState, ev: _Evaluation, bounds: _Bounds) -> np.ndarray:
    s_L, s_R = bounds.slacks(ev.Ax)
    barrier = np.where(bounds.finite_L, state.mu * bounds.w_L / s_L, 0.0) - np.where(
        bounds.finite_R, state.mu * bounds.w_R / s_R, 0.0
    )
    return ev.g + ev.J.T @ ev.c / state.omega - nlp.A.T @ barrier


def newton_step(nlp: Nlp, state: IpmState, evaluation: _Evaluation | None = None) -> Direction:
    """
    Шаг Ньютона через приведённую систему

        (H + JᵀJ/ω + Aᵀ D A) Δx = -r,   D = z_L/(Ax - b_L) + z_R/(b_R - Ax),

    с восстановлением Δy и Δz из линеаризованных блоков ККТ.
    """
    ev = evaluation or _evaluate(nlp, state.x)
    bounds = _Bounds(nlp)
    s_L, s_R = bounds.slacks(ev.Ax)
    H = sparse.csr_matrix(nlp.hess_lag(state.x, state.y), shape=(nlp.n_x, nlp.n_x))
    D = np.where(bounds.finite_L, state.z_L / s_L, 0.0) + np.where(bounds.finite_R, state.z_R / s_R, 0.0)
    S = H + (ev.J.T @ ev.J) / state.omega
    if nlp.n_bnd:
        S = S + nlp.A.T @ sparse.diags(D) @ nlp.A
    r = _reduced_rhs(nlp, state, ev, bounds)

    dx, shift = solve_shifted(S, -r)
    if shift > 0.0:
        logger.debug('iteration %d: inertia correction shift %.3e', state.iter, shift)
    dy = -(ev.c + state.omega * state.y + ev.J @ dx) / state.omega
    Adx = nlp.A @ dx
    dz_L = np.where(
        bounds.finite_L, (state.mu * bounds.w_L - state.z_L * s_L - state.z_L * Adx) / s_L, 0.0
    )
    dz_R = np.where(
        bounds.finite_R, (state.mu * bounds.w_R - state.z_R * s_R + state.z_R * Adx) / s_R, 0.0
    )
    return Direction(dx, dy, dz_L, dz_R, shift)


def fraction_to_boundary(nlp: Nlp, state: IpmState, direction: Direction, kappa: float = 0.995) -> float:
    """Наибольший шаг s ∈ (0, 1], сохраняющий долю 1 - κ каждого зазора и каждой двойственной."""
    bounds = _Bounds(nlp)
    s_L, s_R = bounds.slacks(nlp.A @ state.x)
    Adx = nlp.A @ direction.dx
    candidates = [1.0]

    def limit(gap, rate, mask):
        active = mask & (rate < 0.0)
        if np.any(active):
            candidates.append(float(np.min(kappa * gap[active] / -rate[active])))

    limit(s_L, Adx, bounds.finite_L)
    limit(s_R, -Adx, bounds.finite_R)
    limit(state.z_L, direction.dz_L, bounds.finite_L)
    limit(state.z_R, direction.dz_R, bounds.finite_R)
    s_max = min(candidates)
    if s_max <= 0.0:
        logger.warning('degenerate direction: fraction-to-boundary step is zero')
    return s_max


def merit(nlp: Nlp, x, omega: float, mu: float) -> float:
    """Φ = f + ‖c‖²/(2ω) - μ Σ w log(зазор); вне границ +inf."""
    bounds = _Bounds(nlp)
    s_L, s_R = bounds.slacks(nlp.A @ x)
    if np.any(s_L <= 0.0) or np.any(s_R <= 0.0):
        return float('inf')
    c = np.asarray(nlp.equality(x), dtype=float)
    barrier = np.sum(bounds.w_L * np.log(s_L)) + np.sum(bounds.w_R * np.log(s_R))
    value = float(nlp.objective(x)) + float(c @ c) / (2.0 * omega) - mu * float(barrier)
    return value if np.isfinite(value) else float('inf')


def line_search(nlp: Nlp, state: IpmState, direction: Direction, s_max: float,
                config: IpmConfig | None = None, evaluation: _Evaluation | None = None) -> float:
    """
    Дробление шага от s_max с условием Армихо для функции Φ.

    :raises LineSearchError: после всех дроблений нет даже простого убывания
    """
    config = config or IpmConfig()
    ev = evaluation or _evaluate(nlp, state.x)
    slope = float(_reduced_rhs(nlp, state, ev, _Bounds(nlp)) @ direction.dx)
    phi0 = merit(nlp, state.x, state.omega, state.mu)
    model_slope = min(slope, 0.0)

    s = s_max
    decrease = None
    for _ in range(config.max_backtracks + 1):
        phi = merit(nlp, state.x + s * direction.dx, state.omega, state.mu)
        if phi <= phi0 + config.armijo * s * model_slope:
            return s
        if phi < phi0:
            decrease = s
        s *= config.backtrack
    if decrease is not None:
        logger.warning('armijo condition not met, accepting step %.3e with simple decrease', decrease)
        return decrease
    raise LineSearchError(
        f'no decrease of the merit function after {config.max_backtracks} backtracks '
        f'(slope {slope:.3e}, merit {phi0:.6e})'
    )


def _advance(state: IpmState, direction: Direction, s: float) -> IpmState:
    return replace(
        state,
        x=state.x + s * direction.dx,
        y=state.y + s * direction.dy,
        z_L=state.z_L + s * direction.dz_L,
        z_R=state.z_R + s * direction.dz_R,
        iter=state.iter + 1,
    )


def solve(nlp: Nlp, x0, config: IpmConfig | None = None) -> SolveReport:
    """
    Решает NLP от начальной точки x0.

    При неудаче исключение SolverError несёт частичный отчёт в атрибуте report.
    """
    config = config or IpmConfig()
    started = time.perf_counter()
    omega_target, mu_target = config.targets(nlp)
    omega = max(config.omega0, omega_target)
    mu = max(config.mu0, mu_target)

    state = initial_state(nlp, x0, omega, mu)
    report = SolveReport(state, False, 0, 0, float('inf'), initial_objective=float(nlp.objective(state.x)))
    bounds = _Bounds(nlp)

    def finish(converged: bool, kkt: float, message: str) -> SolveReport:
        report.state = state
        report.converged = converged
        report.kkt_residual_inf = kkt
        report.wall_time_s = time.perf_counter() - started
        report.final_objective = float(nlp.objective(state.x))
        report.message = message
        return report

    try:
        for outer in range(1, config.max_outer + 1):
            report.outer_iters = outer
            at_targets = state.omega <= omega_target and state.mu <= mu_target
            inner_tol = config.tol if at_targets else max(config.tol, 0.1 * state.omega)
            best_kkt, best_state, since_best = float('inf'), state, 0
            stalled = False
            for inner in range(config.max_inner + 1):
                ev = _evaluate(nlp, state.x)
                kkt = kkt_norm(kkt_residuals(nlp, state, ev))
                report.kkt_residual_inf = kkt
                if kkt <= inner_tol:
                    break
                since_best = 0 if kkt < 0.9 * best_kkt else since_best + 1
                if kkt < best_kkt:
                    best_kkt, best_state = kkt, state
                if config.stall_iters is not None and since_best >= config.stall_iters:
                    stalled = True
                    break
                if inner == config.max_inner:
                    raise IterationLimitError(
                        f'inner loop did not reach {inner_tol:.1e} in {config.max_inner} iterations (kkt={kkt:.3e})'
                    )
                direction = newton_step(nlp, state, ev)
                s_max = fraction_to_boundary(nlp, state, direction, config.kappa)
                try:
                    s = line_search(nlp, state, direction, s_max, config, ev)
                except LineSearchError:
                    if config.stall_iters is None:
                        raise
                    stalled = True
                    break
                state = _advance(state, direction, s)
                report.inner_iters += 1
                if not bounds.interior(nlp.A @ state.x) or np.any(state.z_L[bounds.finite_L] <= 0.0) \
                        or np.any(state.z_R[bounds.finite_R] <= 0.0):
                    raise NotInteriorError(f'iterate {state.iter} left the interior')
                phi = merit(nlp, state.x, state.omega, state.mu)
                report.merit_history.append(phi)
                report.trace.append({
                    'iter': state.iter, 'omega': state.omega, 'mu': state.mu,
                    'kkt_inf': kkt, 'merit': phi, 'step_size': s,
                })
                logger.debug('iter %d: kkt=%.3e merit=%.10e step=%.3e', state.iter, kkt, phi, s)
            if stalled:
                state, kkt = best_state, best_kkt
                report.kkt_residual_inf = kkt
                logger.warning(
                    'inner loop stalled at kkt=%.3e above %.1e, continuing from the best iterate', kkt, inner_tol
                )
            logger.info(
                'outer %d: omega=%.1e mu=%.1e kkt=%.3e inner=%d', outer, state.omega, state.mu, kkt,
                report.inner_iters,
            )
            if at_targets:
                if stalled:
                    return finish(False, kkt, f'stalled at kkt={kkt:.3e}')
                return finish(True, kkt, 'converged')
            state = replace(
                state,
                omega=max(state.omega * config.shrink, omega_target),
                mu=max(state.mu * config.shrink, mu_target),
            )
        raise IterationLimitError(f'no convergence in {config.max_outer} outer iterations')
    except SolverError as err:
        err.report = finish(False, report.kkt_residual_inf, str(err))
        logger.warning('solver stopped: %s', err)
        raise


def write_trace(report: SolveReport, path) -> None:
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in report.trace:
            writer.writerow({key: repr(value) for key, value in row.items()})
