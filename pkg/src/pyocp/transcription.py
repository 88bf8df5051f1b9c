"""
Перевод задачи оптимального управления в конечномерную NLP.

Вектор решения упорядочен по интервалам: внутри интервала по узлам LGR, в узле сначала y,
затем u; последний блок хранит y(T). Ограничения-равенства содержат граничный блок и
невязки динамики в точках коллокации (DCM) или в квадратурных точках с множителем √α
(QPM, PBF). Простые ограничения задаются матрицей A выборки значений в точках.
"""
import csv
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy import sparse

from .exceptions import AssemblyError, ConfigError, DimensionMismatch, NotInteriorError
from .fem import Mesh, PointFamily, RefPointSet, Trajectory, local_basis, ref_points
from .ocp import OcpProblem, augment_lagrange

logger = logging.getLogger(__name__)

STATE_ROW = 0
CONTROL_ROW = 1


class Mode(str, Enum):
    DCM = 'dcm'
    QPM = 'qpm'
    PBF = 'pbf'
    QPP = 'qpp'


@dataclass(frozen=True, eq=False)
class Layout:
    mesh: Mesh
    p: int
    n_y: int
    n_u: int

    @property
    def n_z(self) -> int:
        return self.n_y + self.n_u

    @property
    def block(self) -> int:
        return self.p * self.n_z

    @property
    def n_loc(self) -> int:
        return self.block + self.n_y

    @property
    def n_x(self) -> int:
        return self.mesh.N * self.block + self.n_y

    def loc_index(self) -> np.ndarray:
        """Глобальные номера локальных переменных интервалов, форма (N, n_loc)."""
        return np.arange(self.mesh.N)[:, None] * self.block + np.arange(self.n_loc)[None, :]

    def interval_of(self, columns) -> np.ndarray:
        return np.minimum(np.asarray(columns) // self.block, self.mesh.N - 1)


def pack(traj: Trajectory) -> np.ndarray:
    nodes = np.concatenate([traj.y_nodes, traj.u_nodes], axis=2)
    return np.concatenate([nodes.ravel(), traj.y_final])


def unpack(x, mesh: Mesh, p: int, n_y: int, n_u: int) -> Trajectory:
    layout = Layout(mesh, p, n_y, n_u)
    x = np.asarray(x, dtype=float)
    if x.shape != (layout.n_x,):
        raise DimensionMismatch(f'expected a vector of length {layout.n_x}, got shape {x.shape}')
    nodes = x[:-n_y].reshape(mesh.N, p, layout.n_z)
    return Trajectory(mesh, p, nodes[:, :, :n_y].copy(), x[-n_y:].copy(), nodes[:, :, n_y:].copy())


@dataclass(frozen=True, eq=False)
class PointStencil:
    """
    Значения y, y', u в опорных точках xi каждого интервала как линейные функции
    локальных переменных интервала.
    """
    layout: Layout
    xi: np.ndarray
    Py: np.ndarray
    Pdy: np.ndarray
    Pu: np.ndarray
    times: np.ndarray

    @classmethod
    def build(cls, layout: Layout, xi) -> 'PointStencil':
        xi = np.asarray(xi, dtype=float)
        Ly, dLy, Lu = local_basis(layout.p, xi)
        K, n_y, n_u, n_z, p = xi.size, layout.n_y, layout.n_u, layout.n_z, layout.p
        Py = np.zeros((K, n_y, layout.n_loc))
        Pdy = np.zeros((K, n_y, layout.n_loc))
        Pu = np.zeros((K, n_u, layout.n_loc))
        ys, us = np.arange(n_y), np.arange(n_u)
        for j in range(p + 1):
            Py[:, ys, j * n_z + ys] = Ly[:, j:j + 1]
            Pdy[:, ys, j * n_z + ys] = dLy[:, j:j + 1]
        for j in range(p):
            Pu[:, us, j * n_z + n_y + us] = Lu[:, j:j + 1]
        return cls(layout, xi, Py, Pdy, Pu, layout.mesh.to_global(xi))

    @property
    def K(self) -> int:
        return self.xi.size

    @property
    def P(self) -> np.ndarray:
        return np.concatenate([self.Py, self.Pu], axis=1)

    @property
    def scale(self) -> np.ndarray:
        return 2.0 / self.layout.mesh.lengths

    def values(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        local = x[self.layout.loc_index()]
        y = np.einsum('kal,nl->nka', self.Py, local)
        ydot = np.einsum('kal,nl->nka', self.Pdy, local) * self.scale[:, None, None]
        u = np.einsum('kal,nl->nka', self.Pu, local)
        return y, ydot, u

    def flat_values(self, x: np.ndarray):
        y, ydot, u = self.values(x)
        layout = self.layout
        return (
            y.reshape(-1, layout.n_y),
            ydot.reshape(-1, layout.n_y),
            u.reshape(-1, layout.n_u),
            self.times.ravel(),
        )

    def scatter_gradient(self, local_grad: np.ndarray) -> np.ndarray:
        """Суммирует локальные градиенты (N, n_loc) в вектор длины n_x."""
        index = self.layout.loc_index()
        return np.bincount(index.ravel(), weights=local_grad.ravel(), minlength=self.layout.n_x)

    def scatter_hessian(self, local_hess: np.ndarray) -> sparse.csr_matrix:
        """Собирает локальные блоки (N, n_loc, n_loc) в разреженную матрицу n_x x n_x."""
        index = self.layout.loc_index()
        n_loc = self.layout.n_loc
        rows = np.repeat(index[:, :, None], n_loc, axis=2)
        cols = np.repeat(index[:, None, :], n_loc, axis=1)
        n_x = self.layout.n_x
        return sparse.coo_matrix(
            (local_hess.ravel(), (rows.ravel(), cols.ravel())), shape=(n_x, n_x)
        ).tocsr()


@dataclass(frozen=True, eq=False)
class Nlp:
    """
    Конечномерная задача

        min f(x)  при  c(x) = 0 (через штраф с весом 1/(2ω)),  b_L <= A x <= b_R.

    :param row_weights: множители строк равенств (√α уже внесены в equality)
    :param barrier_weights: веса логарифмического барьера по строкам A
    :param mode: тип транскрипции
    :param omega: штрафной параметр транскрипции (None для жёстких равенств)
    :param tau: барьерный параметр транскрипции PBF
    """
    n_x: int
    n_c: int
    n_bnd: int
    objective: Callable
    gradient: Callable
    equality: Callable
    jac: Callable
    hess_lag: Callable
    A: sparse.csr_matrix
    b_L: np.ndarray
    b_R: np.ndarray
    row_weights: np.ndarray
    barrier_weights: np.ndarray
    mode: Mode
    omega: float | None = None
    tau: float | None = None
    layout: Layout | None = None
    problem: OcpProblem | None = None
    bound_rows: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.b_L >= self.b_R):
            raise DimensionMismatch('bounds must satisfy b_L < b_R strictly')

    def slacks(self, x) -> tuple[np.ndarray, np.ndarray]:
        Ax = self.A @ x
        lower = np.where(np.isfinite(self.b_L), Ax - self.b_L, 1.0)
        upper = np.where(np.isfinite(self.b_R), self.b_R - Ax, 1.0)
        return lower, upper

    def is_interior(self, x) -> bool:
        lower, upper = self.slacks(x)
        return bool(np.all(lower > 0.0) and np.all(upper > 0.0))

    def barrier(self, x) -> float:
        """Квадратурная сумма -Σ w (log(Ax - b_L) + log(b_R - Ax)) по конечным границам."""
        lower, upper = self.slacks(x)
        return float(-np.sum(self.barrier_weights * (np.log(lower) + np.log(upper))))

    def unpack(self, x) -> Trajectory:
        layout = self.layout
        return unpack(x, layout.mesh, layout.p, layout.n_y, layout.n_u)

    def initial_point(self, traj: Trajectory) -> np.ndarray:
        """
        Упакованное начальное приближение, строго внутреннее относительно границ.

        Компоненты, нарушающие границы, заменяются постоянными значениями внутри границ:
        состояния на всём горизонте, управления на отдельных интервалах.
        """
        x = pack(traj)
        if self.is_interior(x) or self.bound_rows is None:
            return x

        lower, upper = self.slacks(x)
        bad = (lower <= 0.0) | (upper <= 0.0)
        y_nodes, u_nodes, y_final = traj.y_nodes.copy(), traj.u_nodes.copy(), traj.y_final.copy()
        info = self.bound_rows

        for a in np.unique(info[bad & (info[:, 1] == STATE_ROW), 2]):
            rows = (info[:, 1] == STATE_ROW) & (info[:, 2] == a)
            value = _inner_constant(
                np.append(y_nodes[:, :, a].ravel(), y_final[a]), self.b_L[rows], self.b_R[rows]
            )
            y_nodes[:, :, a] = value
            y_final[a] = value
            logger.warning('initial state component %d moved inside its bounds', a)

        for n, b in {(int(r[0]), int(r[2])) for r in info[bad & (info[:, 1] == CONTROL_ROW)]}:
            rows = (info[:, 0] == n) & (info[:, 1] == CONTROL_ROW) & (info[:, 2] == b)
            u_nodes[n, :, b] = _inner_constant(u_nodes[n, :, b], self.b_L[rows], self.b_R[rows])
        if np.any(bad & (info[:, 1] == CONTROL_ROW)):
            logger.warning('initial control moved inside its bounds')

        x = pack(Trajectory(traj.mesh, traj.p, y_nodes, y_final, u_nodes))
        if not self.is_interior(x):
            raise NotInteriorError('could not build a strictly interior initial point')
        return x


def _inner_constant(values, lower, upper) -> float:
    lo = np.max(lower, initial=-np.inf)
    hi = np.min(upper, initial=np.inf)
    if np.isfinite(lo) and np.isfinite(hi):
        margin = 0.01 * (hi - lo)
    else:
        margin = 0.01 * max(1.0, abs(lo) if np.isfinite(lo) else abs(hi))
    if lo + margin >= hi - margin:
        return 0.5 * (lo + hi)
    return float(np.clip(np.mean(values), lo + margin, hi - margin))


class _Transcription:
    """Общая сборка целевой функции, равенств и их производных для DCM, QPM и PBF."""

    def __init__(self, problem: OcpProblem, layout: Layout, residual_points: RefPointSet,
                 weighted: bool, running_rule: RefPointSet):
        self.problem = augment_lagrange(problem, running_rule)
        self.layout = layout
        self.rows = PointStencil.build(layout, residual_points.points)
        if weighted:
            alpha = 0.5 * layout.mesh.lengths[:, None] * residual_points.weights[None, :]
            self.sqrt_alpha = np.sqrt(alpha)
        else:
            self.sqrt_alpha = np.ones((layout.mesh.N, residual_points.size))
        if self.problem.running_cost is not None:
            running_rule = self.problem.running_cost.rule
        self.cost = PointStencil.build(layout, running_rule.points)
        self.cost_alpha = 0.5 * layout.mesh.lengths[:, None] * running_rule.weights[None, :]
        n_f = self.problem.n_f
        self.row_weights = np.concatenate([
            np.ones(self.problem.n_b),
            np.repeat(self.sqrt_alpha.ravel(), n_f),
        ])
        self.n_c = self.problem.n_b + self.sqrt_alpha.size * n_f

    def _ends(self, x):
        n_y = self.layout.n_y
        return x[:n_y], x[-n_y:]

    def objective(self, x) -> float:
        problem = self.problem
        y0, yT = self._ends(x)
        value = float(problem.mayer(y0, yT))
        if problem.running_cost is None:
            return value
        y, _, u, t = self.cost.flat_values(x)
        return value + float(np.dot(self.cost_alpha.ravel(), problem.running(y, u, t)))

    def gradient(self, x) -> np.ndarray:
        problem, layout = self.problem, self.layout
        y0, yT = self._ends(x)
        grad = np.zeros(layout.n_x)
        terminal = problem.terminal_grad(y0, yT)
        grad[:layout.n_y] += terminal[:layout.n_y]
        grad[-layout.n_y:] += terminal[layout.n_y:]
        if problem.running_cost is not None:
            y, _, u, t = self.cost.flat_values(x)
            g = problem.running_grad(y, u, t).reshape(layout.mesh.N, self.cost.K, layout.n_z)
            g *= self.cost_alpha[:, :, None]
            grad += self.cost.scatter_gradient(np.einsum('kal,nka->nl', self.cost.P, g))
        return grad

    def equality(self, x) -> np.ndarray:
        y0, yT = self._ends(x)
        y, ydot, u, t = self.rows.flat_values(x)
        f = self.problem.residual(ydot, y, u, t) * self.sqrt_alpha.reshape(-1, 1)
        return np.concatenate([self.problem.boundary_values(y0, yT), f.ravel()])

    def jac(self, x) -> sparse.csr_matrix:
        problem, layout, rows = self.problem, self.layout, self.rows
        N, K, n_f, n_y = layout.mesh.N, rows.K, problem.n_f, layout.n_y
        y, _, u, t = rows.flat_values(x)
        G = problem.residual_jac(y, u, t).reshape(N, K, n_f, layout.n_z)
        local = (
            np.einsum('nkfa,kal->nkfl', G[..., :n_y], rows.Py)
            + np.einsum('nkfb,kbl->nkfl', G[..., n_y:], rows.Pu)
        )
        local[:, :, :n_y, :] -= rows.Pdy[None, :, :, :] * rows.scale[:, None, None, None]
        local *= self.sqrt_alpha[:, :, None, None]

        index = layout.loc_index()
        row_ids = problem.n_b + np.arange(N * K * n_f).reshape(N, K, n_f)
        r = np.broadcast_to(row_ids[:, :, :, None], local.shape)
        c = np.broadcast_to(index[:, None, None, :], local.shape)

        y0, yT = self._ends(x)
        B = problem.boundary_jacobian(y0, yT)
        b_cols = np.concatenate([np.arange(n_y), layout.n_x - n_y + np.arange(n_y)])
        b_rows = np.repeat(np.arange(problem.n_b), 2 * n_y)
        b_cols = np.tile(b_cols, problem.n_b)

        data = np.concatenate([B.ravel(), local.ravel()])
        all_rows = np.concatenate([b_rows, r.ravel()])
        all_cols = np.concatenate([b_cols, c.ravel()])
        return sparse.coo_matrix((data, (all_rows, all_cols)), shape=(self.n_c, layout.n_x)).tocsr()

    def hess_lag(self, x, y_mult) -> sparse.csr_matrix:
        """Гессиан функции Лагранжа f - yᵀc."""
        problem, layout, rows = self.problem, self.layout, self.rows
        N, n_y, n_x = layout.mesh.N, layout.n_y, layout.n_x
        y_mult = np.asarray(y_mult, dtype=float)
        y0, yT = self._ends(x)

        ends = np.concatenate([np.arange(n_y), n_x - n_y + np.arange(n_y)])
        terminal = problem.terminal_hess(y0, yT) - problem.boundary_hess(y0, yT, y_mult[:problem.n_b])
        H = sparse.coo_matrix(
            (terminal.ravel(), (np.repeat(ends, 2 * n_y), np.tile(ends, 2 * n_y))), shape=(n_x, n_x)
        ).tocsr()

        y, _, u, t = rows.flat_values(x)
        weights = -(y_mult[problem.n_b:].reshape(N, rows.K, problem.n_f) * self.sqrt_alpha[:, :, None])
        W = problem.residual_hess(y, u, t, weights.reshape(-1, problem.n_f)).reshape(
            N, rows.K, layout.n_z, layout.n_z
        )
        P = rows.P
        H = H + rows.scatter_hessian(np.einsum('kal,nkab,kbm->nlm', P, W, P))

        if problem.running_cost is not None:
            y, _, u, t = self.cost.flat_values(x)
            L = problem.running_hess(y, u, t).reshape(N, self.cost.K, layout.n_z, layout.n_z)
            L *= self.cost_alpha[:, :, None, None]
            P = self.cost.P
            H = H + self.cost.scatter_hessian(np.einsum('kal,nkab,kbm->nlm', P, L, P))

        H = H.tocsr()
        return ((H + H.T) * 0.5).tocsr()


def _bound_rows(problem: OcpProblem, layout: Layout, points: RefPointSet, weights: np.ndarray | None):
    """
    Матрица выборки A и границы в точках points каждого интервала.

    Строки без конечных границ пропускаются; если точки содержат оба конца интервала,
    значение состояния в общем узле сетки принадлежит левому интервалу.
    """
    stencil = PointStencil.build(layout, points.points)
    N, K = layout.mesh.N, stencil.K
    shared = np.isclose(points.points[0], -1.0) and np.isclose(points.points[-1], 1.0)
    y_lower, y_upper, u_lower, u_upper = problem.bounds.sample(stencil.times.ravel())
    index = layout.loc_index()

    rows, cols, data = [], [], []
    b_L, b_R, barrier, info = [], [], [], []
    for n in range(N):
        for k in range(K):
            point = n * K + k
            weight = 1.0 if weights is None else weights[n, k]
            candidates = []
            if not (shared and k == 0 and n > 0):
                candidates += [
                    (STATE_ROW, a, stencil.Py[k, a], y_lower[point, a], y_upper[point, a])
                    for a in range(layout.n_y)
                ]
            candidates += [
                (CONTROL_ROW, b, stencil.Pu[k, b], u_lower[point, b], u_upper[point, b])
                for b in range(layout.n_u)
            ]
            for kind, component, stencil_row, lo, hi in candidates:
                if not (np.isfinite(lo) or np.isfinite(hi)):
                    continue
                nz = np.flatnonzero(stencil_row)
                row = len(b_L)
                rows.extend([row] * nz.size)
                cols.extend(index[n, nz])
                data.extend(stencil_row[nz])
                b_L.append(lo)
                b_R.append(hi)
                barrier.append(weight)
                info.append((n, kind, component))

    n_bnd = len(b_L)
    A = sparse.coo_matrix((data, (rows, cols)), shape=(n_bnd, layout.n_x)).tocsr()
    return (
        A,
        np.asarray(b_L, dtype=float),
        np.asarray(b_R, dtype=float),
        np.asarray(barrier, dtype=float),
        np.asarray(info, dtype=int).reshape(n_bnd, 3),
    )


def _assemble(problem, mesh, p, residual_points, weighted, running_rule, bound_points,
              bound_weights, mode, omega=None, tau=None) -> Nlp:
    layout = Layout(mesh, p, problem.n_y, problem.n_u)
    core = _Transcription(problem, layout, residual_points, weighted, running_rule)
    A, b_L, b_R, barrier, info = _bound_rows(problem, layout, bound_points, bound_weights)
    logger.info(
        '%s transcription of %s: n_x=%d n_c=%d n_bnd=%d', mode.value, problem.name,
        layout.n_x, core.n_c, A.shape[0],
    )
    return Nlp(
        n_x=layout.n_x,
        n_c=core.n_c,
        n_bnd=A.shape[0],
        objective=core.objective,
        gradient=core.gradient,
        equality=core.equality,
        jac=core.jac,
        hess_lag=core.hess_lag,
        A=A,
        b_L=b_L,
        b_R=b_R,
        row_weights=core.row_weights,
        barrier_weights=barrier,
        mode=mode,
        omega=omega,
        tau=tau,
        layout=layout,
        problem=core.problem,
        bound_rows=info,
    )


def build_dcm(problem: OcpProblem, mesh: Mesh, p: int, scheme: RefPointSet) -> Nlp:
    """
    Прямая коллокация: невязки динамики равны нулю в p точках схемы на каждом интервале,
    границы проверяются в тех же точках. Интегральная часть цели считается по весам схемы.
    """
    if scheme.size != p:
        raise ConfigError('scheme', f'{scheme.family.value} has {scheme.size} points, degree p={p} needs {p}')
    if scheme.weights is None:
        raise ConfigError('scheme', f'{scheme.family.value} points carry no quadrature weights')
    return _assemble(problem, mesh, p, scheme, False, scheme, scheme, None, Mode.DCM)


def build_qpm(problem: OcpProblem, mesh: Mesh, p: int, q: int, m: int, omega: float,
              quadrature: RefPointSet | None = None, sampling: RefPointSet | None = None) -> Nlp:
    """
    Квадратурный штрафной метод: равенства входят строками √α·f в q точках Гаусса-Лежандра
    на интервал и штрафуются решателем с весом 1/(2ω); границы выбираются в m+1 точках CGL.

    :param quadrature: опорное правило вместо Гаусса-Лежандра степени q
    :param sampling: точки выборки границ вместо CGL степени m
    """
    if q < 1:
        raise ConfigError('q', 'must be at least 1')
    if m < 1:
        raise ConfigError('m', 'must be at least 1')
    if omega is None or omega <= 0.0:
        raise ConfigError('omega', 'must be positive')
    quadrature = quadrature or ref_points(PointFamily.LG, q)
    sampling = sampling or ref_points(PointFamily.CGL, m)
    return _assemble(problem, mesh, p, quadrature, True, quadrature, sampling, None, Mode.QPM, omega=omega)


def build_pbf(problem: OcpProblem, mesh: Mesh, p: int, q: int | None, omega: float, tau: float) -> Nlp:
    """
    Штрафно-барьерная транскрипция: квадратичный штраф как в QPM и логарифмический барьер
    с весом τ на границах в тех же точках Гаусса-Лежандра, веса барьера равны весам квадратуры.
    """
    if omega is None or not 0.0 < omega < 1.0:
        raise ConfigError('omega', 'must lie in (0, 1)')
    if tau is None or tau <= 0.0:
        raise ConfigError('tau', 'must be positive')
    if tau > omega:
        raise ConfigError('tau', f'tau={tau!r} exceeds omega={omega!r}')
    q = q or 2 * p
    rule = ref_points(PointFamily.LG, q)
    alpha = 0.5 * mesh.lengths[:, None] * rule.weights[None, :]
    return _assemble(problem, mesh, p, rule, True, rule, rule, alpha, Mode.PBF, omega=omega, tau=tau)


def assemble_derivatives(nlp: Nlp, x, y_mult) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """
    Якобиан равенств и гессиан функции Лагранжа в точке.

    :raises AssemblyError: неконечный элемент; указываются матрица, строка и интервал
    """
    J = nlp.jac(x)
    H = nlp.hess_lag(x, y_mult)
    for name, matrix in (('J', J), ('H', H)):
        coo = matrix.tocoo()
        bad = np.flatnonzero(~np.isfinite(coo.data))
        if bad.size:
            row, col = int(coo.row[bad[0]]), int(coo.col[bad[0]])
            interval = int(nlp.layout.interval_of(col)) if nlp.layout is not None else -1
            raise AssemblyError(name, interval, row)
    return J, H


def write_sparsity_csv(nlp: Nlp, x, path) -> None:
    """Выгружает шаблоны J, H и A в CSV с колонками matrix,row,col,block."""
    J, H = assemble_derivatives(nlp, x, np.zeros(nlp.n_c))
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['matrix', 'row', 'col', 'block'])
        for name, matrix in (('J', J), ('H', H), ('A', nlp.A)):
            coo = matrix.tocoo()
            order = np.lexsort((coo.col, coo.row))
            blocks = nlp.layout.interval_of(coo.col) if nlp.layout is not None else np.zeros_like(coo.col)
            for i in order:
                writer.writerow([name, int(coo.row[i]), int(coo.col[i]), int(blocks[i])])
