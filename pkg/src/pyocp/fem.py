"""
Сетки, семейства опорных точек, квадратуры и пространство кусочно-полиномиальных
траекторий: непрерывные состояния степени p и разрывные управления степени p-1.
"""
import csv
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .exceptions import DimensionMismatch, MeshMismatch, OutsideHorizon, UnsupportedDegree

logger = logging.getLogger(__name__)

MAX_LGR_DEGREE = 10


class PointFamily(str, Enum):
    EE = 'EE'
    IE = 'IE'
    TZ = 'TZ'
    LG = 'LG'
    LGR = 'LGR'
    CGL = 'CGL'


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Разбиение горизонта [0, T] на N интервалов.

    :param nodes: узлы сетки, строго возрастают, nodes[0] = 0
    """
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DimensionMismatch('mesh needs at least two nodes')
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0.0):
            raise DimensionMismatch('mesh nodes must start at 0 and increase strictly')
        nodes.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        return float(self.lengths.max())

    @property
    def theta(self) -> float:
        lengths = self.lengths
        return float(lengths.min() / lengths.max())

    def same_as(self, other: 'Mesh') -> bool:
        return np.array_equal(self.nodes, other.nodes)

    def locate(self, t, side: str = 'right') -> np.ndarray:
        """
        Индексы интервалов для моментов t.

        side='right' относит узел t_i к интервалу [t_i, t_{i+1}) (правый предел),
        side='left' к интервалу (t_{i-1}, t_i]. Момент T всегда попадает в последний интервал.
        """
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.nodes, t, side=side) - 1
        return np.clip(idx, 0, self.N - 1)

    def to_global(self, xi) -> np.ndarray:
        """Отображает опорные точки xi из [-1, 1] на все интервалы, форма (N, len(xi))."""
        xi = np.asarray(xi, dtype=float)
        return self.nodes[:-1, None] + 0.5 * (xi[None, :] + 1.0) * self.lengths[:, None]


def make_uniform_mesh(T: float, N: int) -> Mesh:
    if N < 1:
        raise DimensionMismatch(f'interval count must be positive, got {N}')
    nodes = np.arange(N + 1) * float(T) / N
    nodes[-1] = T
    return Mesh(nodes)


@dataclass(frozen=True, eq=False)
class RefPointSet:
    family: PointFamily
    degree: int
    points: np.ndarray
    weights: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.points.size


def _lgr_points(n: int) -> tuple[np.ndarray, np.ndarray]:
    # корни P_{n-1} + P_n, левый конец включён
    coef = np.zeros(n + 1)
    coef[n - 1] = 1.0
    coef[n] = 1.0
    x = np.sort(legendre.legroots(coef).real)
    dcoef = legendre.legder(coef)
    x[1:] -= legendre.legval(x[1:], coef) / legendre.legval(x[1:], dcoef)
    x[0] = -1.0

    basis = np.zeros(n)
    basis[n - 1] = 1.0
    w = np.empty(n)
    w[0] = 2.0 / n ** 2
    w[1:] = (1.0 - x[1:]) / (n ** 2 * legendre.legval(x[1:], basis) ** 2)
    return x, w


@lru_cache(maxsize=None)
def _ref_points(family: PointFamily, degree: int) -> RefPointSet:
    if degree < 1:
        raise UnsupportedDegree(family.value, degree)

    if family is PointFamily.EE:
        if degree != 1:
            raise UnsupportedDegree(family.value, degree)
        points, weights = np.array([-1.0]), np.array([2.0])
    elif family is PointFamily.IE:
        if degree != 1:
            raise UnsupportedDegree(family.value, degree)
        points, weights = np.array([1.0]), np.array([2.0])
    elif family is PointFamily.TZ:
        if degree != 2:
            raise UnsupportedDegree(family.value, degree)
        points, weights = np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    elif family is PointFamily.LG:
        points, weights = legendre.leggauss(degree)
    elif family is PointFamily.LGR:
        if degree > MAX_LGR_DEGREE:
            raise UnsupportedDegree(family.value, degree)
        points, weights = _lgr_points(degree)
    else:
        points = -np.cos(np.arange(degree + 1) * np.pi / degree)
        weights = None

    points.setflags(write=False)
    if weights is not None:
        weights.setflags(write=False)
    return RefPointSet(family, degree, points, weights)


def ref_points(family, degree: int) -> RefPointSet:
    """
    Опорные точки семейства на [-1, 1].

    EE и IE допускают только степень 1, TZ только степень 2, LGR до степени 10.
    CGL степени m даёт m+1 точку -cos(k*pi/m).
    """
    return _ref_points(PointFamily(family), int(degree))


def lagrange_matrices(xsrc, xdst) -> tuple[np.ndarray, np.ndarray]:
    """
    Значения и производные лагранжева базиса узлов xsrc в точках xdst
    (барицентрическая формула). Обе матрицы формы (len(xdst), len(xsrc)).
    """
    xsrc = np.asarray(xsrc, dtype=float)
    xdst = np.atleast_1d(np.asarray(xdst, dtype=float))

    D = np.add.outer(-xsrc, xsrc)
    np.fill_diagonal(D, 1.0)
    w = 1.0 / np.prod(D, axis=0)
    D = np.divide.outer(w, w) / D
    np.fill_diagonal(D, np.diag(D) - np.sum(D, axis=0))

    I = np.add.outer(-xsrc, xdst)
    idx = np.argwhere(np.isclose(I, 0.0, rtol=0.0, atol=1e-14))
    I[idx[:, 0], idx[:, 1]] = 1.0
    I = 1.0 / I
    I *= w[:, None]
    I[:, idx[:, 1]] = 0.0
    I[idx[:, 0], idx[:, 1]] = 1.0
    I = (1.0 / np.sum(I, axis=0)) * I

    return I.T, (D @ I).T


def state_support(p: int) -> np.ndarray:
    """Опорные точки состояния: p точек LGR и правый конец."""
    return np.append(ref_points(PointFamily.LGR, p).points, 1.0)


def control_support(p: int) -> np.ndarray:
    return np.asarray(ref_points(PointFamily.LGR, p).points)


@lru_cache(maxsize=256)
def _local_basis(p: int, xi: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Ly, dLy = lagrange_matrices(state_support(p), xi)
    Lu, _ = lagrange_matrices(control_support(p), xi)
    for matrix in (Ly, dLy, Lu):
        matrix.setflags(write=False)
    return Ly, dLy, Lu


def local_basis(p: int, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Базисные матрицы на опорном интервале: Ly, dLy формы (K, p+1) и Lu формы (K, p).
    Производная dLy берётся по опорной координате, без множителя 2/h.
    """
    return _local_basis(int(p), tuple(float(v) for v in np.atleast_1d(xi)))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Составная квадратура: по q точек на интервал, веса масштабированы на |I_i|/2.
    """
    mesh: Mesh
    ref: RefPointSet
    points: np.ndarray
    weights: np.ndarray
    interval: np.ndarray

    @property
    def q(self) -> int:
        return self.ref.size

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))


def quadrature_rule(mesh: Mesh, degree_q: int, family=PointFamily.LG) -> QuadratureRule:
    ref = ref_points(family, degree_q)
    if ref.weights is None:
        raise UnsupportedDegree(PointFamily(family).value, degree_q)
    points = mesh.to_global(ref.points)
    weights = 0.5 * mesh.lengths[:, None] * ref.weights[None, :]
    interval = np.repeat(np.arange(mesh.N), ref.size)
    return QuadratureRule(mesh, ref, points.ravel(), weights.ravel(), interval)


def _as_columns(values, count: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return values.reshape(count, -1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Элемент пространства кусочных полиномов на сетке.

    :param mesh: сетка
    :param p: степень состояния
    :param y_nodes: значения состояния в p точках LGR каждого интервала, форма (N, p, n_y);
        первая точка совпадает с левым узлом интервала, поэтому непрерывность обеспечена хранением
    :param y_final: значение состояния в момент T
    :param u_nodes: значения управления в p точках LGR каждого интервала, форма (N, p, n_u)
    """
    mesh: Mesh
    p: int
    y_nodes: np.ndarray
    y_final: np.ndarray
    u_nodes: np.ndarray

    def __post_init__(self):
        N, p = self.mesh.N, self.p
        y_nodes = np.asarray(self.y_nodes, dtype=float)
        u_nodes = np.asarray(self.u_nodes, dtype=float)
        y_final = np.asarray(self.y_final, dtype=float).reshape(-1)
        if y_nodes.shape[:2] != (N, p) or u_nodes.shape[:2] != (N, p):
            raise DimensionMismatch(
                f'nodal arrays must start with shape ({N}, {p}), '
                f'got {y_nodes.shape} and {u_nodes.shape}'
            )
        if y_final.size != y_nodes.shape[2]:
            raise DimensionMismatch('final state has the wrong size')
        object.__setattr__(self, 'y_nodes', y_nodes)
        object.__setattr__(self, 'u_nodes', u_nodes)
        object.__setattr__(self, 'y_final', y_final)

    @classmethod
    def zeros(cls, mesh: Mesh, p: int, n_y: int, n_u: int) -> 'Trajectory':
        return cls(mesh, p, np.zeros((mesh.N, p, n_y)), np.zeros(n_y), np.zeros((mesh.N, p, n_u)))

    @property
    def n_y(self) -> int:
        return self.y_nodes.shape[2]

    @property
    def n_u(self) -> int:
        return self.u_nodes.shape[2]

    def y_support(self) -> np.ndarray:
        right = np.concatenate([self.y_nodes[1:, 0, :], self.y_final[None, :]], axis=0)
        return np.concatenate([self.y_nodes, right[:, None, :]], axis=1)

    def on_reference(self, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Значения y, y' и u в опорных точках xi на каждом интервале по его собственному полиному
        (в концах интервала это односторонние пределы). Формы (N, K, n).
        """
        Ly, dLy, Lu = local_basis(self.p, xi)
        support = self.y_support()
        scale = 2.0 / self.mesh.lengths
        y = np.einsum('kj,nja->nka', Ly, support)
        ydot = np.einsum('kj,nja->nka', dLy, support) * scale[:, None, None]
        u = np.einsum('kj,nja->nka', Lu, self.u_nodes)
        return y, ydot, u

    def evaluate(self, t, side: str = 'right') -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Значения y, y' и u в моментах t.

        Для скаляра возвращаются векторы, для массива моментов массивы формы (K, n).
        """
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        T = self.mesh.T
        outside = (t < 0.0) | (t > T)
        if np.any(outside):
            raise OutsideHorizon(float(t[outside][0]), T)

        idx = self.mesh.locate(t, side=side)
        lengths = self.mesh.lengths[idx]
        xi = np.clip(2.0 * (t - self.mesh.nodes[idx]) / lengths - 1.0, -1.0, 1.0)

        Ly, dLy = lagrange_matrices(state_support(self.p), xi)
        Lu, _ = lagrange_matrices(control_support(self.p), xi)
        support = self.y_support()[idx]
        y = np.einsum('kj,kja->ka', Ly, support)
        ydot = np.einsum('kj,kja->ka', dLy, support) * (2.0 / lengths)[:, None]
        u = np.einsum('kj,kja->ka', Lu, self.u_nodes[idx])
        if scalar:
            return y[0], ydot[0], u[0]
        return y, ydot, u

    def __sub__(self, other: 'Trajectory') -> 'Trajectory':
        _check_compatible(self, other)
        return Trajectory(
            self.mesh,
            self.p,
            self.y_nodes - other.y_nodes,
            self.y_final - other.y_final,
            self.u_nodes - other.u_nodes,
        )


def _check_compatible(a: Trajectory, b: Trajectory) -> None:
    if not a.mesh.same_as(b.mesh) or a.p != b.p:
        raise MeshMismatch('trajectories live on different meshes or degrees')
    if a.n_y != b.n_y or a.n_u != b.n_u:
        raise MeshMismatch('trajectories have different dimensions')


def interpolate(y_fn, u_fn, mesh: Mesh, p: int) -> Trajectory:
    """
    Интерполянт функций y(t), u(t) в пространстве траекторий.

    Функции векторизованы по времени. Значения управления в левом узле интервала берутся
    как u(t_i), поэтому разрывные управления должны быть непрерывны справа.
    """
    times = mesh.to_global(control_support(p))
    count = times.size
    y_nodes = _as_columns(y_fn(times.ravel()), count).reshape(mesh.N, p, -1)
    u_nodes = _as_columns(u_fn(times.ravel()), count).reshape(mesh.N, p, -1)
    y_final = _as_columns(y_fn(np.array([mesh.T])), 1)[0]
    return Trajectory(mesh, p, y_nodes, y_final, u_nodes)


def x_norm(a: Trajectory, b: Trajectory) -> float:
    """Норма разности: L2-норма производной состояния плюс sup-норма состояния и управления."""
    diff = a - b
    gauss = ref_points(PointFamily.LG, 2 * diff.p)
    _, ydot, _ = diff.on_reference(gauss.points)
    weights = 0.5 * diff.mesh.lengths[:, None] * gauss.weights[None, :]
    l2 = np.sqrt(np.sum(weights * np.sum(ydot ** 2, axis=2)))

    dense = ref_points(PointFamily.CGL, 4 * diff.p)
    y, _, u = diff.on_reference(dense.points)
    sup = max(np.max(np.abs(y), initial=0.0), np.max(np.abs(u), initial=0.0))
    return float(l2 + sup)


def write_csv(traj: Trajectory, path, per_interval: int = 10) -> None:
    """
    Выгружает траекторию в CSV с заголовком t,y1..,u1..

    Во внутренних узлах сетки строка повторяется: сначала левый предел, затем правый.
    """
    mesh = traj.mesh
    xi = -1.0 + 2.0 * np.arange(per_interval) / per_interval
    y, _, u = traj.on_reference(xi)
    y_end, _, u_end = traj.on_reference([1.0])
    times = mesh.to_global(xi)

    header = ['t'] + [f'y{j + 1}' for j in range(traj.n_y)] + [f'u{j + 1}' for j in range(traj.n_u)]
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(mesh.N):
            if i > 0:
                writer.writerow(_csv_row(mesh.nodes[i], y_end[i - 1, 0], u_end[i - 1, 0]))
            for k in range(per_interval):
                writer.writerow(_csv_row(times[i, k], y[i, k], u[i, k]))
        writer.writerow(_csv_row(mesh.T, y_end[-1, 0], u_end[-1, 0]))


def _csv_row(t, y, u) -> list:
    return [repr(float(t))] + [repr(float(v)) for v in y] + [repr(float(v)) for v in u]
