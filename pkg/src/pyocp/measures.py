"""
Меры точности решения: зазор цели δ, интегральная невязка ρ, нарушение границ γ,
а также эмпирические порядки сходимости по последовательности сеток.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, MissingReference
from .fem import PointFamily, Trajectory, ref_points
from .ocp import OcpProblem, ReferenceSolution

NOISE_FLOOR = 1e-12


@dataclass
class MeasureReport:
    delta: float | None
    rho: float
    gamma: float
    gamma_bound: float | None = None
    orders: dict = field(default_factory=dict)
    iterations: int = 0
    wall_time_s: float = 0.0

    @property
    def delta_from_below(self) -> bool:
        return self.delta is not None and self.delta < 0.0

    def to_dict(self) -> dict:
        return {
            'delta': self.delta,
            'rho': self.rho,
            'gamma': self.gamma,
            'gamma_bound': self.gamma_bound,
            'orders': {key: self.orders.get(key) for key in ('rho', 'delta', 'gamma')},
            'iterations': self.iterations,
            'wall_time_s': self.wall_time_s,
            'delta_from_below': self.delta_from_below,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compute_rho(problem: OcpProblem, traj: Trajectory, quad_degree: int | None = None) -> float:
    """√(Q[‖f(y', y, u, t)‖²] + ‖b(y(0), y(T))‖²) с квадратурой Гаусса-Лежандра на каждом интервале."""
    rule = ref_points(PointFamily.LG, quad_degree or 2 * traj.p + 2)
    y, ydot, u = traj.on_reference(rule.points)
    times = traj.mesh.to_global(rule.points).ravel()
    f = problem.residual(
        ydot.reshape(-1, problem.n_y), y.reshape(-1, problem.n_y), u.reshape(-1, problem.n_u), times
    )
    weights = (0.5 * traj.mesh.lengths[:, None] * rule.weights[None, :]).ravel()
    b = problem.boundary_values(traj.y_nodes[0, 0], traj.y_final)
    return float(np.sqrt(np.dot(weights, np.sum(f ** 2, axis=1)) + np.dot(b, b)))


def compute_gamma(problem: OcpProblem, traj: Trajectory, dense_factor: int = 10) -> float:
    """Наибольшее нарушение границ на плотной сетке CGL из dense_factor·(p+1) точек на интервал."""
    points = ref_points(PointFamily.CGL, dense_factor * (traj.p + 1) - 1).points
    y, _, u = traj.on_reference(points)
    times = traj.mesh.to_global(points).ravel()
    y = y.reshape(-1, problem.n_y)
    u = u.reshape(-1, problem.n_u)
    y_lower, y_upper, u_lower, u_upper = problem.bounds.sample(times)
    with np.errstate(invalid='ignore'):
        violations = [y_lower - y, y - y_upper, u_lower - u, u - u_upper]
    worst = max((float(np.nanmax(v, initial=0.0)) for v in violations), default=0.0)
    return max(worst, 0.0)


def gamma_bound(p: int, m: int, c_box: float) -> float:
    """Оценка выброса интерполянта (π²·c_box/8)·√p·(p/m)² при выборке границ в m+1 точках."""
    if m % p != 0:
        raise ConfigError('m', f'm={m} must be a multiple of p={p}')
    return float(np.pi ** 2 * c_box / 8.0 * np.sqrt(p) * (p / m) ** 2)


def compute_delta(problem: OcpProblem, traj: Trajectory, reference: ReferenceSolution | None) -> float:
    """Разность цели на траектории и оптимального значения; отрицательна при сходимости снизу."""
    if reference is None or reference.objective_star is None:
        raise MissingReference(f'{problem.name}: no reference objective')
    return problem.objective(traj) - reference.objective_star


def empirical_order(pairs) -> float:
    """
    Наклон прямой наименьших квадратов log(value) от log(h).

    Значения не больше 1e-12 считаются достигшими точности решателя и отбрасываются.
    """
    usable = [(h, v) for h, v in pairs if v is not None and np.isfinite(v) and abs(v) > NOISE_FLOOR]
    if len(usable) < 2:
        raise ValueError(f'need at least two usable (h, value) pairs, got {len(usable)}')
    h, v = np.array(usable, dtype=float).T
    slope, _ = np.polyfit(np.log(h), np.log(np.abs(v)), 1)
    return float(slope)


def penalty_gap(delta: float, rho: float, omega: float) -> float:
    """Измеренный зазор χ = max(0, δ + ρ²/(2ω)) штрафной цели относительно оптимума."""
    return max(0.0, float(delta) + float(rho) ** 2 / (2.0 * omega))


def rho_bound(objective_star: float, c_obj: float, chi: float, omega: float) -> float:
    """Оценка невязки штрафного решения √2·√(J* - C_obj + χ)·√ω; C_obj ограничивает цель снизу."""
    if objective_star - c_obj + chi < 0.0:
        raise ValueError(f'objective lower bound {c_obj!r} exceeds the optimum {objective_star!r}')
    return float(np.sqrt(2.0 * (objective_star - c_obj + chi) * omega))


def measure(problem: OcpProblem, traj: Trajectory, reference: ReferenceSolution | None = None,
            m: int | None = None, c_box: float | None = None) -> MeasureReport:
    """Все меры для одной траектории; δ отсутствует, если нет эталона."""
    delta = compute_delta(problem, traj, reference) if reference is not None else None
    bound = None
    if m is not None and c_box is not None and m % traj.p == 0:
        bound = gamma_bound(traj.p, m, c_box)
    return MeasureReport(
        delta=delta,
        rho=compute_rho(problem, traj),
        gamma=compute_gamma(problem, traj),
        gamma_bound=bound,
    )


def bound_diameter(problem: OcpProblem) -> float | None:
    """Наибольшая ширина конечных границ на горизонте; None, если конечных пар нет."""
    times = np.linspace(0.0, problem.horizon, 33)
    y_lower, y_upper, u_lower, u_upper = problem.bounds.sample(times)
    widths = np.concatenate([(y_upper - y_lower).ravel(), (u_upper - u_lower).ravel()])
    widths = widths[np.isfinite(widths)]
    return float(np.max(widths)) if widths.size else None
