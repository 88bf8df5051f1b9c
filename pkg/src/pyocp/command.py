import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import ipm, malm
from ._styled import _echo_error, _echo_success, _echo_warning, _echo_usual
from .config import LOG_LEVELS, SOLVER_KEYS, Config, RunConfig
from .corpus import corpus_get
from .exceptions import ConfigError, ConfigNotFound, NotApplicable, PyOcpError, SolverError
from .fem import PointFamily, Trajectory, make_uniform_mesh, ref_points, write_csv
from .measures import bound_diameter, empirical_order, measure
from .report import NOT_APPLICABLE, NOT_CONVERGED, STUDY_COLUMNS, ReportRenderer, write_table
from .transcription import build_dcm, build_pbf, build_qpm, write_sparsity_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2

SCHEMES = {
    'ee': (PointFamily.EE, lambda p: 1),
    'ie': (PointFamily.IE, lambda p: 1),
    'tz': (PointFamily.TZ, lambda p: 2),
    'lg': (PointFamily.LG, lambda p: p),
    'lgr': (PointFamily.LGR, lambda p: p),
}


def solver_settings() -> dict:
    """Параметры решателя из файла конфигурации, если он существует."""
    try:
        return Config().get_solver_settings()
    except ConfigNotFound:
        return {}


def build_nlp(problem, mesh, cfg: RunConfig):
    if cfg.method == 'dcm':
        family, degree = SCHEMES[cfg.scheme]
        return build_dcm(problem, mesh, cfg.p, ref_points(family, degree(cfg.p)))
    if cfg.method == 'qpm':
        return build_qpm(problem, mesh, cfg.p, cfg.q, cfg.m, cfg.omega)
    return build_pbf(problem, mesh, cfg.p, cfg.q, cfg.omega, cfg.tau)


def initial_guess(problem, reference, mesh, cfg: RunConfig) -> Trajectory:
    if cfg.init == 'reference':
        if reference is None:
            raise ConfigError('--init', f'{problem.name} has no reference solution')
        return reference.trajectory(mesh, cfg.p)
    if cfg.init == 'zero':
        return Trajectory.zeros(mesh, cfg.p, problem.n_y, problem.n_u)
    return problem.linear_guess(mesh, cfg.p)


def ipm_config(cfg: RunConfig) -> ipm.IpmConfig:
    settings = {key: value for key, value in cfg.solver.items() if key != 'tol'}
    return ipm.IpmConfig(tol=cfg.tolerance, **settings)


class SolveOutcome:
    """
    Результат одного запуска: траектория, отчёт решателя и меры точности.
    """

    def __init__(self, cfg: RunConfig, nlp, report: ipm.SolveReport, failure: str | None = None):
        problem, reference = corpus_get(cfg.problem)
        self.cfg = cfg
        self.nlp = nlp
        self.report = report
        self.failure = failure
        self.trajectory = nlp.unpack(report.state.x)
        self.measures = measure(
            problem, self.trajectory, reference,
            m=cfg.m if cfg.method == 'qpm' else None, c_box=bound_diameter(problem),
        )
        self.measures.iterations = report.inner_iters
        self.measures.wall_time_s = report.wall_time_s

    @property
    def converged(self) -> bool:
        return self.failure is None and self.report.converged

    def to_dict(self) -> dict:
        cfg = self.cfg
        return {
            'run': {
                'problem': cfg.problem, 'method': cfg.method, 'p': cfg.p, 'N': cfg.N,
                'scheme': cfg.scheme if cfg.method == 'dcm' else None,
                'q': cfg.q, 'm': cfg.m, 'omega': cfg.omega, 'tau': cfg.tau,
            },
            'solver': {
                'converged': self.converged,
                'message': self.failure or self.report.message,
                'outer_iters': self.report.outer_iters,
                'inner_iters': self.report.inner_iters,
                'kkt_residual_inf': self.report.kkt_residual_inf,
                'final_objective': self.report.final_objective,
                'undercuts_initial_guess': self.report.undercuts_initial_guess,
            },
            'measures': self.measures.to_dict(),
        }


def run_once(cfg: RunConfig) -> SolveOutcome:
    """
    Строит NLP, решает её и считает меры.

    :raises PyOcpError: ошибки конфигурации и задачи; отказ решателя с частичным
        отчётом возвращается как SolveOutcome с заполненным failure
    """
    problem, reference = corpus_get(cfg.problem)
    mesh = make_uniform_mesh(problem.horizon, cfg.N)
    nlp = build_nlp(problem, mesh, cfg)
    x0 = nlp.initial_point(initial_guess(problem, reference, mesh, cfg))
    try:
        report = ipm.solve(nlp, x0, ipm_config(cfg))
    except SolverError as err:
        if err.report is None:
            raise
        return SolveOutcome(cfg, nlp, err.report, failure=str(err))
    return SolveOutcome(cfg, nlp, report)


def failure_json(message: str) -> str:
    """measures.json для отказа решателя до первой итерации: меры пусты, report = null."""
    return json.dumps({
        'delta': None,
        'rho': None,
        'gamma': None,
        'gamma_bound': None,
        'iterations': 0,
        'wall_time_s': 0.0,
        'failure': message,
        'report': None,
    }, indent=2)


class SolveCommand:
    """
    Команда решения одной задачи из набора выбранным методом транскрипции.

    Записывает траекторию в solution.csv и меры точности в measures.json,
    с флагом trace также протокол итераций и шаблоны разреженности.
    """

    def __init__(self, run_config: RunConfig, raw: bool = False):
        """
        :param run_config: параметры задачи, метода и решателя
        :param raw: вывести отчёт в формате JSON
        """
        self.cfg = run_config
        self.raw = raw
        self.renderer = ReportRenderer()
        self.outcome = None

    def run(self) -> int:
        """
        Возвращает код выхода: 0 при сходимости, 1 при ошибке конфигурации, 2 при отказе решателя.
        """
        out_dir = Path(self.cfg.out_dir)
        try:
            self.cfg.validate()
            self.outcome = run_once(self.cfg)
        except SolverError as e:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / 'measures.json').write_text(failure_json(str(e)), encoding='utf-8')
            _echo_error(f'ОШИБКА решателя: {e}')
            return EXIT_SOLVER
        except PyOcpError as e:
            _echo_error(f'ОШИБКА: {e}')
            return EXIT_CONFIG

        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(self.outcome.trajectory, out_dir / 'solution.csv')
        (out_dir / 'measures.json').write_text(self.outcome.measures.to_json(), encoding='utf-8')
        if self.cfg.trace:
            ipm.write_trace(self.outcome.report, out_dir / 'trace.csv')
            write_sparsity_csv(self.outcome.nlp, self.outcome.report.state.x, out_dir / 'sparsity.csv')

        self.renderer.render(self.outcome.to_dict(), self.raw)
        if not self.outcome.converged:
            _echo_error(f'Решатель не сошёлся: {self.outcome.failure or self.outcome.report.message}')
            return EXIT_SOLVER
        _echo_success(f'Решение записано в {out_dir}')
        return EXIT_OK


class StudyCommand:
    """
    Команда исследования сходимости: серия решений на сгущающихся сетках
    и эмпирические порядки мер δ, ρ, γ.
    """

    def __init__(self, run_config: RunConfig, levels: list, parallel: bool = False, raw: bool = False):
        """
        :param run_config: общие параметры уровней, N берётся из levels
        :param levels: числа интервалов сетки, не меньше трёх
        :param parallel: решать уровни одновременно
        """
        self.cfg = run_config
        self.levels = sorted(levels)
        self.parallel = parallel
        self.raw = raw
        self.renderer = ReportRenderer()
        self.rows = []
        self.orders = {}

    def _level(self, N: int) -> SolveOutcome:
        return run_once(replace(self.cfg, N=N))

    def run(self) -> int:
        if len(set(self.levels)) < 3:
            _echo_error('ОШИБКА: --N: нужно не меньше трёх уровней сетки')
            return EXIT_CONFIG
        try:
            self.cfg.validate()
            corpus_get(self.cfg.problem)
        except PyOcpError as e:
            _echo_error(f'ОШИБКА: {e}')
            return EXIT_CONFIG

        status = EXIT_OK
        outcomes = []
        try:
            if self.parallel:
                with ThreadPoolExecutor() as pool:
                    outcomes = list(pool.map(self._level, self.levels))
            else:
                for N in self.levels:
                    outcomes.append(self._level(N))
        except PyOcpError as e:
            _echo_error(f'ОШИБКА: {e}')
            status = EXIT_SOLVER

        for outcome in outcomes:
            if not outcome.converged:
                status = EXIT_SOLVER
            measures = outcome.measures
            self.rows.append({
                'N': outcome.cfg.N,
                'h': outcome.trajectory.mesh.h,
                'delta': measures.delta,
                'rho': measures.rho,
                'gamma': measures.gamma,
                'iters': measures.iterations,
                'time_s': measures.wall_time_s,
            })

        for key in ('delta', 'rho', 'gamma'):
            try:
                self.orders[key] = empirical_order(
                    [(row['h'], abs(row[key])) for row in self.rows if row[key] is not None]
                )
            except ValueError:
                self.orders[key] = None

        out_dir = Path(self.cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_table(out_dir / 'study.csv', STUDY_COLUMNS, self.rows)
        (out_dir / 'study.json').write_text(
            json.dumps({'levels': self.rows, 'orders': self.orders}, indent=2), encoding='utf-8'
        )
        self.renderer.render_study(self.rows, self.orders, self.raw)
        if status != EXIT_OK:
            _echo_warning('Не все уровни сетки решены, таблица неполная')
        return status


CIRCLE_COLUMNS = ('pval', 'eps', 'method', 'e_A', 'e_B', 'iters')
OCP_DISC_COLUMNS = ('pval', 'N', 'h', 'method', 'delta_J', 'r', 'iters')


class MalmBenchCommand:
    """
    Команда сравнения MALM, ALM и прямого штрафного метода на сетке параметров.

    Для каждой пары (ϖ, ε) или (ϖ, N) пишется строка на метод; неприменимые
    методы помечаются n.a., не сошедшиеся в бюджете итераций n.c.
    """

    def __init__(self, instance: str, pvals: list, eps: list, levels: list, max_inner: int,
                 out: str, trace: bool = False):
        """
        :param instance: circle или ocp_disc
        :param pvals: значения целевого штрафа ϖ
        :param eps: значения ε для circle
        :param levels: числа интервалов для ocp_disc
        :param max_inner: бюджет внутренних итераций, после которого ставится n.c.
        :param out: путь выходного CSV
        :param trace: писать протоколы внешних итераций MALM рядом с CSV
        """
        self.instance = instance
        self.pvals = list(pvals)
        self.params = list(eps) if instance == 'circle' else list(levels)
        self.max_inner = max_inner
        self.out = Path(out)
        self.trace = trace
        self.renderer = ReportRenderer()
        self.rows = []

    @property
    def columns(self):
        return CIRCLE_COLUMNS if self.instance == 'circle' else OCP_DISC_COLUMNS

    def _instance(self, pval, param):
        if self.instance == 'circle':
            return malm.circle_instance(param, pval)
        return malm.ocp_disc_instance(int(param), pval)

    def _measure(self, inst, x) -> dict:
        if self.instance == 'circle':
            return {
                'e_A': float(np.linalg.norm(x - malm.X_A)),
                'e_B': float(np.linalg.norm(x - malm.X_B)),
            }
        c = np.asarray(inst.c(x))
        return {
            'delta_J': float(inst.f(x)) - malm.ocp_disc_reference_objective(),
            'r': float(c @ c),
        }

    def _not_converged(self, label: str) -> dict:
        keys = ('e_A', 'e_B') if self.instance == 'circle' else ('delta_J', 'r')
        return {key: label for key in keys} | {'iters': label}

    def _row(self, pval, param, method) -> dict:
        if self.instance == 'circle':
            row = {'pval': pval, 'eps': param, 'method': method}
        else:
            row = {'pval': pval, 'N': int(param), 'h': malm.OCP_DISC_HORIZON / int(param), 'method': method}
        inst = self._instance(pval, param)
        config = malm.MalmConfig(max_total_inner=self.max_inner)
        try:
            if method == 'pm':
                x, report = malm.pm_solve(inst, config)
            else:
                solver = malm.alm_solve if method == 'alm' else malm.malm_solve
                x, _, report = solver(inst, config)
                if self.trace:
                    malm.write_trace(report, self.out.with_name(f'{self.out.stem}_{method}_{pval!r}_{param!r}.csv'))
        except NotApplicable:
            return row | self._not_converged(NOT_APPLICABLE)
        except SolverError as e:
            _echo_warning(f'{method} ϖ={pval!r} {param!r}: {e}')
            return row | self._not_converged(NOT_CONVERGED)
        if report.inner_iters > self.max_inner:
            return row | self._not_converged(NOT_CONVERGED)
        return row | self._measure(inst, x) | {'iters': report.inner_iters}

    def run(self) -> int:
        if self.instance not in ('circle', 'ocp_disc'):
            _echo_error(f'ОШИБКА: --instance: неизвестный экземпляр {self.instance!r}')
            return EXIT_CONFIG
        if not self.pvals or not self.params:
            flag = '--eps' if self.instance == 'circle' else '--N'
            _echo_error(f'ОШИБКА: нужны значения --pval и {flag}')
            return EXIT_CONFIG
        if any(p < 0.0 for p in self.pvals):
            _echo_error('ОШИБКА: --pval: значения должны быть неотрицательными')
            return EXIT_CONFIG

        for pval in self.pvals:
            for param in self.params:
                methods = ('alm', 'pm') if pval == 0.0 else ('malm', 'pm')
                for method in methods:
                    self.rows.append(self._row(pval, param, method))

        self.out.parent.mkdir(parents=True, exist_ok=True)
        write_table(self.out, self.columns, self.rows)
        self.renderer.render_bench(self.columns, self.rows)
        _echo_success(f'Таблица записана в {self.out}')
        return EXIT_OK


class ConfigCommand:
    """
    Команда для создания и обновления файла конфигурации с параметрами решателя.
    """

    def __init__(self) -> None:
        self.config = Config()

    def run(self) -> int:
        if self.config.config_exist():
            confirm = click.confirm(
                click.style('Файл конфигурации уже создан. Он будет перезаписан. Вы уверены?')
            )
            if not confirm:
                return EXIT_OK

        defaults = ipm.IpmConfig()
        solver = {
            key: click.prompt(f'Введите {key}', default=getattr(defaults, key), type=cast)
            for key, cast in SOLVER_KEYS.items()
        }
        level = click.prompt(
            'Уровень журнала', default='WARNING', type=click.Choice(LOG_LEVELS, case_sensitive=False)
        )
        self.config.save(solver, level)
        _echo_success(f'Конфигурация сохранена в {self.config.file}')
        _echo_usual(', '.join(f'{key}={value!r}' for key, value in solver.items()))
        return EXIT_OK
