import csv
import json
import math

from ._styled import _echo_header, _echo_section, _echo_usual

NOT_APPLICABLE = 'n.a.'
NOT_CONVERGED = 'n.c.'
STUDY_COLUMNS = ('N', 'h', 'delta', 'rho', 'gamma', 'iters', 'time_s')


def _fmt(value) -> str:
    if value is None:
        return '-'
    if isinstance(value, float):
        return f'{value:.6e}' if math.isfinite(value) else str(value)
    return str(value)


def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, str):
        return value
    return repr(value)


def write_table(path, columns, rows) -> None:
    """CSV с числами в кратчайшей точной записи repr."""
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column)) for column in columns])


class ReportRenderer:
    def render(self, result: dict, raw: bool = False) -> None:
        if raw:
            _echo_usual(json.dumps(result, indent=2))
            return

        _echo_header('TRAJECTORY OPTIMIZATION REPORT')

        run = result['run']
        _echo_usual('\nRUN:')
        _echo_usual(f"  • Problem: {run['problem']}")
        _echo_usual(f"  • Method: {run['method']} (p={run['p']}, N={run['N']})")
        for key in ('scheme', 'q', 'm', 'omega', 'tau'):
            if run.get(key) is not None:
                _echo_usual(f'  • {key}: {run[key]}')

        solver = result['solver']
        _echo_section('SOLVER')
        _echo_usual(f"  • Status: {solver['message']}")
        _echo_usual(f"  • Outer iterations: {solver['outer_iters']}")
        _echo_usual(f"  • Newton iterations: {solver['inner_iters']}")
        _echo_usual(f"  • KKT residual: {_fmt(solver['kkt_residual_inf'])}")
        _echo_usual(f"  • Objective: {_fmt(solver['final_objective'])}")
        _echo_usual(f"  • Undercuts initial guess: {solver['undercuts_initial_guess']}")

        measures = result['measures']
        _echo_section('MEASURES')
        _echo_usual(f"  {'delta':12} {_fmt(measures['delta'])}")
        _echo_usual(f"  {'rho':12} {_fmt(measures['rho'])}")
        _echo_usual(f"  {'gamma':12} {_fmt(measures['gamma'])}")
        _echo_usual(f"  {'gamma_bound':12} {_fmt(measures['gamma_bound'])}")
        if measures.get('delta_from_below'):
            _echo_usual('  (objective converges from below)')
        _echo_usual(f"\n  • Wall time: {measures['wall_time_s']:.3f} s")
        _echo_usual('=' * 70)

    def render_study(self, rows: list, orders: dict, raw: bool = False) -> None:
        if raw:
            _echo_usual(json.dumps({'levels': rows, 'orders': orders}, indent=2))
            return

        _echo_header('CONVERGENCE STUDY')
        _echo_section('LEVELS')
        _echo_usual(f"  {'N':>6} {'h':>13} {'delta':>13} {'rho':>13} {'gamma':>13} {'iters':>6}")
        for row in rows:
            _echo_usual(
                f"  {row['N']:>6} {_fmt(row['h']):>13} {_fmt(row['delta']):>13} "
                f"{_fmt(row['rho']):>13} {_fmt(row['gamma']):>13} {_fmt(row['iters']):>6}"
            )
        _echo_section('EMPIRICAL ORDERS')
        for key, value in orders.items():
            _echo_usual(f'  • {key}: {_fmt(value)}')
        _echo_usual('=' * 70)

    def render_bench(self, columns, rows: list) -> None:
        _echo_header('MALM BENCHMARK')
        _echo_usual('  ' + ' '.join(f'{column:>12}' for column in columns))
        for row in rows:
            _echo_usual('  ' + ' '.join(f'{_fmt(row.get(column)):>12}' for column in columns))
        _echo_usual('=' * 70)
