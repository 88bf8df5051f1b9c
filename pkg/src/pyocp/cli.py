import logging
import sys

import click

from .command import ConfigCommand, MalmBenchCommand, SolveCommand, StudyCommand, solver_settings
from .config import Config, RunConfig
from .corpus import available_problems
from .exceptions import ConfigNotFound

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'


def _log_level(verbose: int) -> str:
    if verbose >= 2:
        return 'DEBUG'
    if verbose == 1:
        return 'INFO'
    try:
        return Config().get_log_level()
    except ConfigNotFound:
        return 'WARNING'


@click.group()
@click.option('--verbose', '-v', count=True, help='-v для INFO, -vv для DEBUG.')
def cli(verbose):
    logging.basicConfig(level=_log_level(verbose), format=LOG_FORMAT)


def run_options(func):
    options = [
        click.option('--problem', '-P', required=True, type=click.Choice(available_problems())),
        click.option('--method', '-M', required=True, type=click.Choice(['dcm', 'qpm', 'pbf'])),
        click.option('--scheme', default='lgr', type=click.Choice(['ee', 'ie', 'tz', 'lg', 'lgr'])),
        click.option('--p', 'p', default=4, type=int),
        click.option('--q', 'q', default=None, type=int),
        click.option('--m', 'm', default=None, type=int),
        click.option('--omega', default=None, type=float),
        click.option('--tau', default=None, type=float),
        click.option('--tol', default=None, type=float),
        click.option('--init', default='linear-boundary', type=click.Choice(['reference', 'linear-boundary', 'zero'])),
        click.option('--out-dir', '-o', default='.', type=click.Path(file_okay=False)),
        click.option('--trace', is_flag=True, default=False),
        click.option('--seed', default=0, type=int),
        click.option('--raw', '-r', is_flag=True, default=False, type=bool),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_config(N, **kwargs) -> RunConfig:
    kwargs.pop('raw')
    return RunConfig(N=N, solver=solver_settings(), **kwargs)


@cli.command()
def config():
    """
    Создаёт или обновляет файл конфигурации с параметрами решателя.
    """
    command = ConfigCommand()
    sys.exit(command.run())


@cli.command()
@run_options
@click.option('--N', 'N', default=16, type=int)
def solve(N, **kwargs):
    """
    Решает задачу из набора и записывает solution.csv и measures.json.
    """
    command = SolveCommand(_run_config(N, **kwargs), kwargs['raw'])
    sys.exit(command.run())


@cli.command()
@run_options
@click.option('--N', 'levels', multiple=True, type=int, required=True)
@click.option('--parallel', is_flag=True, default=False)
def study(levels, parallel, **kwargs):
    """
    Решает задачу на нескольких сетках и оценивает порядки сходимости мер.
    """
    raw = kwargs['raw']
    command = StudyCommand(_run_config(levels[0], **kwargs), list(levels), parallel, raw)
    sys.exit(command.run())


@cli.command(name='malm-bench')
@click.option('--instance', required=True, type=click.Choice(['circle', 'ocp_disc']))
@click.option('--pval', multiple=True, type=float, required=True)
@click.option('--eps', multiple=True, type=float)
@click.option('--N', 'levels', multiple=True, type=int)
@click.option('--max-inner', default=1000, type=int)
@click.option('--out', '-o', default='malm_bench.csv', type=click.Path(dir_okay=False))
@click.option('--trace', is_flag=True, default=False)
def malm_bench(instance, pval, eps, levels, max_inner, out, trace):
    """
    Сравнивает MALM, ALM и прямой штрафной метод на сетке параметров.
    """
    command = MalmBenchCommand(instance, list(pval), list(eps), list(levels), max_inner, out, trace)
    sys.exit(command.run())
