from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError, ConfigNotFound

SOLVER_KEYS = {
    'tol': float,
    'omega0': float,
    'mu0': float,
    'shrink': float,
    'max_outer': int,
    'max_inner': int,
}
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')


class Config:

    def __init__(self):
        self._config_path = Path('~/.pyocp').expanduser()
        self._config_path.mkdir(parents=True, exist_ok=True)

        self._config_file = self._config_path / 'config.ini'
        self._parser = ConfigParser()

    @property
    def file(self):
        return self._config_file

    def get_solver_settings(self) -> dict:
        if not self.config_exist():
            raise ConfigNotFound()
        if not self._parser.has_section('solver'):
            return {}
        section = self._parser['solver']
        settings = {}
        for key, cast in SOLVER_KEYS.items():
            if key in section:
                try:
                    settings[key] = cast(section[key])
                except ValueError:
                    raise ConfigError(key, f'invalid value {section[key]!r} in {self.file}') from None
        return settings

    def get_log_level(self) -> str:
        if not self.config_exist():
            raise ConfigNotFound()
        return self._parser.get('logging', 'level', fallback='WARNING').upper()

    def save(self, solver: dict, log_level: str = 'WARNING'):
        self._parser['solver'] = {key: repr(value) for key, value in solver.items()}
        self._parser['logging'] = {'level': log_level.upper()}
        with open(self.file, 'w') as f:
            self._parser.write(f)

    def config_exist(self):
        return self._parser.read(self.file)


@dataclass
class RunConfig:
    """
    Параметры одного запуска solve/study.

    :param scheme: семейство точек коллокации для dcm
    :param init: начальное приближение: reference, linear-boundary или zero
    :param solver: переопределения IpmConfig (tol, omega0, mu0, shrink, max_outer, max_inner)
    """
    problem: str
    method: str
    scheme: str = 'lgr'
    p: int = 4
    q: int | None = None
    m: int | None = None
    N: int = 16
    omega: float | None = None
    tau: float | None = None
    tol: float | None = None
    init: str = 'linear-boundary'
    seed: int = 0
    out_dir: Path = Path('.')
    trace: bool = False
    solver: dict = field(default_factory=dict)

    def validate(self) -> 'RunConfig':
        if self.method not in ('dcm', 'qpm', 'pbf'):
            raise ConfigError('--method', f'unknown method {self.method!r}')
        if self.init not in ('reference', 'linear-boundary', 'zero'):
            raise ConfigError('--init', f'unknown initial guess {self.init!r}')
        if self.p < 1:
            raise ConfigError('--p', 'must be at least 1')
        if self.N < 1:
            raise ConfigError('--N', 'must be at least 1')
        if self.method == 'dcm' and self.scheme not in ('ee', 'ie', 'tz', 'lg', 'lgr'):
            raise ConfigError('--scheme', f'unknown scheme {self.scheme!r}')
        if self.method in ('qpm', 'pbf') and self.omega is None:
            raise ConfigError('--omega', f'required for method {self.method}')
        if self.method == 'qpm':
            if self.q is None:
                raise ConfigError('--q', 'required for method qpm')
            if self.m is None:
                raise ConfigError('--m', 'required for method qpm')
            if self.omega <= 0.0:
                raise ConfigError('--omega', 'must be positive')
        if self.method == 'pbf':
            if self.tau is None:
                raise ConfigError('--tau', 'required for method pbf')
            if not 0.0 < self.tau <= self.omega < 1.0:
                raise ConfigError('--tau', 'pbf needs 0 < tau <= omega < 1')
        return self

    @property
    def tolerance(self) -> float:
        if self.tol is not None:
            return self.tol
        return self.solver.get('tol', 1e-7)
