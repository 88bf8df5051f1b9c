class PyOcpError(Exception):
    def __init__(self, message: str = ''):
        super().__init__(message)


class ConfigNotFound(PyOcpError):
    def __init__(self):
        super().__init__('config file not found')


class ConfigError(PyOcpError):
    def __init__(self, flag: str, message: str):
        self.flag = flag
        super().__init__(f'{flag}: {message}')


class UnknownProblem(PyOcpError):
    def __init__(self, name: str, valid):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(
            f'unknown problem {name!r}, valid names: {", ".join(self.valid)}'
        )


class UnsupportedDegree(PyOcpError):
    def __init__(self, family: str, degree: int):
        self.family = family
        self.degree = degree
        super().__init__(f'{family} points of degree {degree} are not supported')


class MeshMismatch(PyOcpError):
    pass


class DimensionMismatch(PyOcpError):
    pass


class AssemblyError(PyOcpError):
    def __init__(self, matrix: str, interval: int, row: int):
        self.matrix = matrix
        self.interval = interval
        self.row = row
        super().__init__(
            f'non-finite entry in {matrix} at row {row} (interval {interval})'
        )


class MissingReference(PyOcpError):
    pass


class NotApplicable(PyOcpError):
    pass


class SolverError(PyOcpError):
    report = None


class FactorizationError(SolverError):
    pass


class LineSearchError(SolverError):
    pass


class IterationLimitError(SolverError):
    pass


class NotInteriorError(SolverError):
    pass


class NonFiniteError(SolverError):
    def __init__(self, block: str):
        self.block = block
        super().__init__(f'non-finite values in KKT block {block!r}')


class OutsideHorizon(PyOcpError):
    def __init__(self, t: float, horizon: float):
        super().__init__(f't={t!r} is outside [0, {horizon!r}]')
