"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class QRAdjustError(Exception):
    exit_code = 1


class ConfigError(QRAdjustError):
    exit_code = 2


class DataError(QRAdjustError, ValueError):
    exit_code = 3


class ShapeError(DataError):
    pass


class DomainError(QRAdjustError, ValueError):
    exit_code = 2


class FitError(QRAdjustError):
    exit_code = 3


class NumericalError(QRAdjustError, ArithmeticError):
    exit_code = 4
