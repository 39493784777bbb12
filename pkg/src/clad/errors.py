"""Exception hierarchy; each family maps to a distinct CLI exit code."""


class CladError(Exception):
    exit_code = 1


class ConfigError(CladError, ValueError):
    exit_code = 2


class DataError(CladError, ValueError):
    exit_code = 3


class NumericError(CladError, ArithmeticError):
    exit_code = 4
