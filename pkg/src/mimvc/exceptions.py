"""Exception hierarchy. The CLI maps each family to a stable exit code."""


class MimvcError(Exception):
    exit_code = 1


class ConfigError(MimvcError, ValueError):
    exit_code = 2


class TrainingError(MimvcError, RuntimeError):
    exit_code = 3


class DegenerateProjectionError(TrainingError):
    """The linear cluster projection lost column rank, so QR is undefined."""


class DataError(MimvcError, ValueError):
    exit_code = 4
