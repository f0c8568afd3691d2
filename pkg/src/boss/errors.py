"""Exception types shared across the package."""


class BossError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BossError, ValueError):
    """A parameter or configuration value violates its contract."""


class DimensionMismatchError(BossError, ValueError):
    pass


class InvalidBasisError(BossError, ValueError):
    pass


class DegenerateProjectionError(BossError, ValueError):
    pass


class CoverTooLargeError(BossError, ValueError):
    pass


class InfeasibleActionError(BossError, ValueError):
    pass


class UndefinedMaximizerError(BossError, ValueError):
    pass
