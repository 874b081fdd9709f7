"""Exception hierarchy. CLI exit codes hang off the base classes."""


class ShiftError(Exception):
    exit_code = 1


class ConfigError(ShiftError, ValueError):
    exit_code = 1


class ConstructionError(ShiftError, ValueError):
    """A domain object was built from values violating its invariants."""

    exit_code = 2


class DimensionError(ConstructionError):
    pass


class DataError(ShiftError, ValueError):
    exit_code = 2


class InsufficientSamplesError(ShiftError, ValueError):
    exit_code = 2


class UndefinedLossError(ShiftError, ValueError):
    exit_code = 2


class IncompleteEstimateError(ShiftError, ValueError):
    exit_code = 2


class DegenerateScenarioError(ShiftError, ValueError):
    exit_code = 2


class OracleError(ShiftError):
    exit_code = 3


class QueryError(OracleError):
    """Network failure that survived every retry."""


class ProtocolError(OracleError):
    """The endpoint answered, but not in the agreed wire format."""


class LookupOracleError(OracleError, KeyError):
    pass
