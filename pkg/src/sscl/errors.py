"""Exception hierarchy shared by every module."""


class SSCLError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SSCLError, ValueError):
    """Operand shapes do not compose."""


class ContractError(SSCLError, RuntimeError):
    """A precondition between cooperating objects was violated (stale tape, shape drift)."""


class ProtocolError(SSCLError, RuntimeError):
    """An operation was called out of the order the training protocol requires."""


class ConfigError(SSCLError, ValueError):
    """Invalid experiment or generator configuration."""


class UndefinedMetricError(SSCLError, ValueError):
    """A metric was requested on inputs where it is not defined."""


class LabelError(SSCLError, IndexError):
    """A class index lies outside the logit range."""
