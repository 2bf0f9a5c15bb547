class ErgoTransportError(Exception):
    """Base class for library errors."""


class ResourceError(ErgoTransportError):
    """A requested enumeration or LP would exceed a configured size cap."""


class NumericalFailure(ErgoTransportError):
    """An LP finished but its residuals stayed above the hard tolerance."""


class NonConvergence(ErgoTransportError):
    """An iterative procedure hit its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PositivityError(ErgoTransportError):
    """A zeta-measure run was given a cost that is not strictly positive."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ConfigError(ErgoTransportError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
