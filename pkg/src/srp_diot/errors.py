"""Exception types shared across the package."""


class SrpError(Exception):
    """Base class for every error raised by srp_diot."""


class ParameterError(SrpError, ValueError):
    pass


class MalformedOnidError(SrpError, ValueError):
    pass


class WidthOverflowError(SrpError, ValueError):
    pass


class OntologyFileError(SrpError, ValueError):
    """Raised when an ontology file cannot be parsed; the message names the line."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class PreconditionError(SrpError, ValueError):
    pass


class UnknownNeighborError(SrpError, KeyError):
    pass


class ConfigError(SrpError, ValueError):
    pass
