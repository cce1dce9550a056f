"""Exception hierarchy shared by the library and the command line."""


class MigeduError(Exception):
    """Base class for all errors raised by migedu."""


class SchemaError(MigeduError, ValueError):
    """A schema or hierarchy document is malformed or inconsistent."""


class DataValidationError(MigeduError, ValueError):
    """Input data does not match the declared schema (bad header, unreadable file)."""


class InsufficientDataError(MigeduError):
    """The requested indicator cannot be computed from the available fields or records."""


class FixtureCheckError(MigeduError):
    """A cross-check against shipped reference tables failed."""
