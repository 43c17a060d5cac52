"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/config errors exit 2, data errors
exit 3, numeric failures exit 4.
"""


class NirbartError(Exception):
    """Base class for all package errors."""


class ConfigError(NirbartError):
    """Invalid configuration or argument combination (CLI exit code 2)."""


class DataError(NirbartError):
    """Malformed or unusable input data (CLI exit code 3)."""


class NumericError(NirbartError):
    """Numeric failure inside a model or report computation (CLI exit code 4)."""


class StructuralError(NumericError):
    """A tree violates its structural invariants.

    Carries the offending node id when one can be named.
    """

    def __init__(self, message: str, node_id: int | None = None):
        self.node_id = node_id
        if node_id is not None:
            message = f"{message} (node_id={node_id})"
        super().__init__(message)


class DegenerateLabelsError(DataError):
    """A (sub)problem ended up with fewer than two classes."""


class InsufficientDataError(DataError):
    """Too few rows to fit the requested model."""
