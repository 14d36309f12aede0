"""Exception types shared across the package.

Every operation that validates inputs raises InvalidArgument; numerical
failures that survive validation (non-PSD matrices, quadrature that refuses
to converge, unwrap failures) raise NumericError. Both carry a short
machine-readable code so the HTTP layer can map them without string matching.
"""

from __future__ import annotations


class TurbsimError(Exception):
    """Base class for package errors."""

    code = "error"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class InvalidArgument(TurbsimError):
    """An input failed validation before any numerics ran."""

    code = "invalid-argument"


class NumericError(TurbsimError):
    """Numerics failed after inputs passed validation."""

    code = "numeric-error"


class FormatError(TurbsimError):
    """A binary or JSON payload does not match the expected layout."""

    code = "format-error"
