"""
Exception hierarchy for qsc-analysis.

Every error raised on purpose by the library derives from :class:`QscError`, so
callers (and the CLI) can map failures to exit codes without string matching.
"""

from __future__ import annotations

from typing import Any


class QscError(Exception):
    """Base class for all qsc-analysis errors."""


class InvalidParameterError(QscError, ValueError):
    """Raised when an argument or configuration value is out of its valid range."""

    def __init__(self, parameter: str, value: Any, detail: str):
        self.parameter = parameter
        self.value = value
        self.detail = detail
        super().__init__(f"invalid {parameter}={value!r}: {detail}")


class KeyspaceTooLargeError(InvalidParameterError):
    """Raised when an exhaustive key search is requested beyond the desk-scale bound."""

    def __init__(self, key_bits: int, max_key_bits: int):
        self.key_bits = key_bits
        self.max_key_bits = max_key_bits
        super().__init__(
            "key_bits",
            key_bits,
            f"keyspace 2^{key_bits} exceeds the exhaustive-search bound 2^{max_key_bits}",
        )


class NumericalConsistencyError(QscError, ArithmeticError):
    """Raised when a numerical identity fails beyond its tolerance."""

    def __init__(self, detail: str, residual: float):
        self.detail = detail
        self.residual = residual
        super().__init__(f"{detail} (residual {residual:.3e})")
