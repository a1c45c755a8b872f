from __future__ import annotations

from typing import Optional


class SvcvaError(Exception):
    """Base class for every error raised by svcva."""


class ConfigError(SvcvaError):
    """Invalid run configuration or parameter document.

    ``key``, ``expected`` and ``line`` are filled when the failure can be
    pinned to a single configuration entry.
    """

    def __init__(
        self,
        message: str,
        *,
        key: Optional[str] = None,
        expected: Optional[str] = None,
        line: Optional[int] = None,
    ):
        self.key = key
        self.expected = expected
        self.line = line
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if key:
            parts.append(f"key '{key}'")
        prefix = (", ".join(parts) + ": ") if parts else ""
        suffix = f" (expected {expected})" if expected else ""
        super().__init__(f"{prefix}{message}{suffix}")


class UnknownSetError(ConfigError, LookupError):
    pass


class CorrelationDomainError(ConfigError, ValueError):
    """The (eta, rho, nu) triple is not a valid correlation structure."""

    def __init__(
        self,
        message: str,
        inequality: str,
        *,
        key: Optional[str] = None,
        line: Optional[int] = None,
    ):
        self.inequality = inequality
        super().__init__(f"{message}: violates {inequality}", key=key, line=line)


class DomainError(SvcvaError, ValueError):
    pass


class PairingError(SvcvaError):
    pass


class UnsupportedPairingError(PairingError):
    pass


class NumericalError(SvcvaError, ArithmeticError):
    pass


class QuadratureError(NumericalError):
    pass


class DegenerateError(NumericalError):
    pass


class FellerConditionWarning(UserWarning):
    """A square-root process whose parameters violate the Feller condition."""
