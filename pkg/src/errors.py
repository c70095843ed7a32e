"""Exception hierarchy shared by every module of the simulator."""

from dataclasses import dataclass
from typing import List, Optional, Sequence


class StarRisError(Exception):
    """Base class for all simulator errors."""


class DomainError(StarRisError, ValueError):
    """An operation was called outside its domain (bad size, distance, shape...)."""


class NumericalError(StarRisError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class SolverError(StarRisError):
    """A convex subproblem could not be solved."""

    def __init__(self, message: str, status: str = "infeasible", context: str = "") -> None:
        self.message = message
        self.status = status
        self.context = context
        prefix = f"[{context}] " if context else ""
        super().__init__(f"{prefix}{message} (status={status})")

    def with_context(self, context: str) -> "SolverError":
        """Return a copy of this error with an extra context prefix."""
        merged = f"{context}, {self.context}" if self.context else context
        return SolverError(self.message, status=self.status, context=merged)


@dataclass(frozen=True)
class Violation:
    """One violated constraint, reported as data."""

    name: str
    detail: str
    magnitude: float = 0.0

    def __str__(self) -> str:
        return f"{self.name}: {self.detail} (|residual|={self.magnitude:.3e})"


class ValidationError(StarRisError, ValueError):
    """Raised when a configuration or precoder set violates its constraints."""

    def __init__(self, violations: Sequence[Violation]) -> None:
        self.violations: List[Violation] = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} constraint violation(s): {lines}")


class ConfigError(StarRisError):
    """An experiment configuration file could not be used."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        self.field = field
        where = f"{field}: " if field else ""
        super().__init__(f"{where}{message}")


class VerificationError(StarRisError):
    """A recorded result does not match its recomputation."""
