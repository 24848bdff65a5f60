"""Exceptions and warnings raised by remfield."""


class RemFieldError(Exception):
    """Base class for all remfield errors."""


class ConfigError(RemFieldError, ValueError):
    """Invalid configuration document, CLI flag or field model."""


class DomainError(RemFieldError, ValueError):
    """Argument outside the open domain of a rate function or cumulant."""


class ConvergenceError(RemFieldError, RuntimeError):
    """A root finder hit its iteration cap or could not bracket a root."""


class InvalidSpec(RemFieldError, ValueError):
    """Replica specification fails validation."""


class ResourceError(RemFieldError, RuntimeError):
    """Requested enumeration exceeds the memory/time guard."""


class EmptyBin(RemFieldError, LookupError):
    """Entropy bin holds no configurations."""

    def __init__(self, energy: float):
        super().__init__(f"No configurations in the entropy bin at E={energy:g}")
        self.energy = energy


class InsufficientReplicas(RemFieldError, ValueError):
    """Too few replicas for a statistical test."""

    def __init__(self, have: int, need: int):
        super().__init__(f"Need at least {need} replicas, got {have}")
        self.have = have
        self.need = need


class BetaBelowCritical(RemFieldError, ValueError):
    """Low-temperature statistic requested at beta <= beta_c."""

    def __init__(self, beta: float, beta_c: float):
        super().__init__(f"beta={beta:g} is not above beta_c={beta_c:g}")
        self.beta = beta
        self.beta_c = beta_c


class ParseError(RemFieldError, ValueError):
    """Malformed line in a records file."""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class QuadratureAccuracyWarning(UserWarning):
    """Doubling the quadrature order moved psi by more than the tolerance."""


class TruncationWarning(UserWarning):
    """A statistic needed configurations beyond the retained top list."""
