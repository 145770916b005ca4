"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RdpdmpError(Exception):
    """Base class for every error raised by this package."""


# -- network validation -------------------------------------------------------


class NetworkError(RdpdmpError, ValueError):
    """A reaction network violates a structural or sign requirement.

    ``validate_network`` raises the first violation found; the complete list
    is attached as ``violations``.
    """

    def __init__(self, message: str, reaction: int | str | None = None):
        super().__init__(message)
        self.reaction = reaction
        self.violations: list[NetworkError] = [self]


class NegativeRate(NetworkError):
    """A rate polynomial is negative somewhere in the validation box."""

    def __init__(self, message: str, reaction=None, point=None):
        super().__init__(message, reaction)
        self.point = point


class BadArity(NetworkError):
    """A rate polynomial depends on a variable its class does not allow."""


class UnnormalizedWeight(NetworkError):
    """An ``a`` weight does not integrate to one, or a weight is negative."""


class MixedFastWithDJump(NetworkError):
    """A fast reaction (RC or S1) changes the discrete species."""


class BadStoichiometry(NetworkError):
    """Stoichiometry inconsistent with the reaction class."""


class NegativeRateAtRuntime(RdpdmpError, ArithmeticError):
    """A rate evaluated below zero: the state left the validated box."""


# -- lattice ------------------------------------------------------------------


class InsufficientSamples(RdpdmpError, ValueError):
    """Too few samples to project a sampled function onto the lattice."""


class IndexOutOfRange(RdpdmpError, IndexError):
    """A site or macrosite index is outside the grid."""


# -- simulation ---------------------------------------------------------------


class SimulationError(RdpdmpError, RuntimeError):
    """Base for runtime failures of a simulation engine."""


class NegativeInitial(SimulationError, ValueError):
    """Initial data contains negative concentrations or counts."""


class ExtinctTotal(SimulationError):
    """Total propensity is zero: the chain is absorbed."""


class NegativityBreach(SimulationError):
    """An event would make a molecule count negative."""


class BudgetExceeded(SimulationError):
    """A run hit its event, jump or wall-clock budget.

    The partial result is attached as ``partial`` so callers can still
    write it out (flagged as truncated).
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class EventBudgetExceeded(BudgetExceeded):
    pass


class JumpBudgetExceeded(BudgetExceeded):
    pass


class WallClockExceeded(BudgetExceeded):
    pass


class StepRejected(SimulationError):
    """The deterministic flow produced NaN or Inf."""


class ZeroHazard(SimulationError):
    """A discrete transition was requested while the jump rate is zero."""


# -- analysis -----------------------------------------------------------------


class EmptySamples(RdpdmpError, ValueError):
    pass


class QuadratureTooCoarse(RdpdmpError, ValueError):
    pass


class LadderNotAdmissible(RdpdmpError, ValueError):
    pass


class EnsembleAborted(RdpdmpError, RuntimeError):
    """More than 1% of replicates failed."""

    def __init__(self, message: str, failures=None):
        super().__init__(message)
        self.failures = failures or []


# -- configuration ------------------------------------------------------------


class ConfigError(RdpdmpError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(ConfigError):
    """One or more config keys failed validation.

    ``errors`` holds ``(dotted.key, reason, line)`` triples.
    """

    def __init__(self, errors: list[tuple[str, str, int | None]]):
        self.errors = list(errors)
        text = "; ".join(
            f"{key}: {reason}" + (f" (line {line})" if line is not None else "")
            for key, reason, line in self.errors
        )
        super().__init__(text)
