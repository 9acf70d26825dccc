"""Exception types shared across the package."""


class MflLabError(Exception):
    """Base class for all package errors."""


class GridMismatch(MflLabError):
    """Operands live on different grids."""


class DimensionUnsupported(MflLabError):
    """Operation is only defined for a subset of the supported dimensions."""


class DegenerateDensity(MflLabError):
    """Density has cells below the positivity floor required by the operation."""


class InvalidTime(MflLabError):
    """Nonpositive (or grid-unresolvable) time parameter for a heat kernel."""


class InvalidSigma(MflLabError):
    """Nonpositive smoothing bandwidth."""


class InvalidTau(MflLabError):
    """Nonpositive diffusivity / regularization strength."""


class NotEven(MflLabError):
    """Interaction kernel fails the coordinate-wise evenness check."""


class NoConvergence(MflLabError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SandwichViolation(MflLabError):
    """A two-sided bound failed beyond the allowed slack."""


class CflViolation(MflLabError):
    """Requested time step exceeds the stability bound."""


class NegativeDensity(MflLabError):
    """A flow step produced negative cells (time step too large)."""


class DriftBoundViolation(MflLabError):
    """Sampled drift exceeds its declared bound."""


class DomainMismatch(MflLabError):
    """Particle ensemble lives on the wrong domain for the operation."""


class HypothesisViolated(MflLabError):
    """Closed-form constant requested outside its hypothesis region."""


class InvalidRegime(MflLabError):
    """Rate certificate requested for parameters outside both regimes."""


class InsufficientData(MflLabError):
    """Not enough usable samples for a fit."""


class NonPositiveGap(MflLabError):
    """Rate fit received no positive suboptimality gaps."""


class ConfigError(MflLabError):
    """Experiment configuration is missing or inconsistent."""


class AssertionFailure(MflLabError):
    """A named experiment invariant was violated."""
