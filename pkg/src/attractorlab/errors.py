"""Exception hierarchy.

Each family maps onto one CLI exit code:

* :class:`HypothesisViolation` -> 1
* :class:`NumericalFailure` (incl. :class:`BlowUpError`) -> 2
* :class:`CheckFailure` -> 3

:class:`ConfigurationError` and :class:`ShapeError` are raised for malformed
inputs and surface as exit code 1 from the CLI as well.
"""

from __future__ import annotations


class AttractorLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(AttractorLabError, ValueError):
    """Invalid parameters or configuration values."""


class ShapeError(AttractorLabError, ValueError):
    """Fields living on different grids or with the wrong length."""


class ResolutionError(AttractorLabError, ValueError):
    """Grid too coarse for the requested quantity."""


class HypothesisViolation(AttractorLabError):
    """A structural hypothesis of the model does not hold.

    ``hypothesis`` names the violated item.
    """

    def __init__(self, message: str, hypothesis: str | None = None, value=None):
        super().__init__(message)
        self.hypothesis = hypothesis
        self.value = value


class CriterionFailed(HypothesisViolation):
    """A sufficient criterion (e.g. convexity) failed at a witness point."""

    def __init__(self, message: str, node: int | None = None, u: float | None = None):
        super().__init__(message, hypothesis="dissipativity")
        self.node = node
        self.u = u


class NumericalFailure(AttractorLabError, RuntimeError):
    """An iterative solver did not converge."""

    def __init__(self, message: str, value=None):
        super().__init__(message)
        self.value = value


class BlowUpError(NumericalFailure):
    """The discrete flow produced non-finite or huge values."""

    def __init__(self, message: str, last_finite_time: float):
        super().__init__(message, value=last_finite_time)
        self.last_finite_time = last_finite_time


class PreconditionError(AttractorLabError, ValueError):
    """A check was called with inputs violating its stated precondition."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class CheckFailure(AttractorLabError):
    """A verification check failed; ``witness`` locates the failure."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness
