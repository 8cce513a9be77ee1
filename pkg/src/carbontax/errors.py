"""Typed errors shared across the library.

Every contract violation raises one of these instead of a bare ValueError so
callers (and the CLI) can distinguish bad inputs from solver breakdowns.
"""


class CarbonTaxError(Exception):
    """Base class for all library errors."""


class OutOfRangeError(CarbonTaxError):
    """Evaluation requested outside an interpolant's knot span."""


class NoInteriorSolutionError(CarbonTaxError):
    """Agent problem has no interior optimum (empty or degenerate budget)."""


class NonConcaveError(CarbonTaxError):
    """Second-order condition failed at a candidate optimum."""


class MultipleOptimaError(CarbonTaxError):
    """Two near-tied local maxima detected; regularity assumption violated."""


class NonMonotoneError(CarbonTaxError):
    """Solved income mapping w -> z is not strictly increasing."""


class StepTooLargeError(CarbonTaxError):
    """One-sided finite-difference estimates disagree beyond tolerance."""


class GridMismatchError(CarbonTaxError):
    """Profiles that must share an income grid do not."""


class NoConvergenceError(CarbonTaxError):
    """Fixed-point iteration exhausted max_iter. Carries offending points."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = [] if points is None else list(points)


class SingularDenominatorError(CarbonTaxError):
    """1 - RR * x_inc crossed zero inside the solve bracket."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class DegenerateHazardError(CarbonTaxError):
    """z * h_z(z) vanished where the hazard ratio is needed."""


class RateOutOfRangeError(CarbonTaxError):
    """Closed-form tax rate left its admissible range."""


class NegativeVarianceError(CarbonTaxError):
    """A conditional variance input is negative."""


class MissingColumnError(CarbonTaxError):
    """Required input column absent."""


class RankDeficientError(CarbonTaxError):
    """Polynomial design matrix is rank deficient."""


class NonMonotoneAfterTaxError(CarbonTaxError):
    """After-tax income decreases somewhere in the cross-section."""


class InsufficientSupportError(CarbonTaxError):
    """Too few support points for the requested smoothing fit."""


class SparseDecileError(CarbonTaxError):
    """An income decile holds fewer respondents than required."""


class SolverFailureError(CarbonTaxError):
    """An agent re-solve failed inside an oracle evaluation."""
