"""Exception types raised across the package."""


class OptisenseError(Exception):
    """Base class for all package errors."""


class ArgumentError(OptisenseError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(OptisenseError, ValueError):
    """A time or frequency lies outside the domain of a model."""


class FilterPoleError(OptisenseError, ZeroDivisionError):
    """The closed-form CP filter hits a secant pole."""

    def __init__(self, nu):
        self.nu = nu
        super().__init__(f"secant pole of the CP filter at nu={nu!r} Hz")


class DivergenceError(OptisenseError, ArithmeticError):
    """The decoherence integral does not converge."""


class FitError(OptisenseError, RuntimeError):
    """A least-squares fit failed to produce a usable estimate."""


class DegenerateOutcomeError(OptisenseError, ArithmeticError):
    """Measurement outcome probability is 0 or 1, Fisher information undefined."""


class CalibrationError(OptisenseError, RuntimeError):
    """Measured data do not show an interior maximum."""


class InfeasibleError(OptisenseError, RuntimeError):
    """No point satisfying the search-space constraints could be found."""


class ResolutionError(OptisenseError, ValueError):
    """Time step too coarse for the synthesized frequency band."""
