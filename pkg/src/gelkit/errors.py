"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: configuration problems
(:class:`SchemaError`) exit 2, numerical failures exit 3, and budget
guards exit 4.
"""


class GelkitError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(GelkitError):
    """A JSON document or experiment config violates the documented schema.

    ``pointer`` is a JSON pointer (RFC 6901) to the offending location.
    """

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class NumericError(GelkitError):
    """Base class for failures of numerical procedures."""


class NegativeRate(NumericError):
    """A merge rate evaluated negative beyond tolerance.

    Signals a system/measure pair on which the bilinear form is not a
    valid rate kernel.
    """


class DegenerateMeasure(NumericError):
    """The measure fails a nondegeneracy requirement (singular Gram
    matrix or a Perron vector that is not single-signed)."""


class NoConvergence(NumericError):
    """An iterative solver exhausted its budget without converging."""


class SlowConvergence(NumericError):
    """The fixed-point iteration hit its iteration cap; the target time
    is too close to the critical point for the requested tolerance."""


class DegenerateCubic(NumericError):
    """The quadratic correction term of the fixed-point map vanishes, so
    no critical slope exists."""


class ExplosionReached(NumericError):
    """Moment integration hit the blowup threshold before the requested
    end time."""


class DualNotSubcritical(NumericError):
    """The tilted initial condition is not subcritical at the requested
    time, so the duality route cannot produce sol moments."""


class ToleranceFailure(NumericError):
    """An invariant that must hold along a computation was violated
    beyond tolerance."""


class RateUnderflow(NumericError):
    """Total event rate is zero: the particle system is absorbed."""


class HookViolatesConservation(GelkitError):
    """A user hook modified a conserved coordinate of a particle."""


class WindowInvalid(NumericError):
    """The requested time window violates its ordering precondition."""


class BudgetExceeded(GelkitError):
    """A configured size or count cap would be exceeded."""
