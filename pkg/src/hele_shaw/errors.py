"""Exception hierarchy for the Hele-Shaw root/pole toolkit."""


class HeleShawError(Exception):
    """Base class for every error raised by this package."""


class PoleHit(HeleShawError, ValueError):
    """Evaluation point lies (numerically) on a pole."""


class ZeroHit(HeleShawError, ValueError):
    """Evaluation point lies (numerically) on a zero of g, i.e. a pole of P."""


class PathBlocked(HeleShawError, ValueError):
    """Integration segment passes too close to a pole of g."""


class PoleInsideDisk(HeleShawError, ValueError):
    """A pole of g lies in the closed unit disk; the series does not converge there."""


class ConstraintViolated(HeleShawError, ValueError):
    """The normalization a_1 = g(0) > 0 does not hold."""


class DegenerateDecomposition(HeleShawError, ValueError):
    """Two poles nearly coincide without being declared as one multiple pole."""


class NearMultipleZero(HeleShawError, ArithmeticError):
    """Two zeros of g are closer than the simple-zero tolerance."""


class NonLocallyUnivalent(HeleShawError, ValueError):
    """A zero or pole of g lies on or inside the unit circle."""


class StepSizeUnderflow(HeleShawError, ArithmeticError):
    """The adaptive integrator could not make progress."""


class WindowTooSmall(HeleShawError, ArithmeticError):
    """Roots were still unresolved at the end of a continuation window."""


class TupleBlowup(HeleShawError, ValueError):
    """Exact moment enumeration would exceed the configured budget."""


class OutOfDomain(HeleShawError, ValueError):
    """Parameter outside the domain of a closed-form solution."""


class RegimeMismatch(HeleShawError, ValueError):
    """Configuration does not satisfy the preconditions of a predicate."""


class BoundaryZero(HeleShawError, ArithmeticError):
    """|f'| is (numerically) zero somewhere on the unit circle."""


class UnderResolved(HeleShawError, ArithmeticError):
    """Spectral truncation could not be enlarged enough to resolve the map."""


class UnknownEntry(HeleShawError, KeyError):
    """Unknown gallery entry name."""


class SimulationError(HeleShawError):
    """Integrator or event failure; carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(HeleShawError, ValueError):
    """Run configuration failed validation; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
