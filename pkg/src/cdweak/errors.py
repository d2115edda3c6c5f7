"""Exception hierarchy. Every error raised on purpose derives from CDWeakError."""


class CDWeakError(Exception):
    """Base class for library errors."""


class PreconditionError(CDWeakError):
    """A mathematical precondition of an operation does not hold (CLI exit 3)."""


class NotHermitian(CDWeakError, ValueError):
    pass


class DimensionMismatch(CDWeakError, ValueError):
    pass


class GridOverflow(PreconditionError):
    """Shifted wavepacket would wrap around the periodic grid."""


class OrthogonalPostselection(PreconditionError):
    """tr(Pi_f rho_in) is too small for the weak value to be defined."""


class DegeneratePointer(PreconditionError):
    """A commutator moment the weak-limit estimator divides by vanishes."""


class ZeroStrength(PreconditionError):
    pass


class BiasedPointer(PreconditionError):
    """Initial pointer reading <phi_0|s|phi_0> is not zero."""


class LinearlyDependentFamily(PreconditionError):
    def __init__(self, message=None):
        if message is None:
            message = "pointer states are linearly dependent"
        super().__init__(
            message
            + "; measure a substitute observable (substitute_observable) or swap the "
            "roles of observable and post-selection (swapped_postselection) instead"
        )


class DegenerateChannel(PreconditionError):
    pass


class NotTwoLevel(PreconditionError):
    pass


class NullObservableOnPostselection(PreconditionError):
    """<psi_f|A^2|psi_f> vanishes, so the weak-value numerator is identically zero."""


class IncompatibleBases(PreconditionError):
    pass


class ZeroTrace(CDWeakError, ValueError):
    pass
