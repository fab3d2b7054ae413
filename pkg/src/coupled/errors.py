"""Exception hierarchy shared by all samplers."""


class CouplingError(Exception):
    """Base class for every error raised by this package."""


class MaxIterExceeded(CouplingError):
    """An iterative loop hit its configured cap before terminating."""

    def __init__(self, what, cap, **context):
        self.what = what
        self.cap = cap
        self.context = context
        extra = ", ".join(f"{k}={v!r}" for k, v in context.items())
        msg = f"{what}: exceeded {cap} iterations"
        super().__init__(f"{msg} ({extra})" if extra else msg)


class NoSignChange(CouplingError, ValueError):
    """Root bracket endpoints do not straddle a sign change."""


class DominationViolated(CouplingError):
    """A target/proposal density ratio exceeded its declared bound."""


class NotPositiveDefinite(CouplingError, ValueError):
    pass


class EigDecompositionFailed(CouplingError):
    pass


class SingularH(CouplingError):
    pass


class LengthMismatch(CouplingError, ValueError):
    pass


class InvalidAlpha(CouplingError, ValueError):
    pass


class DomainError(CouplingError, ValueError):
    pass


class DegenerateGap(CouplingError, ValueError):
    pass


class ZeroWeights(CouplingError, ValueError):
    pass


class NoCoupledProposals(CouplingError):
    """The dominating coupling never produced a coupled proposal."""
