"""Exception hierarchy shared by every stage of the pipeline."""


class DescriptorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMatrix(DescriptorError, ValueError):
    """A matrix argument is malformed (wrong shape, NaN or Inf entries)."""


class EigenFailure(DescriptorError):
    """The eigenvalue iteration did not converge."""


class DecompositionFailure(DescriptorError):
    """A block splitting left an off-diagonal residual above tolerance."""


class BadShift(DescriptorError):
    """The shift ``s0`` makes ``s0*E - A`` (numerically) singular."""


class NotRegular(DescriptorError):
    """No sampled shift certified ``det(s*E - A) != 0``."""


class InsufficientHorizon(DescriptorError):
    """Too few inputs to resolve the anticausal fast states."""


class DegenerateData(DescriptorError):
    """Recorded data are too ill-conditioned to build the data matrices."""


class AmbiguousSpectrum(DescriptorError):
    """No clear gap in a singular spectrum; a rank verdict is refused.

    The offending spectrum is kept on the exception so callers can report it.
    """

    def __init__(self, message, singular_values=()):
        super().__init__(message)
        self.singular_values = list(singular_values)


class NothingToStabilize(DescriptorError):
    """The system has no slow part (``n1 == 0``)."""


class LmiInfeasible(DescriptorError):
    """The stabilizing LMI produced no certificate.

    This means the solver failed to find a strictly feasible point within its
    limits. It is not, on its own, a proof that none exists.
    """

    def __init__(self, message, best_min_eig=None):
        super().__init__(message)
        self.best_min_eig = best_min_eig


class DegenerateCertificate(DescriptorError):
    """``X_minus_slow @ Phi_s`` is numerically singular."""
