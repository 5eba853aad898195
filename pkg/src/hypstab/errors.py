"""Exception hierarchy shared by all modules."""


class HypstabError(Exception):
    """Base class for all toolkit errors."""


class ComplexEigenvalues(HypstabError):
    """Flux Jacobian has eigenvalues with imaginary part above tolerance."""


class VanishingSpeed(HypstabError):
    """A characteristic speed is zero within tolerance."""


class DefectiveMatrix(HypstabError):
    """Eigenvector matrix is numerically rank-deficient."""


class SingularMatrix(HypstabError):
    """Matrix inversion failed (pivot below tolerance)."""


class A0NotSPD(HypstabError):
    """Candidate symmetrizer is not symmetric positive definite."""


class BlockCouplingTooLarge(HypstabError):
    """Off-diagonal blocks of the boundary weight matrix exceed tolerance."""


class SNotInvertible(HypstabError):
    """Dissipative block of the transformed source Jacobian is singular."""


class DimensionMismatch(HypstabError):
    """Inconsistent matrix/vector dimensions."""


class NonPositiveAlpha(HypstabError):
    """Lyapunov/boundary weight alpha must be strictly positive."""


class SingularFeedback(HypstabError):
    """Feedback coefficient denominator vanishes."""


class AssumptionViolated(HypstabError):
    """Spectral smallness assumptions of the river model do not hold."""


class DryBed(HypstabError):
    """Water depth dropped to zero or below."""


class BlowUp(HypstabError):
    """Simulated state exceeded the blow-up cap."""

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state


class SpectralFailure(HypstabError):
    """Local characteristic decomposition failed during a run."""


class NonPDWeight(HypstabError):
    """Lyapunov weight matrix lost positive definiteness."""


class InsufficientSamples(HypstabError):
    """Not enough trace samples in the requested fit window."""


class NonPositiveEnergy(HypstabError):
    """Decay fit requires strictly positive energies."""
