"""Small dense matrix kernels.

Real eigendecomposition of flux Jacobians into sorted speeds and left
eigenvectors, positive-definiteness tests with margins, and guarded
inversion.  Everything here is plain float64 numpy on matrices of size
a few by a few; all functions are pure.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ComplexEigenvalues,
    DefectiveMatrix,
    SingularMatrix,
    VanishingSpeed,
)

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Sorted real spectrum of a flux Jacobian with left eigenvectors.

    lam is ascending; the first m entries are strictly negative and the
    rest strictly positive.  Row i of L satisfies L[i] @ A = lam[i] * L[i].
    """

    lam: np.ndarray
    m: int
    L: np.ndarray
    L_inv: np.ndarray

    @property
    def n(self):
        return self.lam.size

    @property
    def lam_minus(self):
        """Negative speeds, as a 1-d array of length m."""
        return self.lam[: self.m]

    @property
    def lam_plus(self):
        """Positive speeds, length n - m."""
        return self.lam[self.m:]


def spectral_decompose(A, tol=DEFAULT_TOL):
    """Decompose a real-diagonalizable square matrix into a Spectrum.

    Eigenvalues are sorted ascending (stable for ties).  Left-eigenvector
    rows are scaled to unit max-norm with the largest-magnitude entry
    positive.  Raises ComplexEigenvalues, VanishingSpeed or DefectiveMatrix
    when the hyperbolicity hypotheses fail at relative tolerance tol.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")

    scale = np.abs(A).max() or 1.0
    # left eigenvectors of A are right eigenvectors of A^T
    w, vr = np.linalg.eig(A.T)
    if np.abs(w.imag).max() > tol * scale:
        raise ComplexEigenvalues(
            f"imaginary parts up to {np.abs(w.imag).max():.3e} "
            f"(tol {tol * scale:.3e})"
        )
    lam = w.real
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    L = vr.real.T[order]

    if np.abs(lam).min() <= tol * scale:
        raise VanishingSpeed(
            f"characteristic speed {lam[np.abs(lam).argmin()]:.3e} is zero "
            f"within tolerance"
        )

    # unit max-norm rows, largest-magnitude entry positive
    idx = np.abs(L).argmax(axis=1)
    piv = L[np.arange(L.shape[0]), idx]
    L = L / piv[:, None]

    cond = np.linalg.cond(L)
    if cond > 1.0 / max(tol, np.finfo(float).eps):
        raise DefectiveMatrix(f"eigenvector condition number {cond:.3e}")

    m = int(np.count_nonzero(lam < 0.0))
    return Spectrum(lam=lam, m=m, L=L, L_inv=np.linalg.inv(L))


class PDResult(NamedTuple):
    is_pd: bool
    margin: float
    asymmetry: float


def is_positive_definite(M, tol=0.0):
    """Test positive definiteness of the symmetric part of M.

    Returns (is_pd, margin, asymmetry) where margin is the smallest
    eigenvalue of (M + M^T)/2 and asymmetry is the max-norm of M - M^T.
    is_pd holds iff margin > tol.
    """
    M = np.asarray(M, dtype=float)
    asym = float(np.abs(M - M.T).max())
    sym = 0.5 * (M + M.T)
    margin = float(np.linalg.eigvalsh(sym)[0])
    return PDResult(margin > tol, margin, asym)


def invert(M, tol=None):
    """Invert a small dense matrix, raising SingularMatrix when unsafe."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if tol is None:
        tol = M.shape[0] * np.finfo(float).eps
    scale = np.abs(M).max() or 1.0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= tol * scale:
        raise SingularMatrix(
            f"smallest singular value {sv[-1]:.3e} below {tol * scale:.3e}"
        )
    return np.linalg.inv(M)
