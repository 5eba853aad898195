"""Boundary feedback gain conditions.

The feedback matrix K maps the outgoing boundary traces (xi_plus at x=1,
xi_minus at x=0) to the incoming ones (xi_plus at x=0, xi_minus at x=1).
Stability requires two weighted quadratic forms in the outgoing traces to
be positive definite; this module builds them, tests them, and assembles
the combined boundary matrix G.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveAlpha
from .matrixcore import is_positive_definite


@dataclass(frozen=True)
class FeedbackGain:
    """Constant n x n feedback matrix in the (xi_plus; xi_minus) ordering.

    The leading block acts on the n-m outgoing right-going traces, the
    trailing block on the m left-going ones.
    """

    K: np.ndarray
    m: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DimensionMismatch(f"K must be square, got {K.shape}")
        if not 0 <= self.m <= K.shape[0]:
            raise DimensionMismatch(f"m={self.m} out of range for n={K.shape[0]}")
        object.__setattr__(self, "K", K)

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def K00(self):
        p = self.n - self.m
        return self.K[:p, :p]

    @property
    def K01(self):
        p = self.n - self.m
        return self.K[:p, p:]

    @property
    def K10(self):
        p = self.n - self.m
        return self.K[p:, :p]

    @property
    def K11(self):
        p = self.n - self.m
        return self.K[p:, p:]

    @classmethod
    def zero(cls, n, m):
        return cls(np.zeros((n, n)), m)

    @classmethod
    def diagonal(cls, kappa_plus, kappa_minus, n, m):
        """K = diag(kappa_plus * I_{n-m}, kappa_minus * I_m)."""
        d = np.concatenate([np.full(n - m, kappa_plus), np.full(m, kappa_minus)])
        return cls(np.diag(d), m)


@dataclass(frozen=True)
class GainReport:
    M1: np.ndarray
    M2: np.ndarray
    pd1: bool
    pd2: bool
    margin1: float
    margin2: float

    @property
    def passed(self):
        return self.pd1 and self.pd2

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "pd1": bool(self.pd1),
            "pd2": bool(self.pd2),
            "margin1": self.margin1,
            "margin2": self.margin2,
            "M1": self.M1.tolist(),
            "M2": self.M2.tolist(),
        }


def _weights(spectrum0, X1, X2, K):
    n, m = spectrum0.n, spectrum0.m
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape != (m, m) or X2.shape != (n - m, n - m):
        raise DimensionMismatch(
            f"X1 {X1.shape} / X2 {X2.shape} inconsistent with (n, m)=({n}, {m})"
        )
    if K.n != n or K.m != m:
        raise DimensionMismatch(f"K is {K.n}x{K.n} with m={K.m}, expected ({n}, {m})")
    lm = spectrum0.lam_minus
    lp = spectrum0.lam_plus
    return X1, X2, lm, lp


def build_condition_matrices(spectrum0, X1, X2, K):
    """The two symmetric matrices whose positive definiteness admits K.

    Both act on the outgoing trace vector (xi_plus(t,1); xi_minus(t,0)).
    M1 carries the boundary weights X1, X2; M2 carries the exponential
    weights of the Lyapunov functional at the domain endpoints (domain
    length hard-coded to 1; rescale other lengths into (0,1) first, which
    scales the speeds by the length).
    """
    X1, X2, lm, lp = _weights(spectrum0, X1, X2, K)

    W1 = _blockdiag(X2 * lp[None, :], -X1 * lm[None, :])
    M1 = W1 - K.K.T @ W1 @ K.K

    ep = np.exp(-lp)
    em = np.exp(-lm)
    W2a = _blockdiag(np.diag(ep * lp), np.diag(-lm))
    W2b = _blockdiag(np.diag(lp), np.diag(-em * lm))
    M2 = W2a - K.K.T @ W2b @ K.K

    return 0.5 * (M1 + M1.T), 0.5 * (M2 + M2.T)


def _blockdiag(A, B):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[: A.shape[0], : A.shape[1]] = A
    out[A.shape[0]:, A.shape[1]:] = B
    return out


def check_gain(spectrum0, X1, X2, K, tol=0.0):
    """Evaluate both gain conditions; margins are reported even on failure."""
    M1, M2 = build_condition_matrices(spectrum0, X1, X2, K)
    r1 = is_positive_definite(M1, tol)
    r2 = is_positive_definite(M2, tol)
    return GainReport(
        M1=M1, M2=M2, pd1=r1.is_pd, pd2=r2.is_pd,
        margin1=r1.margin, margin2=r2.margin,
    )


def diagonal_gain_bounds(spectrum0):
    """Squared-gain bounds for the diagonal reflection family.

    Returns (kappa_plus_sq_max, kappa_minus_sq_max): any diagonal K with
    kappa_plus^2, kappa_minus^2 strictly below these passes both
    conditions when X1 = X2 = I.
    """
    return (
        float(np.exp(-spectrum0.lam_plus.max())),
        float(np.exp(spectrum0.lam_minus.min())),
    )


def build_G(alpha, spectrum0, X1, X2, K):
    """Boundary quadratic-form matrix G = alpha * M1 + M2."""
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be > 0, got {alpha}")
    M1, M2 = build_condition_matrices(spectrum0, X1, X2, K)
    return alpha * M1 + M2
