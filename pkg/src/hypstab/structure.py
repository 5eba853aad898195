"""Structural checks at the equilibrium.

Verifies that a system bundle is symmetrizable-hyperbolic and carries the
partially dissipative source structure, and extracts the boundary weight
blocks X1, X2 used by the gain conditions.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import A0NotSPD, BlockCouplingTooLarge, SNotInvertible
from .matrixcore import DEFAULT_TOL, invert, is_positive_definite

# optimal central-difference step for first derivatives
_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass
class SystemModel:
    """Callable bundle defining a quasilinear balance law near U = 0.

    A(U) is the flux Jacobian, Q(U) the source, Q_U(U) its Jacobian,
    A0(U) the symmetrizer.  P0 and S0 are the constant matrices of the
    partially dissipative structure at the equilibrium.  A_dir(U, W), when
    given, is the directional derivative of A at U in direction W;
    otherwise central finite differences are used.
    """

    n: int
    m: int
    r: int
    A: Callable[[np.ndarray], np.ndarray]
    Q: Callable[[np.ndarray], np.ndarray]
    Q_U: Callable[[np.ndarray], np.ndarray]
    A0: Callable[[np.ndarray], np.ndarray]
    P0: np.ndarray
    S0: np.ndarray
    A_dir: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    P0_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        self.P0 = np.asarray(self.P0, dtype=float)
        self.S0 = np.asarray(self.S0, dtype=float).reshape(self.r, self.r)
        self.P0_inv = invert(self.P0)

    def a_dir(self, U, W):
        """Directional derivative of A at U in direction W."""
        if self.A_dir is not None:
            return self.A_dir(U, W)
        U = np.asarray(U, dtype=float)
        W = np.asarray(W, dtype=float)
        h = _FD_STEP * (1.0 + np.linalg.norm(U))
        return (self.A(U + h * W) - self.A(U - h * W)) / (2.0 * h)


@dataclass
class StructureReport:
    """Outcome of the partial-dissipativity check at the equilibrium."""

    symmetrizer_residual: float
    pdq_residual: float
    dissipativity_margin: float
    X1: np.ndarray
    X2: np.ndarray
    X1_margin: float
    X2_margin: float
    block_offdiag_residual: float
    generalized_S11_norm: float
    generalized_S21_norm: float
    passed: bool

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "symmetrizer_residual": self.symmetrizer_residual,
            "pdq_residual": self.pdq_residual,
            "dissipativity_margin": self.dissipativity_margin,
            "X1": self.X1.tolist(),
            "X2": self.X2.tolist(),
            "X1_margin": self.X1_margin,
            "X2_margin": self.X2_margin,
            "block_offdiag_residual": self.block_offdiag_residual,
            "generalized_S11_norm": self.generalized_S11_norm,
            "generalized_S21_norm": self.generalized_S21_norm,
        }


def check_symmetrizer(model, U, tol=DEFAULT_TOL):
    """Max-norm residual of A0(U) A(U) - A(U)^T A0(U).

    Raises A0NotSPD when the candidate symmetrizer is not positive
    definite at U.  The check passes iff the returned residual is at most
    tol * |A0| * |A|.
    """
    A = np.asarray(model.A(U), dtype=float)
    A0 = np.asarray(model.A0(U), dtype=float)
    pd = is_positive_definite(A0, tol=0.0)
    if not pd.is_pd:
        raise A0NotSPD(f"A0(U) smallest eigenvalue {pd.margin:.3e}")
    return float(np.abs(A0 @ A - A.T @ A0).max())


def compute_boundary_weights(spectrum0, A00, tol=DEFAULT_TOL):
    """Diagonal blocks X1, X2 of (L^-1)^T A0 L^-1 in the sign split.

    Returns (X1, X2, offdiag_residual).  X1 is the m x m block on the
    negative speeds, X2 the (n-m) x (n-m) block on the positive speeds.
    Raises BlockCouplingTooLarge when the off-diagonal blocks are not
    negligible relative to the matrix scale.
    """
    A00 = np.asarray(A00, dtype=float)
    Li = spectrum0.L_inv
    W = Li.T @ A00 @ Li
    m = spectrum0.m
    X1 = W[:m, :m].copy()
    X2 = W[m:, m:].copy()
    off = 0.0
    if 0 < m < spectrum0.n:
        off = float(np.abs(W[:m, m:]).max())
    scale = np.abs(W).max() or 1.0
    if off > tol * scale * 10.0:
        raise BlockCouplingTooLarge(
            f"off-diagonal block norm {off:.3e} (scale {scale:.3e})"
        )
    return X1, X2, off


def check_partial_dissipativity(model, tol=DEFAULT_TOL, R=None):
    """Full structural report at U = 0.

    Checks P0 Q_U(0) P0^-1 = diag(0, S0), the source dissipation
    inequality with weight R (identity by default), and the boundary
    weight blocks.  Norms of the off-structure blocks are reported as
    diagnostics without a smallness judgment.
    """
    n, r = model.n, model.r
    U0 = np.zeros(n)
    A00 = np.asarray(model.A0(U0), dtype=float)
    QU0 = np.asarray(model.Q_U(U0), dtype=float)
    if R is None:
        R = np.eye(r)
    else:
        R = np.asarray(R, dtype=float)

    sym_res = check_symmetrizer(model, U0, tol)

    B = model.P0 @ QU0 @ model.P0_inv
    target = np.zeros((n, n))
    target[n - r:, n - r:] = model.S0
    pdq_res = float(np.abs(B - target).max())

    S_block = B[n - r:, n - r:]
    if np.abs(np.linalg.det(S_block)) <= max(tol, tol * np.abs(S_block).max() ** r):
        raise SNotInvertible(f"det of dissipative block {np.linalg.det(S_block):.3e}")

    Rfull = np.zeros((n, n))
    Rfull[n - r:, n - r:] = R
    lhs = A00 @ QU0 + QU0.T @ A00 + model.P0.T @ Rfull @ model.P0
    margin = -float(np.linalg.eigvalsh(0.5 * (lhs + lhs.T))[-1])

    from .matrixcore import spectral_decompose

    spec0 = spectral_decompose(np.asarray(model.A(U0), dtype=float), tol)
    X1, X2, off = compute_boundary_weights(spec0, A00, tol)
    X1_margin = float(np.linalg.eigvalsh(0.5 * (X1 + X1.T))[0])
    X2_margin = float(np.linalg.eigvalsh(0.5 * (X2 + X2.T))[0])

    s11 = float(np.abs(B[: n - r, : n - r]).max()) if n > r else 0.0
    s21 = float(np.abs(B[n - r:, : n - r]).max()) if n > r else 0.0

    scaleA = np.abs(np.asarray(model.A(U0))).max() or 1.0
    scaleA0 = np.abs(A00).max() or 1.0
    passed = (
        sym_res <= tol * scaleA * scaleA0
        and pdq_res <= tol * max(1.0, np.abs(QU0).max())
        and margin >= -tol
        and X1_margin > 0.0
        and X2_margin > 0.0
    )
    return StructureReport(
        symmetrizer_residual=sym_res,
        pdq_residual=pdq_res,
        dissipativity_margin=margin,
        X1=X1,
        X2=X2,
        X1_margin=X1_margin,
        X2_margin=X2_margin,
        block_offdiag_residual=off,
        generalized_S11_norm=s11,
        generalized_S21_norm=s21,
        passed=passed,
    )


def sample_neighborhood(model, rho, n_samples=32, seed=0, tol=DEFAULT_TOL):
    """Diagnostic: symmetrizer residual and A0 margin on random U, |U| <= rho.

    Not part of the pass/fail contract; the structure is only required at
    the equilibrium.
    """
    rng = np.random.default_rng(seed)
    worst_res, worst_margin = 0.0, np.inf
    for _ in range(n_samples):
        U = rng.uniform(-rho, rho, size=model.n)
        A0 = np.asarray(model.A0(U), dtype=float)
        margin = float(np.linalg.eigvalsh(0.5 * (A0 + A0.T))[0])
        worst_margin = min(worst_margin, margin)
        if margin > 0:
            worst_res = max(worst_res, check_symmetrizer(model, U, tol))
    return {"max_symmetrizer_residual": worst_res, "min_A0_margin": worst_margin}
