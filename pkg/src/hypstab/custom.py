"""User-defined models from JSON parameter files.

Custom systems belong to a fixed parametric family instead of a plugin
interface: the flux Jacobian is affine in the state,

    A(U) = Ac0 + sum_k U_k * Ac[k],

and the source is quadratic-rational,

    Q(U) = (C U + q(U)) / (1 + d . U),   q_k(U) = U^T Quad[k] U,

which covers every closed form the built-in river model needs while
keeping the file format declarative.  The symmetrizer may be constant or
affine in the same sense.  Jacobians and directional derivatives are
analytic.
"""

import json

import numpy as np

from .errors import DimensionMismatch
from .structure import SystemModel


def _as_matrix(raw, n, name):
    M = np.asarray(raw, dtype=float)
    if M.shape != (n, n):
        raise DimensionMismatch(f"{name} must be {n}x{n}, got {M.shape}")
    return M


def _as_stack(raw, n, name):
    if raw is None:
        return np.zeros((n, n, n))
    T = np.asarray(raw, dtype=float)
    if T.shape != (n, n, n):
        raise DimensionMismatch(f"{name} must be {n} matrices {n}x{n}, got {T.shape}")
    return T


def model_from_dict(raw):
    """Build a SystemModel from a decoded custom-model dictionary.

    Required keys: n, m, r, A0c (constant part of A), P0, S0.  Optional:
    Ak (stack of n matrices), source {C, quad, d}, sym (constant
    symmetrizer A0c0) and sym_k (affine part); sym defaults to identity.
    """
    n = int(raw["n"])
    m = int(raw["m"])
    r = int(raw["r"])
    if not (0 < m < n) or not (0 <= r <= n):
        raise DimensionMismatch(f"need 0 < m < n and 0 <= r <= n, got {n, m, r}")

    Ac0 = _as_matrix(raw["A0c"], n, "A0c")
    Ak = _as_stack(raw.get("Ak"), n, "Ak")

    src = raw.get("source", {})
    C = np.asarray(src.get("C", np.zeros((n, n))), dtype=float)
    if C.shape != (n, n):
        raise DimensionMismatch(f"source C must be {n}x{n}")
    Quad = _as_stack(src.get("quad"), n, "source quad")
    d = np.asarray(src.get("d", np.zeros(n)), dtype=float)
    if d.shape != (n,):
        raise DimensionMismatch(f"source d must have length {n}")

    sym0 = np.asarray(raw.get("sym", np.eye(n)), dtype=float)
    if sym0.shape != (n, n):
        raise DimensionMismatch(f"sym must be {n}x{n}")
    sym_k = _as_stack(raw.get("sym_k"), n, "sym_k")

    P0 = _as_matrix(raw["P0"], n, "P0")
    S0 = np.asarray(raw["S0"], dtype=float).reshape(r, r)

    def A(U):
        U = np.asarray(U, dtype=float)
        return Ac0 + np.einsum("k,kij->ij", U, Ak)

    def A_dir(U, W):
        W = np.asarray(W, dtype=float)
        return np.einsum("k,kij->ij", W, Ak)

    def Q(U):
        U = np.asarray(U, dtype=float)
        num = C @ U + np.einsum("i,kij,j->k", U, Quad, U)
        return num / (1.0 + d @ U)

    def Q_U(U):
        U = np.asarray(U, dtype=float)
        den = 1.0 + d @ U
        num = C @ U + np.einsum("i,kij,j->k", U, Quad, U)
        J = C + np.einsum("kij,j->ki", Quad + np.swapaxes(Quad, 1, 2), U)
        return J / den - np.outer(num, d) / den**2

    def A0(U):
        U = np.asarray(U, dtype=float)
        return sym0 + np.einsum("k,kij->ij", U, sym_k)

    return SystemModel(n=n, m=m, r=r, A=A, Q=Q, Q_U=Q_U, A0=A0,
                       P0=P0, S0=S0, A_dir=A_dir)


def load_model(path):
    """Load a custom model description from a JSON file."""
    with open(path) as f:
        raw = json.load(f)
    return model_from_dict(raw)
