"""Weighted Lyapunov functionals and decay-rate estimation.

The certified quantity is L(t) = L0 + L1 + L2, where each Lk integrates
the quadratic form of the k-th time derivative of the state against the
weight

    W(V, x) = alpha * A0(V) + L(V)^T diag(e^{-lambda_i(0) x}) L(V),

with A0 the transformed symmetrizer and L(V) the left-eigenvector matrix
of the transformed flux Jacobian, row-scaled to match the reference
spectrum at V = 0 (the admissibility inequalities are tied to that
scaling).  Decay is certified empirically by a log-linear fit of the
discrete H2-type energy.
"""

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InsufficientSamples,
    NonPDWeight,
    NonPositiveAlpha,
    NonPositiveEnergy,
)
from .kernels import reference as _ref
from .matrixcore import Spectrum
from .simulator import GridState, Trajectory, TransformedModel, time_derivatives

#: candidate grid for the alpha calibration (geometric, paper requires
#: alpha above non-constructive constants)
_ALPHA_GRID = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


# ---------------------------------------------------------------------------
# weights

def _rescaled_left_eigenvectors(Acells, spectrum0):
    """Batched L(V) rows scaled to agree with spectrum0.L at V = 0.

    spectral rows come out of the batched decomposition with unit
    max-norm; dividing by diag(L_raw @ L0^-1) restores the reference
    scaling continuously in V.
    """
    lam, Lraw, _ = _ref.decompose_fields(Acells)
    d = np.einsum("mrj,jr->mr", Lraw, spectrum0.L_inv)
    if np.abs(d).min() < 1e-10:
        raise NonPDWeight("eigenvector rows became orthogonal to the "
                          "reference scaling; state left the neighborhood")
    return lam, Lraw / d[:, :, None]


def weight_matrix(V, x, alpha, tmodel: TransformedModel, spectrum0: Spectrum):
    """Pointwise Lyapunov weight W(V, x); symmetric positive definite."""
    if alpha <= 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
    V = np.asarray(V, dtype=float)
    _, Lv = _rescaled_left_eigenvectors(tmodel.A(V)[None], spectrum0)
    Lv = Lv[0]
    w = np.exp(-spectrum0.lam * x)
    W = alpha * tmodel.A0(V) + Lv.T @ (w[:, None] * Lv)
    W = 0.5 * (W + W.T)
    if np.linalg.eigvalsh(W).min() <= 0:
        raise NonPDWeight(f"weight matrix not PD at x={x}")
    return W


def _field_weights(state: GridState, tmodel, spectrum0):
    """Per-cell (A0 part, exponential part, eig ranges of both summed later).

    Returns (A0cells, Ecells) so the alpha dependence stays linear:
    W_i(alpha) = alpha * A0cells[i] + Ecells[i].
    """
    V = state.V
    N = V.shape[0]
    Acells = np.empty((N, tmodel.n, tmodel.n))
    A0cells = np.empty_like(Acells)
    for i in range(N):
        Acells[i] = tmodel.A(V[i])
        A0cells[i] = tmodel.A0(V[i])
    _, Lv = _rescaled_left_eigenvectors(Acells, spectrum0)
    w = np.exp(-np.outer(state.x, spectrum0.lam))
    Ecells = np.einsum("mri,mr,mrj->mij", Lv, w, Lv)
    A0cells = 0.5 * (A0cells + np.swapaxes(A0cells, 1, 2))
    return A0cells, Ecells


def _quad(Wcells, F):
    return float(np.einsum("mi,mij,mj->", F, Wcells, F))


def evaluate_parts(state: GridState, V_t, V_tt, tmodel, spectrum0):
    """Alpha-independent split of (L0, L1, L2).

    Returns (qa, qe): 3-vectors with L_k(alpha) = alpha*qa[k] + qe[k].
    """
    A0cells, Ecells = _field_weights(state, tmodel, spectrum0)
    dx = state.dx
    qa = np.array([_quad(A0cells, F) for F in (state.V, V_t, V_tt)]) * dx
    qe = np.array([_quad(Ecells, F) for F in (state.V, V_t, V_tt)]) * dx
    return qa, qe


def evaluate(state: GridState, V_t, V_tt, alpha, tmodel, spectrum0,
             check_pd=True):
    """(L0, L1, L2) by midpoint quadrature of the weighted quadratic forms."""
    if alpha <= 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
    A0cells, Ecells = _field_weights(state, tmodel, spectrum0)
    Wcells = alpha * A0cells + Ecells
    Wcells = 0.5 * (Wcells + np.swapaxes(Wcells, 1, 2))
    if check_pd:
        mins = np.linalg.eigvalsh(Wcells)[:, 0]
        if mins.min() <= 0.0:
            i = int(mins.argmin())
            raise NonPDWeight(
                f"weight matrix lost positive definiteness at cell {i} "
                f"(min eigenvalue {mins.min():.3e})"
            )
    dx = state.dx
    return tuple(_quad(Wcells, F) * dx for F in (state.V, V_t, V_tt))


def weight_eig_range(state: GridState, alpha, tmodel, spectrum0):
    """(min, max) eigenvalue of the weight matrices over all cells."""
    A0cells, Ecells = _field_weights(state, tmodel, spectrum0)
    Wcells = alpha * A0cells + Ecells
    Wcells = 0.5 * (Wcells + np.swapaxes(Wcells, 1, 2))
    ev = np.linalg.eigvalsh(Wcells)
    return float(ev[:, 0].min()), float(ev[:, -1].max())


# ---------------------------------------------------------------------------
# energies

def discrete_h2_energy(state: GridState, V_t, V_tt):
    """(E_H2, E_v1, E_v2): total and block-split discrete energies.

    E = sum_i dx (|V_i|^2 + |V_t,i|^2 + |V_tt,i|^2); the split uses the
    state's v1/v2 partition index.
    """
    dx = state.dx
    s = state.split
    total = v1 = v2 = 0.0
    for F in (state.V, V_t, V_tt):
        sq = F * F
        total += sq.sum()
        v1 += sq[:, :s].sum()
        v2 += sq[:, s:].sum()
    return total * dx, v1 * dx, v2 * dx


# ---------------------------------------------------------------------------
# traces along trajectories

@dataclass
class LyapunovTrace:
    """Functional values sampled along a trajectory.

    samples rows are (t, L0, L1, L2, Ltotal, E_H2, E_v1, E_v2); fitted is
    filled by fit_decay_rate.
    """

    samples: np.ndarray
    alpha: float
    fitted: Optional[dict] = None

    @property
    def t(self):
        return self.samples[:, 0]

    @property
    def Ltotal(self):
        return self.samples[:, 4]

    @property
    def E_H2(self):
        return self.samples[:, 5]

    def to_csv(self, path):
        header = ["t", "L0", "L1", "L2", "Ltotal", "E_H2", "E_v1", "E_v2"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f, delimiter=",")
            w.writerow(header)
            for row in self.samples:
                w.writerow([format(float(v), ".17g") for v in row])

    def fit_to_json(self, path):
        if self.fitted is None:
            raise ValueError("no fit attached; call fit_decay_rate first")
        payload = {
            "nu_hat": self.fitted["nu_hat"],
            "window": list(self.fitted["window"]),
            "residual": self.fitted["residual"],
            "alpha": self.alpha,
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")


def calibrate_alpha(qa_list, qe_list, rel_tol=1e-8):
    """Smallest grid alpha making the total functional non-increasing.

    qa_list/qe_list hold the per-sample alpha-linear parts summed over
    k = 0,1,2.  Falls back to the alpha with the fewest monotonicity
    violations when none is clean.
    """
    qa = np.asarray(qa_list, dtype=float)
    qe = np.asarray(qe_list, dtype=float)
    best_alpha, best_viol = None, None
    for alpha in _ALPHA_GRID:
        tot = alpha * qa + qe
        dif = np.diff(tot)
        viol = int((dif > rel_tol * np.maximum(tot[:-1], 1e-300)).sum())
        if viol == 0:
            return float(alpha)
        if best_viol is None or viol < best_viol:
            best_alpha, best_viol = float(alpha), viol
    return best_alpha


def build_trace(traj: Trajectory, tmodel: TransformedModel,
                spectrum0: Spectrum, alpha=None, check_pd=True,
                check_bracketing=True):
    """Evaluate the functionals along all samples of a trajectory.

    alpha = None triggers the calibration described in calibrate_alpha
    (the theory only provides a non-constructive lower bound for alpha).
    The H2-equivalence bracketing c1*E_H2 <= Ltotal <= c2*E_H2 with c1, c2
    the extreme weight eigenvalues is asserted per sample.
    """
    parts = []
    energies = []
    derivs = []
    for st in traj.states:
        V_t, V_tt = time_derivatives(st, tmodel)
        derivs.append((V_t, V_tt))
        parts.append(evaluate_parts(st, V_t, V_tt, tmodel, spectrum0))
        energies.append(discrete_h2_energy(st, V_t, V_tt))
    if alpha is None:
        qa_tot = [qa.sum() for qa, _ in parts]
        qe_tot = [qe.sum() for _, qe in parts]
        alpha = calibrate_alpha(qa_tot, qe_tot)
    if alpha is None or alpha <= 0:
        raise NonPositiveAlpha(f"calibration produced alpha={alpha!r}")

    rows = np.empty((len(traj.states), 8))
    for i, st in enumerate(traj.states):
        qa, qe = parts[i]
        Lk = alpha * qa + qe
        if check_pd or check_bracketing:
            lo, hi = weight_eig_range(st, alpha, tmodel, spectrum0)
            if check_pd and lo <= 0.0:
                raise NonPDWeight(
                    f"weight matrix lost positive definiteness at sample "
                    f"t={st.t:.6g} (min eigenvalue {lo:.3e})"
                )
            E = energies[i][0]
            tot = float(Lk.sum())
            slack = 1e-9 * max(abs(tot), hi * E, 1e-300)
            if check_bracketing and not (
                lo * E - slack <= tot <= hi * E + slack
            ):
                raise AssertionError(
                    f"H2 bracketing failed at t={st.t:.6g}: "
                    f"{lo * E:.6e} <= {tot:.6e} <= {hi * E:.6e}"
                )
        if Lk.min() < 0:
            raise NonPDWeight(
                f"negative functional value at t={st.t:.6g}: {Lk}"
            )
        rows[i] = (st.t, Lk[0], Lk[1], Lk[2], Lk.sum(), *energies[i])
    return LyapunovTrace(samples=rows, alpha=float(alpha))


# ---------------------------------------------------------------------------
# decay fit

def fit_decay_rate(trace: LyapunovTrace, window):
    """Least-squares exponential decay rate of the H2 energy.

    Fits ln E_H2 against t over t in [t_lo, t_hi]; nu_hat = -slope/2 so
    the state norm decays like e^{-nu_hat t}.  Returns (nu_hat, residual)
    and attaches the fit to the trace.
    """
    t_lo, t_hi = window
    t = trace.t
    mask = (t >= t_lo) & (t <= t_hi)
    if int(mask.sum()) < 10:
        raise InsufficientSamples(
            f"only {int(mask.sum())} samples in window {window!r}; need 10"
        )
    E = trace.E_H2[mask]
    if E.min() <= 0.0:
        raise NonPositiveEnergy("H2 energy must be strictly positive to fit")
    ts = t[mask]
    logE = np.log(E)
    slope, intercept = np.polyfit(ts, logE, 1)
    resid = logE - (slope * ts + intercept)
    residual = float(np.sqrt(np.mean(resid**2)))
    nu_hat = float(-slope / 2.0)
    trace.fitted = {
        "nu_hat": nu_hat,
        "window": (float(t_lo), float(t_hi)),
        "residual": residual,
    }
    return nu_hat, residual
