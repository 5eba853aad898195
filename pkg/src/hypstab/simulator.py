"""Method-of-lines solver for the closed-loop transformed system.

Solves V_t + A(V) V_x = B(V) on (0,1) in the transformed variables
V = P0 U, with characteristic feedback boundary conditions: the incoming
traces of xi = L(0) V are the gain matrix applied to the outgoing traces.
Space is discretized on cell centers with characteristic-variable
upwinding (the decomposition is frozen locally at each cell), time
stepping is three-stage SSP Runge-Kutta.

Two kernel lanes with identical semantics: a pure-numpy batched lane and
a numba lane (kernels.accelerated) with a fused step loop; choose with
SimConfig.backend or the HYPSTAB_BACKEND environment variable.
"""

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    BlowUp,
    DimensionMismatch,
    SpectralFailure,
    VanishingSpeed,
)
from .feedback import FeedbackGain
from .kernels import backend_name
from .kernels import reference as _ref
from .matrixcore import Spectrum, invert
from .structure import SystemModel

_T_EPS = 1e-14


# ---------------------------------------------------------------------------
# transformed model bundle

@dataclass
class TransformedModel:
    """Coefficient bundle of the system in the V = P0 U variables.

    A, B, B_V, A0, a_dir are callables of the transformed state; B_V0 is
    the source Jacobian at the origin (block diagonal (0, S(0)) when the
    structure checks pass).  compiled optionally holds (A_of, B_of) numba
    dispatchers for the accelerated lane.
    """

    n: int
    m: int
    r: int
    P0: np.ndarray
    P0_inv: np.ndarray
    A: Callable
    B: Callable
    B_V: Callable
    A0: Callable
    a_dir: Callable
    B_V0: np.ndarray
    compiled: Optional[tuple] = None

    @property
    def split(self):
        """Index where the dissipative block v2 starts."""
        return self.n - self.r


def transformed(model: SystemModel, compiled=None):
    """Build the V-variable coefficient bundle from a SystemModel."""
    P0 = np.asarray(model.P0, dtype=float)
    P0i = model.P0_inv

    def A_V(v):
        return P0 @ model.A(P0i @ v) @ P0i

    def B_fn(v):
        return P0 @ np.asarray(model.Q(P0i @ v), dtype=float)

    def B_V_fn(v):
        return P0 @ model.Q_U(P0i @ v) @ P0i

    def A0_V(v):
        return P0i.T @ model.A0(P0i @ v) @ P0i

    def a_dir_V(v, w):
        return P0 @ model.a_dir(P0i @ v, P0i @ w) @ P0i

    B_V0 = P0 @ np.asarray(model.Q_U(np.zeros(model.n)), dtype=float) @ P0i
    return TransformedModel(
        n=model.n, m=model.m, r=model.r, P0=P0, P0_inv=P0i,
        A=A_V, B=B_fn, B_V=B_V_fn, A0=A0_V, a_dir=a_dir_V,
        B_V0=B_V0, compiled=compiled,
    )


def spectrum_to_V(spectrum_U: Spectrum, P0, P0_inv) -> Spectrum:
    """Carry a spectrum of the U-variable Jacobian to the V variables.

    A_V(0) = P0 A(0) P0^-1, so left rows transform as L P0^-1 and the
    traces xi = L(0) U = L_V(0) V are unchanged.
    """
    return Spectrum(
        lam=spectrum_U.lam,
        m=spectrum_U.m,
        L=spectrum_U.L @ P0_inv,
        L_inv=np.asarray(P0) @ spectrum_U.L_inv,
    )


# ---------------------------------------------------------------------------
# field transforms

def transform_to_V(U_field, P0):
    """Apply V = P0 U along the last axis of a field."""
    return np.asarray(U_field, dtype=float) @ np.asarray(P0, dtype=float).T


def transform_to_U(V_field, P0):
    """Invert the transformation (guarded inverse of P0)."""
    P0i = invert(np.asarray(P0, dtype=float))
    return np.asarray(V_field, dtype=float) @ P0i.T


# ---------------------------------------------------------------------------
# state, boundary traces, configuration

@dataclass
class GridState:
    """Cell-centered field on (0,1) with boundary reconstruction values."""

    V: np.ndarray
    t: float = 0.0
    split: int = 0
    ghost_left: Optional[np.ndarray] = None
    ghost_right: Optional[np.ndarray] = None

    def __post_init__(self):
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        if not np.all(np.isfinite(self.V)):
            raise ValueError("non-finite entries in the state field")

    @property
    def N(self):
        return self.V.shape[0]

    @property
    def n(self):
        return self.V.shape[1]

    @property
    def dx(self):
        return 1.0 / self.N

    @property
    def x(self):
        return (np.arange(self.N) + 0.5) * self.dx

    def copy(self):
        return GridState(
            V=self.V.copy(), t=self.t, split=self.split,
            ghost_left=None if self.ghost_left is None else self.ghost_left.copy(),
            ghost_right=None if self.ghost_right is None else self.ghost_right.copy(),
        )


@dataclass(frozen=True)
class BoundaryTraces:
    """Characteristic traces at the two boundaries at one instant.

    Outgoing traces leave the domain (negative speeds at x=0, positive at
    x=1); incoming traces equal the gain matrix applied to the outgoing
    pair, exactly.  V_left and V_right are the reconstructed boundary
    state vectors (in V variables).
    """

    xi_out_left: np.ndarray
    xi_out_right: np.ndarray
    xi_in_left: np.ndarray
    xi_in_right: np.ndarray
    V_left: np.ndarray
    V_right: np.ndarray

    def stacked_outgoing(self):
        """(xi_plus(1); xi_minus(0)) in the gain matrix ordering."""
        return np.concatenate([self.xi_out_right, self.xi_out_left])

    def stacked_incoming(self):
        """(xi_plus(0); xi_minus(1))."""
        return np.concatenate([self.xi_in_left, self.xi_in_right])


@dataclass
class SimConfig:
    N: int = 200
    cfl: float = 0.5
    t_end: float = 1.0
    output_stride: int = 1
    blowup_cap: Optional[float] = None
    derivative_scheme: str = "central2"
    reconstruction_order: int = 2
    backend: str = "auto"
    max_steps: int = 50_000_000
    compat_tol: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.cfl < 1.0):
            raise ValueError(f"cfl must lie in (0,1), got {self.cfl}")
        if self.N < 16:
            raise ValueError(f"N must be at least 16, got {self.N}")
        if self.reconstruction_order not in (1, 2):
            raise ValueError("reconstruction_order must be 1 or 2")
        if self.derivative_scheme != "central2":
            raise ValueError(f"unknown derivative scheme {self.derivative_scheme!r}")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")


# ---------------------------------------------------------------------------
# boundary closure

def apply_boundary(state: GridState, spectrum0: Spectrum, K: FeedbackGain,
                   order=2) -> BoundaryTraces:
    """Close the boundary: traces, feedback, ghost reconstruction values.

    Outgoing traces of xi = L(0) V are extrapolated from the interior to
    the endpoints (copy for order 1, linear for order 2); incoming traces
    are the gain matrix applied to the outgoing pair; boundary state
    values are rebuilt through L(0)^-1 and stored on the state.
    """
    V = state.V
    n, m = spectrum0.n, spectrum0.m
    if V.shape[1] != n:
        raise DimensionMismatch(f"state has {V.shape[1]} fields, spectrum {n}")
    if order == 2 and state.N >= 2:
        vb0 = 1.5 * V[0] - 0.5 * V[1]
        vb1 = 1.5 * V[-1] - 0.5 * V[-2]
    else:
        vb0 = V[0].copy()
        vb1 = V[-1].copy()
    xi0 = spectrum0.L @ vb0
    xi1 = spectrum0.L @ vb1
    out = np.concatenate([xi1[m:], xi0[:m]])
    inc = K.K @ out
    xi_in_left = inc[: n - m]
    xi_in_right = inc[n - m:]
    full_left = np.concatenate([xi0[:m], xi_in_left])
    full_right = np.concatenate([xi_in_right, xi1[m:]])
    V_left = spectrum0.L_inv @ full_left
    V_right = spectrum0.L_inv @ full_right
    state.ghost_left = V_left
    state.ghost_right = V_right
    return BoundaryTraces(
        xi_out_left=xi0[:m].copy(),
        xi_out_right=xi1[m:].copy(),
        xi_in_left=xi_in_left.copy(),
        xi_in_right=xi_in_right.copy(),
        V_left=V_left,
        V_right=V_right,
    )


def _padded(state: GridState):
    """Ghost-padded field (N+4, n) from the boundary reconstruction values."""
    if state.ghost_left is None or state.ghost_right is None:
        raise ValueError("ghosts not current; call apply_boundary first")
    V = state.V
    N, n = V.shape
    Vg = np.empty((N + 4, n))
    Vg[2 : N + 2] = V
    Vg[1] = 2.0 * state.ghost_left - V[0]
    Vg[0] = 4.0 * state.ghost_left - 3.0 * V[0]
    Vg[N + 2] = 2.0 * state.ghost_right - V[-1]
    Vg[N + 3] = 4.0 * state.ghost_right - 3.0 * V[-1]
    return Vg


# ---------------------------------------------------------------------------
# semidiscrete operator (numpy lane)

def _cell_coefficients(tmodel: TransformedModel, V):
    Acells = np.empty((V.shape[0], tmodel.n, tmodel.n))
    Bcells = np.empty_like(V)
    for i in range(V.shape[0]):
        Acells[i] = tmodel.A(V[i])
        Bcells[i] = tmodel.B(V[i])
    return Acells, Bcells


def rhs(state: GridState, tmodel: TransformedModel, order=2):
    """dV/dt per cell; requires current ghosts."""
    Vg = _padded(state)
    Acells, Bcells = _cell_coefficients(tmodel, state.V)
    lam, L, L_inv = _ref.decompose_fields(Acells)
    return _ref.upwind_rates(Vg, state.dx, lam, L, L_inv, Bcells, order)


def max_speed(state: GridState, tmodel: TransformedModel):
    Acells, _ = _cell_coefficients(tmodel, state.V)
    lam, _, _ = _ref.decompose_fields(Acells)
    return float(np.abs(lam).max())


def cfl_dt(state: GridState, tmodel: TransformedModel, cfl):
    """dt = cfl * dx / (largest local characteristic speed)."""
    ms = max_speed(state, tmodel)
    if ms <= 0.0:
        raise VanishingSpeed("all characteristic speeds vanish")
    return cfl * state.dx / ms


def step(state: GridState, tmodel: TransformedModel, spectrum0: Spectrum,
         K: FeedbackGain, dt, config: SimConfig):
    """One SSP-RK3 step of size dt; returns a new GridState."""
    order = config.reconstruction_order
    cap = config.blowup_cap

    def rates(V):
        st = GridState(V=V, t=state.t, split=state.split)
        apply_boundary(st, spectrum0, K, order)
        return rhs(st, tmodel, order)

    V = state.V
    V1 = V + dt * rates(V)
    V2 = 0.75 * V + 0.25 * (V1 + dt * rates(V1))
    Vn = V / 3.0 + (2.0 / 3.0) * (V2 + dt * rates(V2))
    new = GridState(V=Vn, t=state.t + dt, split=state.split)
    if cap is not None and np.abs(Vn).max() > cap:
        raise BlowUp(
            f"state max-norm {np.abs(Vn).max():.3e} exceeded cap {cap:.3e}",
            t=new.t, last_state=new,
        )
    return new


# ---------------------------------------------------------------------------
# derivative fields for the Lyapunov functionals

def _dx_fields(V, dx):
    """(V_x, V_xx) by central differences, second-order one-sided at edges."""
    V_x = np.empty_like(V)
    V_xx = np.empty_like(V)
    V_x[1:-1] = (V[2:] - V[:-2]) / (2.0 * dx)
    V_x[0] = (-3.0 * V[0] + 4.0 * V[1] - V[2]) / (2.0 * dx)
    V_x[-1] = (3.0 * V[-1] - 4.0 * V[-2] + V[-3]) / (2.0 * dx)
    V_xx[1:-1] = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / dx**2
    V_xx[0] = (2.0 * V[0] - 5.0 * V[1] + 4.0 * V[2] - V[3]) / dx**2
    V_xx[-1] = (2.0 * V[-1] - 5.0 * V[-2] + 4.0 * V[-3] - V[-4]) / dx**2
    return V_x, V_xx


def time_derivatives(state: GridState, tmodel: TransformedModel):
    """(V_t, V_tt) fields evaluated from the PDE, not from time sampling.

    V_t = -A(V) V_x + B(V);
    V_tx = -A(V) V_xx + B_V(V) V_x - (A'(V) V_x) V_x;
    V_tt = -A(V) V_tx + B_V(V) V_t - (A'(V) V_t) V_x.
    """
    V = state.V
    V_x, V_xx = _dx_fields(V, state.dx)
    V_t = np.empty_like(V)
    V_tt = np.empty_like(V)
    for i in range(state.N):
        A = tmodel.A(V[i])
        BV = tmodel.B_V(V[i])
        vt = -A @ V_x[i] + tmodel.B(V[i])
        vtx = -A @ V_xx[i] + BV @ V_x[i] - tmodel.a_dir(V[i], V_x[i]) @ V_x[i]
        V_t[i] = vt
        V_tt[i] = -A @ vtx + BV @ vt - tmodel.a_dir(V[i], vt) @ V_x[i]
    return V_t, V_tt


# ---------------------------------------------------------------------------
# full runs

@dataclass
class Trajectory:
    """Sampled closed-loop run: states, boundary traces, bookkeeping."""

    states: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    steps_total: int = 0
    reached_t_end: bool = False

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def sample(self, state, trace):
        self.states.append(state)
        self.traces.append(trace)


def _compat_residual(state, spectrum0, K, tmodel, order):
    """Max-norm defect of the feedback relation on the data (and its V_t)."""
    tr = apply_boundary(state, spectrum0, K, order)
    n, m = spectrum0.n, spectrum0.m
    V = state.V
    if order == 2 and state.N >= 2:
        vb0 = 1.5 * V[0] - 0.5 * V[1]
        vb1 = 1.5 * V[-1] - 0.5 * V[-2]
    else:
        vb0, vb1 = V[0], V[-1]
    res = 0.0
    for W in (state.V, None):
        if W is None:
            V_t, _ = time_derivatives(state, tmodel)
            if order == 2:
                vb0 = 1.5 * V_t[0] - 0.5 * V_t[1]
                vb1 = 1.5 * V_t[-1] - 0.5 * V_t[-2]
            else:
                vb0, vb1 = V_t[0], V_t[-1]
        xi0 = spectrum0.L @ vb0
        xi1 = spectrum0.L @ vb1
        out = np.concatenate([xi1[m:], xi0[:m]])
        inc = np.concatenate([xi0[m:], xi1[:m]])
        defect = np.abs(inc - K.K @ out).max()
        scale = max(1.0, np.abs(out).max(), np.abs(inc).max())
        res = max(res, defect / scale)
    return res, tr


def run(tmodel: TransformedModel, spectrum0: Spectrum, K: FeedbackGain,
        V0_field, config: SimConfig):
    """Advance the closed loop to t_end, sampling every output_stride steps.

    Raises BlowUp when the cap is exceeded and SpectralFailure when the
    local decomposition leaves the hyperbolic regime.  A violated discrete
    compatibility condition in the initial data produces a warning only.
    """
    V0 = np.atleast_2d(np.asarray(V0_field, dtype=float))
    if V0.shape != (config.N, tmodel.n):
        raise DimensionMismatch(
            f"initial field shape {V0.shape} != ({config.N}, {tmodel.n})"
        )
    cap = config.blowup_cap
    if cap is None:
        m0 = float(np.abs(V0).max())
        cap = 1e6 * m0 if m0 > 0.0 else 1.0

    order = config.reconstruction_order
    state = GridState(V=V0.copy(), t=0.0, split=tmodel.split)
    compat, trace0 = _compat_residual(state, spectrum0, K, tmodel, order)
    if compat > config.compat_tol:
        warnings.warn(
            f"initial data violates the discrete compatibility conditions "
            f"(residual {compat:.3e}); classical well-posedness is not "
            f"guaranteed", stacklevel=2,
        )

    traj = Trajectory()
    traj.sample(state.copy(), trace0)

    lane = backend_name(config.backend)
    if lane == "numba" and tmodel.compiled is None:
        warnings.warn("no compiled coefficients on the model; "
                      "falling back to the numpy lane", stacklevel=2)
        lane = "numpy"

    if lane == "numba":
        _run_numba(traj, state, tmodel, spectrum0, K, config, cap)
    else:
        _run_numpy(traj, state, tmodel, spectrum0, K, config, cap)
    return traj


def _finish_sample(traj, V, t, split, spectrum0, K, order):
    st = GridState(V=V.copy(), t=t, split=split)
    tr = apply_boundary(st, spectrum0, K, order)
    traj.sample(st, tr)


def _run_numba(traj, state, tmodel, spectrum0, K, config, cap):
    from . import kernels
    from .kernels import accelerated as _acc

    A_of, B_of = tmodel.compiled
    L0 = np.ascontiguousarray(spectrum0.L)
    L0_inv = np.ascontiguousarray(spectrum0.L_inv)
    Kmat = np.ascontiguousarray(K.K)
    V = np.ascontiguousarray(state.V)
    t = state.t
    dx = state.dx
    while True:
        try:
            V, t, took, status = _acc.run_chunk(
                V, t, config.t_end, dx, config.output_stride, config.cfl,
                config.reconstruction_order, L0, L0_inv, Kmat, spectrum0.m,
                A_of, B_of, cap,
            )
        except ValueError as exc:
            raise SpectralFailure(
                f"characteristic decomposition failed in the compiled "
                f"kernel: {exc}"
            ) from exc
        traj.steps_total += took
        if status == _acc.BLOWUP:
            _finish_sample(traj, V, t, state.split, spectrum0, K,
                           config.reconstruction_order)
            raise BlowUp(
                f"state max-norm exceeded cap {cap:.3e} at t={t:.6g}",
                t=t, last_state=traj.states[-1],
            )
        if status == _acc.VANISHING:
            raise VanishingSpeed("all characteristic speeds vanished mid-run")
        if took > 0:
            _finish_sample(traj, V, t, state.split, spectrum0, K,
                           config.reconstruction_order)
        if status == _acc.REACHED_END:
            traj.reached_t_end = True
            break
        if traj.steps_total >= config.max_steps:
            break


def _run_numpy(traj, state, tmodel, spectrum0, K, config, cap):
    order = config.reconstruction_order
    t_end = config.t_end

    def rates(V, t):
        st = GridState(V=V, t=t, split=state.split)
        apply_boundary(st, spectrum0, K, order)
        Vg = _padded(st)
        Acells, Bcells = _cell_coefficients(tmodel, V)
        lam, L, L_inv = _ref.decompose_fields(Acells)
        dV = _ref.upwind_rates(Vg, st.dx, lam, L, L_inv, Bcells, order)
        return dV, float(np.abs(lam).max())

    V = state.V
    t = state.t
    since_sample = 0
    while t < t_end - _T_EPS * (1.0 + abs(t_end)):
        if traj.steps_total >= config.max_steps:
            return
        dV1, ms = rates(V, t)
        if ms <= 0.0:
            raise VanishingSpeed("all characteristic speeds vanished mid-run")
        dt = config.cfl * state.dx / ms
        if t + dt > t_end:
            dt = t_end - t
        V1 = V + dt * dV1
        dV2, _ = rates(V1, t)
        V2 = 0.75 * V + 0.25 * (V1 + dt * dV2)
        dV3, _ = rates(V2, t)
        V = V / 3.0 + (2.0 / 3.0) * (V2 + dt * dV3)
        t += dt
        traj.steps_total += 1
        since_sample += 1
        if np.abs(V).max() > cap:
            _finish_sample(traj, V, t, state.split, spectrum0, K, order)
            raise BlowUp(
                f"state max-norm exceeded cap {cap:.3e} at t={t:.6g}",
                t=t, last_state=traj.states[-1],
            )
        if since_sample >= config.output_stride:
            _finish_sample(traj, V, t, state.split, spectrum0, K, order)
            since_sample = 0
    if since_sample > 0:
        _finish_sample(traj, V, t, state.split, spectrum0, K, order)
    traj.reached_t_end = True


# ---------------------------------------------------------------------------
# CSV export

def _fmt(v):
    return format(float(v), ".17g")


def export_trajectory_csv(traj: Trajectory, P0, path):
    """One row per (sample time, cell): t, x, V_1..V_n, U_1..U_n."""
    P0i = invert(np.asarray(P0, dtype=float))
    n = traj.states[0].n
    header = (["t", "x"]
              + [f"V_{j + 1}" for j in range(n)]
              + [f"U_{j + 1}" for j in range(n)])
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter=",")
        w.writerow(header)
        for st in traj.states:
            U = st.V @ P0i.T
            x = st.x
            for i in range(st.N):
                w.writerow([_fmt(st.t), _fmt(x[i])]
                           + [_fmt(v) for v in st.V[i]]
                           + [_fmt(u) for u in U[i]])


def export_traces_csv(traj: Trajectory, path):
    """Boundary trace history: t plus the four trace blocks."""
    tr0 = traj.traces[0]
    header = ["t"]
    header += [f"xi_out_left_{j + 1}" for j in range(tr0.xi_out_left.size)]
    header += [f"xi_in_left_{j + 1}" for j in range(tr0.xi_in_left.size)]
    header += [f"xi_out_right_{j + 1}" for j in range(tr0.xi_out_right.size)]
    header += [f"xi_in_right_{j + 1}" for j in range(tr0.xi_in_right.size)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter=",")
        w.writerow(header)
        for st, tr in zip(traj.states, traj.traces):
            row = [_fmt(st.t)]
            for block in (tr.xi_out_left, tr.xi_in_left,
                          tr.xi_out_right, tr.xi_in_right):
                row += [_fmt(v) for v in block]
            w.writerow(row)
