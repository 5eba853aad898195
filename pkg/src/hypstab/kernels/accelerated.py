"""Numba-jitted solver kernels.

The hot path is a fused SSP-RK3 step: ghost construction from the
characteristic feedback map, per-cell left eigendecomposition of the
local flux Jacobian (closed-form for 3x3, LAPACK otherwise), upwind
differences in the local characteristic variables, and the stage update.
The model enters through compiled coefficient callbacks A_of(V) and
B_of(V).

Cross-checked against kernels.reference in the test suite; select with
HYPSTAB_BACKEND.
"""

import numpy as np
from numba import njit

# status codes returned by run_chunk
OK = 0
REACHED_END = 1
BLOWUP = 2
VANISHING = 3


@njit(cache=True, nogil=True)
def _cubic_roots(c2, c1, c0):
    """Real roots of lam^3 - c2 lam^2 + c1 lam - c0, ascending.

    Trigonometric form with two Newton polish sweeps.  Returns NaNs when
    the depressed cubic is not in the three-distinct-real-roots regime.
    """
    s = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = -2.0 * c2**3 / 27.0 + c1 * c2 / 3.0 - c0
    if p >= 0.0:
        return np.nan, np.nan, np.nan
    u = -p
    arg = -1.5 * np.sqrt(3.0) * q / (u * np.sqrt(u))
    if arg > 1.0:
        arg = 1.0
    elif arg < -1.0:
        arg = -1.0
    phi = np.arccos(arg)
    amp = 2.0 * np.sqrt(u / 3.0)
    r0 = amp * np.cos(phi / 3.0) + s
    r1 = amp * np.cos(phi / 3.0 - 2.0 * np.pi / 3.0) + s
    r2 = amp * np.cos(phi / 3.0 - 4.0 * np.pi / 3.0) + s
    lo = min(r0, min(r1, r2))
    hi = max(r0, max(r1, r2))
    mid = r0 + r1 + r2 - lo - hi
    out = np.empty(3)
    out[0], out[1], out[2] = lo, mid, hi
    for k in range(3):
        lam = out[k]
        for _ in range(2):
            f = ((lam - c2) * lam + c1) * lam - c0
            df = (3.0 * lam - 2.0 * c2) * lam + c1
            if df != 0.0:
                lam -= f / df
        out[k] = lam
    return out[0], out[1], out[2]


@njit(cache=True, nogil=True)
def _decompose3(A, lam, L, L_inv):
    """Closed-form left eigendecomposition of a 3x3 real-spectrum matrix.

    Fills lam (ascending), L, L_inv in place; returns False when the
    analytic route is unreliable (near-multiple roots or large residual)
    so the caller can fall back to LAPACK.  Fully scalarized: no
    temporaries are allocated on this path.
    """
    a00, a01, a02 = A[0, 0], A[0, 1], A[0, 2]
    a10, a11, a12 = A[1, 0], A[1, 1], A[1, 2]
    a20, a21, a22 = A[2, 0], A[2, 1], A[2, 2]
    c2 = a00 + a11 + a22
    c1 = (a00 * a11 - a01 * a10
          + a00 * a22 - a02 * a20
          + a11 * a22 - a12 * a21)
    c0 = (a00 * (a11 * a22 - a12 * a21)
          - a01 * (a10 * a22 - a12 * a20)
          + a02 * (a10 * a21 - a11 * a20))
    l0, l1, l2 = _cubic_roots(c2, c1, c0)
    if np.isnan(l0):
        return False
    lam[0], lam[1], lam[2] = l0, l1, l2

    scale = abs(a00)
    for i in range(3):
        for j in range(3):
            if abs(A[i, j]) > scale:
                scale = abs(A[i, j])
    if scale == 0.0:
        return False

    for k in range(3):
        m00 = a00 - lam[k]
        m11 = a11 - lam[k]
        m22 = a22 - lam[k]
        # rows of adj(A - lam I) span the left null space
        r00 = m11 * m22 - a12 * a21
        r01 = -(a01 * m22 - a02 * a21)
        r02 = a01 * a12 - a02 * m11
        r10 = -(a10 * m22 - a12 * a20)
        r11 = m00 * m22 - a02 * a20
        r12 = -(m00 * a12 - a02 * a10)
        r20 = a10 * a21 - m11 * a20
        r21 = -(m00 * a21 - a01 * a20)
        r22 = m00 * m11 - a01 * a10
        n0 = abs(r00) + abs(r01) + abs(r02)
        n1 = abs(r10) + abs(r11) + abs(r12)
        n2 = abs(r20) + abs(r21) + abs(r22)
        if n0 >= n1 and n0 >= n2:
            b0, b1, b2, bn = r00, r01, r02, n0
        elif n1 >= n2:
            b0, b1, b2, bn = r10, r11, r12, n1
        else:
            b0, b1, b2, bn = r20, r21, r22, n2
        if bn <= 1e-13 * scale * scale:
            return False
        piv = b0
        if abs(b1) > abs(piv):
            piv = b1
        if abs(b2) > abs(piv):
            piv = b2
        L[k, 0] = b0 / piv
        L[k, 1] = b1 / piv
        L[k, 2] = b2 / piv
        # residual of the eigen-relation guards against root clustering
        res = 0.0
        for j in range(3):
            r = L[k, 0] * A[0, j] + L[k, 1] * A[1, j] + L[k, 2] * A[2, j] \
                - lam[k] * L[k, j]
            if abs(r) > res:
                res = abs(r)
        if res > 1e-7 * scale:
            return False

    det = (L[0, 0] * (L[1, 1] * L[2, 2] - L[1, 2] * L[2, 1])
           - L[0, 1] * (L[1, 0] * L[2, 2] - L[1, 2] * L[2, 0])
           + L[0, 2] * (L[1, 0] * L[2, 1] - L[1, 1] * L[2, 0]))
    if abs(det) <= 1e-12:
        return False
    L_inv[0, 0] = (L[1, 1] * L[2, 2] - L[1, 2] * L[2, 1]) / det
    L_inv[0, 1] = -(L[0, 1] * L[2, 2] - L[0, 2] * L[2, 1]) / det
    L_inv[0, 2] = (L[0, 1] * L[1, 2] - L[0, 2] * L[1, 1]) / det
    L_inv[1, 0] = -(L[1, 0] * L[2, 2] - L[1, 2] * L[2, 0]) / det
    L_inv[1, 1] = (L[0, 0] * L[2, 2] - L[0, 2] * L[2, 0]) / det
    L_inv[1, 2] = -(L[0, 0] * L[1, 2] - L[0, 2] * L[1, 0]) / det
    L_inv[2, 0] = (L[1, 0] * L[2, 1] - L[1, 1] * L[2, 0]) / det
    L_inv[2, 1] = -(L[0, 0] * L[2, 1] - L[0, 1] * L[2, 0]) / det
    L_inv[2, 2] = (L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]) / det
    return True


@njit(cache=True, nogil=True)
def _decompose_general(A, lam, L, L_inv):
    """LAPACK route: left eigenvectors via eig of the transpose."""
    w, vr = np.linalg.eig(A.T.copy())
    order = np.argsort(w)
    n = A.shape[0]
    for k in range(n):
        lam[k] = w[order[k]]
        piv = vr[0, order[k]]
        for i in range(1, n):
            if abs(vr[i, order[k]]) > abs(piv):
                piv = vr[i, order[k]]
        for j in range(n):
            L[k, j] = vr[j, order[k]] / piv
    L_inv[:, :] = np.linalg.inv(L)


@njit(cache=True, nogil=True)
def ghost_fill(V, L0, L0_inv, K, m, order):
    """Ghost-padded field from the characteristic feedback closure.

    Outgoing traces are extrapolated to the endpoints (copy or linear),
    incoming traces are K times the outgoing pair, and the endpoint state
    vectors are written into two ghost layers per side by linear
    extrapolation through the boundary value.
    """
    N, n = V.shape
    if order == 2:
        vb0 = 1.5 * V[0] - 0.5 * V[1]
        vb1 = 1.5 * V[N - 1] - 0.5 * V[N - 2]
    else:
        vb0 = V[0].copy()
        vb1 = V[N - 1].copy()
    xi0 = L0 @ vb0
    xi1 = L0 @ vb1
    out = np.empty(n)
    for j in range(n - m):
        out[j] = xi1[m + j]
    for j in range(m):
        out[n - m + j] = xi0[j]
    inc = K @ out
    full_l = np.empty(n)
    full_r = np.empty(n)
    for j in range(m):
        full_l[j] = xi0[j]
        full_r[j] = inc[n - m + j]
    for j in range(n - m):
        full_l[m + j] = inc[j]
        full_r[m + j] = xi1[m + j]
    Vb0 = L0_inv @ full_l
    Vb1 = L0_inv @ full_r

    Vg = np.empty((N + 4, n))
    Vg[2 : N + 2] = V
    for j in range(n):
        Vg[1, j] = 2.0 * Vb0[j] - V[0, j]
        Vg[0, j] = 4.0 * Vb0[j] - 3.0 * V[0, j]
        Vg[N + 2, j] = 2.0 * Vb1[j] - V[N - 1, j]
        Vg[N + 3, j] = 4.0 * Vb1[j] - 3.0 * V[N - 1, j]
    return Vg


@njit(nogil=True)
def stage_rates(Vg, dx, order, A_of, B_of):
    """(dV/dt, max characteristic speed) for one stage."""
    N = Vg.shape[0] - 4
    n = Vg.shape[1]
    dV = np.empty((N, n))
    lam = np.empty(n)
    L = np.empty((n, n))
    L_inv = np.empty((n, n))
    dxi = np.empty(n)
    A = np.empty((n, n))
    B = np.empty(n)
    max_speed = 0.0
    for i in range(N):
        v = Vg[i + 2]
        A_of(v, A)
        ok = False
        if n == 3:
            ok = _decompose3(A, lam, L, L_inv)
        if not ok:
            _decompose_general(A, lam, L, L_inv)
        for j in range(n):
            xm2 = xm1 = x0 = xp1 = xp2 = 0.0
            for c in range(n):
                lj = L[j, c]
                xm2 += lj * Vg[i, c]
                xm1 += lj * Vg[i + 1, c]
                x0 += lj * Vg[i + 2, c]
                xp1 += lj * Vg[i + 3, c]
                xp2 += lj * Vg[i + 4, c]
            lj = lam[j]
            if abs(lj) > max_speed:
                max_speed = abs(lj)
            if order == 2:
                if lj > 0.0:
                    d = (3.0 * x0 - 4.0 * xm1 + xm2) / (2.0 * dx)
                else:
                    d = (-3.0 * x0 + 4.0 * xp1 - xp2) / (2.0 * dx)
            else:
                if lj > 0.0:
                    d = (x0 - xm1) / dx
                else:
                    d = (xp1 - x0) / dx
            dxi[j] = lj * d
        B_of(v, B)
        for j in range(n):
            acc = 0.0
            for c in range(n):
                acc += L_inv[j, c] * dxi[c]
            dV[i, j] = B[j] - acc
    return dV, max_speed


@njit(nogil=True)
def run_chunk(V, t, t_end, dx, max_steps, cfl, order,
              L0, L0_inv, K, m, A_of, B_of, cap):
    """Advance up to max_steps SSP-RK3 steps or until t_end.

    Returns (V, t, steps_taken, status) with status one of OK,
    REACHED_END, BLOWUP, VANISHING.
    """
    steps = 0
    status = OK
    while steps < max_steps:
        if t >= t_end - 1e-14 * (1.0 + abs(t_end)):
            status = REACHED_END
            break
        Vg = ghost_fill(V, L0, L0_inv, K, m, order)
        dV1, ms = stage_rates(Vg, dx, order, A_of, B_of)
        if ms <= 0.0:
            status = VANISHING
            break
        dt = cfl * dx / ms
        if t + dt > t_end:
            dt = t_end - t
        V1 = V + dt * dV1
        Vg = ghost_fill(V1, L0, L0_inv, K, m, order)
        dV2, _ = stage_rates(Vg, dx, order, A_of, B_of)
        V2 = 0.75 * V + 0.25 * (V1 + dt * dV2)
        Vg = ghost_fill(V2, L0, L0_inv, K, m, order)
        dV3, _ = stage_rates(Vg, dx, order, A_of, B_of)
        V = V / 3.0 + (2.0 / 3.0) * (V2 + dt * dV3)
        t += dt
        steps += 1
        if np.abs(V).max() > cap:
            status = BLOWUP
            break
    if status == OK and t >= t_end - 1e-14 * (1.0 + abs(t_end)):
        status = REACHED_END
    return V, t, steps, status
