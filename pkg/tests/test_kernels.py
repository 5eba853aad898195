"""Cross-checks between the numba lane and the pure-numpy reference lane."""

import numpy as np
import pytest

from conftest import cos4_bump

from hypstab import simulator as sim
from hypstab import sve
from hypstab.kernels import backend_name, numba_available
from hypstab.kernels import reference as ref

numba = pytest.importorskip("numba")
from hypstab.kernels import accelerated as acc  # noqa: E402


def test_backend_name_resolution(monkeypatch):
    monkeypatch.delenv("HYPSTAB_BACKEND", raising=False)
    assert backend_name("numpy") == "numpy"
    assert backend_name("auto") in ("numpy", "numba")
    if numba_available():
        assert backend_name("auto") == "numba"
    monkeypatch.setenv("HYPSTAB_BACKEND", "numpy")
    assert backend_name("numba") == "numpy"  # the environment wins
    monkeypatch.setenv("HYPSTAB_BACKEND", "nonsense")
    with pytest.raises(ValueError):
        backend_name("auto")
    monkeypatch.delenv("HYPSTAB_BACKEND")
    with pytest.raises(ValueError):
        backend_name("gpu")


def test_analytic_decomposition_matches_lapack(p_ref):
    rng = np.random.default_rng(31)
    lam = np.empty(3)
    L = np.empty((3, 3))
    L_inv = np.empty((3, 3))
    for _ in range(100):
        U = rng.uniform(-0.2, 0.2, 3)
        A = sve.flux_jacobian(U, p_ref)
        ok = acc._decompose3(A, lam, L, L_inv)
        assert ok
        lam_ref, L_ref, Linv_ref = ref.decompose_fields(A[None])
        assert np.allclose(lam, lam_ref[0], rtol=1e-12, atol=1e-12)
        assert np.allclose(L, L_ref[0], rtol=1e-9, atol=1e-11)
        # eigen-relation and inverse quality
        assert np.abs(L @ A - lam[:, None] * L).max() <= 1e-10 * np.abs(A).max()
        assert np.abs(L @ L_inv - np.eye(3)).max() <= 1e-12


def test_analytic_route_rejects_multiple_roots():
    lam = np.empty(3)
    L = np.empty((3, 3))
    L_inv = np.empty((3, 3))
    assert not acc._decompose3(np.eye(3), lam, L, L_inv)
    # the general route still handles it through LAPACK
    acc._decompose_general(np.diag([1.0, 2.0, 3.0]), lam, L, L_inv)
    assert np.allclose(lam, [1.0, 2.0, 3.0])


def test_ghost_fill_matches_numpy_boundary(p_ref):
    tmodel, spec_V = sve.transformed_model(p_ref)
    K = sve.feedback_matrix(1.0, -3.13, p_ref)
    rng = np.random.default_rng(4)
    V = 1e-3 * rng.standard_normal((16, 3))
    for order in (1, 2):
        state = sim.GridState(V=V.copy(), split=tmodel.split)
        sim.apply_boundary(state, spec_V, K, order)
        Vg_np = sim._padded(state)
        Vg_nb = acc.ghost_fill(
            np.ascontiguousarray(V), np.ascontiguousarray(spec_V.L),
            np.ascontiguousarray(spec_V.L_inv), np.ascontiguousarray(K.K),
            spec_V.m, order,
        )
        assert np.abs(Vg_np - Vg_nb).max() <= 1e-15


def test_stage_rates_match_reference(p_ref):
    tmodel, spec_V = sve.transformed_model(p_ref, compiled="auto")
    K = sve.feedback_matrix(1.0, -3.13, p_ref)
    rng = np.random.default_rng(6)
    V = 1e-3 * rng.standard_normal((24, 3))
    state = sim.GridState(V=V.copy(), split=tmodel.split)
    for order in (1, 2):
        sim.apply_boundary(state, spec_V, K, order)
        dV_np = sim.rhs(state, tmodel, order)
        Vg = sim._padded(state)
        A_of, B_of = tmodel.compiled
        dV_nb, ms = acc.stage_rates(np.ascontiguousarray(Vg), state.dx,
                                    order, A_of, B_of)
        scale = np.abs(dV_np).max()
        assert np.abs(dV_np - dV_nb).max() <= 1e-12 * scale
        assert ms > 0


def test_full_run_lane_agreement(p_ref):
    tmodel, spec_V = sve.transformed_model(p_ref, compiled="auto")
    assert tmodel.compiled is not None
    K = sve.feedback_matrix(1.0, -3.13, p_ref)
    N = 48
    x = (np.arange(N) + 0.5) / N
    U0 = 1e-3 * np.outer(cos4_bump(x, 0.5, 0.4), [1.0, 0.5, -0.3])
    V0 = sim.transform_to_V(U0, tmodel.P0)
    results = {}
    for lane in ("numpy", "numba"):
        config = sim.SimConfig(N=N, t_end=0.3, backend=lane, output_stride=10)
        traj = sim.run(tmodel, spec_V, K, V0.copy(), config)
        assert traj.reached_t_end
        results[lane] = traj
    a, b = results["numpy"], results["numba"]
    assert a.steps_total == b.steps_total
    dev = max(
        np.abs(sa.V - sb.V).max()
        for sa, sb in zip(a.states, b.states)
    )
    assert dev <= 1e-13 * max(np.abs(a.states[0].V).max(), 1e-300)


def test_compiled_coefficients_match_python(p_ref):
    tmodel, _ = sve.transformed_model(p_ref, compiled="auto")
    A_of, B_of = tmodel.compiled
    rng = np.random.default_rng(9)
    A = np.empty((3, 3))
    B = np.empty(3)
    for _ in range(20):
        v = rng.uniform(-0.1, 0.1, 3)
        A_of(v, A)
        B_of(v, B)
        assert np.allclose(A, tmodel.A(v), rtol=1e-13, atol=1e-15)
        assert np.allclose(B, tmodel.B(v), rtol=1e-13, atol=1e-18)
