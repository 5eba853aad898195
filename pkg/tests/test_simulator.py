import numpy as np
import pytest

from conftest import cos4_bump

from hypstab import simulator as sim
from hypstab import sve
from hypstab.errors import BlowUp, DimensionMismatch
from hypstab.feedback import FeedbackGain


def _scenario(p, N=32, amp=1e-3, compiled=False):
    tmodel, spec_V = sve.transformed_model(p, compiled="auto" if compiled else None)
    x = (np.arange(N) + 0.5) / N
    bump = amp * cos4_bump(x, 0.5, 0.4)
    U0 = np.outer(bump, [1.0, 0.5, -0.3])
    V0 = sim.transform_to_V(U0, tmodel.P0)
    K = sve.feedback_matrix(1.0, -3.13, p)
    return tmodel, spec_V, K, V0


def test_transformed_source_block(p_ref):
    model = sve.as_system_model(p_ref)
    tmodel = sim.transformed(model)
    target = np.zeros((3, 3))
    target[2, 2] = model.S0[0, 0]
    assert np.abs(tmodel.B_V0 - target).max() <= 1e-14
    assert tmodel.split == 2
    # coefficient callables agree with the conjugated originals
    v = np.array([1e-3, -2e-3, 5e-4])
    u = tmodel.P0_inv @ v
    assert np.allclose(tmodel.A(v), tmodel.P0 @ model.A(u) @ tmodel.P0_inv)
    assert np.allclose(tmodel.B(v), tmodel.P0 @ model.Q(u))


def test_spectrum_to_V_preserves_traces(p_ref):
    model = sve.as_system_model(p_ref)
    specU = sve.spectrum0(p_ref)
    specV = sim.spectrum_to_V(specU, model.P0, model.P0_inv)
    rng = np.random.default_rng(2)
    U = rng.standard_normal(3)
    assert np.allclose(specU.L @ U, specV.L @ (model.P0 @ U), atol=1e-14)
    # left-eigenvector property in the transformed variables
    A_V = model.P0 @ model.A(np.zeros(3)) @ model.P0_inv
    assert np.abs(specV.L @ A_V - specV.lam[:, None] * specV.L).max() <= 1e-9


def test_field_transform_roundtrip(p_ref):
    model = sve.as_system_model(p_ref)
    rng = np.random.default_rng(8)
    U = rng.standard_normal((11, 3))
    V = sim.transform_to_V(U, model.P0)
    assert np.allclose(sim.transform_to_U(V, model.P0), U, atol=1e-14)


def test_apply_boundary_exact_feedback(p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    state = sim.GridState(V=V0, split=tmodel.split)
    tr = sim.apply_boundary(state, spec_V, K)
    # the discrete feedback relation holds exactly, not approximately
    assert np.array_equal(tr.stacked_incoming(), K.K @ tr.stacked_outgoing())
    # reconstruction consistency: traces of the stored boundary values
    xi_left = spec_V.L @ tr.V_left
    assert np.allclose(xi_left[:1], tr.xi_out_left, atol=1e-15)
    assert np.allclose(xi_left[1:], tr.xi_in_left, atol=1e-15)
    assert state.ghost_left is not None and state.ghost_right is not None


def test_sim_config_validation():
    with pytest.raises(ValueError):
        sim.SimConfig(cfl=1.5)
    with pytest.raises(ValueError):
        sim.SimConfig(N=8)
    with pytest.raises(ValueError):
        sim.SimConfig(reconstruction_order=3)
    with pytest.raises(ValueError):
        sim.SimConfig(derivative_scheme="spectral")
    with pytest.raises(ValueError):
        sim.SimConfig(output_stride=0)


def test_equilibrium_is_preserved(p_ref):
    tmodel, spec_V, K, _ = _scenario(p_ref)
    config = sim.SimConfig(N=32, t_end=0.2, backend="numpy")
    traj = sim.run(tmodel, spec_V, K, np.zeros((32, 3)), config)
    assert traj.reached_t_end
    assert np.abs(traj.states[-1].V).max() <= 1e-14


def test_run_is_deterministic(p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    config = sim.SimConfig(N=32, t_end=0.1, backend="numpy")
    t1 = sim.run(tmodel, spec_V, K, V0.copy(), config)
    t2 = sim.run(tmodel, spec_V, K, V0.copy(), config)
    assert t1.steps_total == t2.steps_total
    assert np.array_equal(t1.states[-1].V, t2.states[-1].V)


def test_blowup_cap_trips(p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    config = sim.SimConfig(N=32, t_end=1.0, backend="numpy",
                           blowup_cap=0.5 * np.abs(V0).max())
    with pytest.raises(BlowUp) as exc:
        sim.run(tmodel, spec_V, K, V0, config)
    assert exc.value.t is not None and exc.value.last_state is not None


def test_initial_shape_mismatch(p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    config = sim.SimConfig(N=64, t_end=0.1, backend="numpy")
    with pytest.raises(DimensionMismatch):
        sim.run(tmodel, spec_V, K, V0, config)


def test_incompatible_data_warns(p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    V0 = V0 + 1e-3  # constant offset breaks the boundary relations
    config = sim.SimConfig(N=32, t_end=0.01, backend="numpy")
    with pytest.warns(UserWarning, match="compatibility"):
        sim.run(tmodel, spec_V, K, V0, config)


def test_time_derivatives_match_time_sampling(p_ref):
    # V_t from the PDE agrees with a centered difference of actual steps;
    # the two discretizations differ at O(dx^2), so check the gap shrinks
    # at second order under refinement
    def gap(N):
        tmodel, spec_V, K, V0 = _scenario(p_ref, N=N)
        config = sim.SimConfig(N=N, t_end=1.0, backend="numpy")
        state = sim.GridState(V=V0.copy(), split=tmodel.split)
        sim.apply_boundary(state, spec_V, K)
        dt = 1e-7
        plus = sim.step(state, tmodel, spec_V, K, dt, config)
        minus = sim.step(state, tmodel, spec_V, K, -dt, config)
        V_t_fd = (plus.V - minus.V) / (2 * dt)
        V_t, _ = sim.time_derivatives(state, tmodel)
        k = max(2, N // 16)  # interior cells; boundary stencils differ
        return np.abs(V_t_fd[k:-k] - V_t[k:-k]).max(), np.abs(V_t).max()

    e64, s64 = gap(64)
    e128, _ = gap(128)
    assert e64 <= 0.05 * s64
    assert e128 <= 0.35 * e64


def test_trajectory_csv_roundtrip(tmp_path, p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    config = sim.SimConfig(N=32, t_end=0.05, backend="numpy", output_stride=5)
    traj = sim.run(tmodel, spec_V, K, V0, config)
    path = tmp_path / "traj.csv"
    sim.export_trajectory_csv(traj, tmodel.P0, path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    N = 32
    assert data.shape[0] == len(traj.states) * N
    last = traj.states[-1]
    block = data[-N:]
    assert np.allclose(block["V_1"], last.V[:, 0], rtol=0, atol=0)
    U = sim.transform_to_U(last.V, tmodel.P0)
    assert np.allclose(block["U_3"], U[:, 2], rtol=1e-15, atol=1e-18)

    tpath = tmp_path / "traces.csv"
    sim.export_traces_csv(traj, tpath)
    tdata = np.genfromtxt(tpath, delimiter=",", names=True)
    assert tdata.shape[0] == len(traj.traces)
    assert np.allclose(tdata["xi_out_left_1"],
                       [tr.xi_out_left[0] for tr in traj.traces])


def test_max_steps_stops_the_run(p_ref):
    tmodel, spec_V, K, V0 = _scenario(p_ref)
    config = sim.SimConfig(N=32, t_end=50.0, backend="numpy", max_steps=7)
    traj = sim.run(tmodel, spec_V, K, V0, config)
    assert traj.steps_total == 7
    assert not traj.reached_t_end
