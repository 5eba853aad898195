import json

import numpy as np
import pytest

from conftest import linear_model_dict

from hypstab import custom
from hypstab import simulator as sim
from hypstab.errors import DimensionMismatch
from hypstab.feedback import FeedbackGain
from hypstab.matrixcore import spectral_decompose
from hypstab.structure import check_partial_dissipativity


def test_linear_model_evaluates():
    model = custom.model_from_dict(linear_model_dict())
    U = np.array([0.3, -0.2])
    assert np.array_equal(model.A(U), np.diag([-1.0, 1.0]))
    assert np.array_equal(model.Q(U), [0.0, 0.2])
    assert np.array_equal(model.Q_U(U), [[0.0, 0.0], [0.0, -1.0]])
    assert np.array_equal(model.A0(U), np.eye(2))
    rep = check_partial_dissipativity(model)
    assert rep.passed


def test_affine_flux_and_rational_source_jacobian():
    raw = {
        "n": 2, "m": 1, "r": 1,
        "A0c": [[-1.0, 0.2], [0.0, 2.0]],
        "Ak": [
            [[0.5, 0.0], [0.0, 0.0]],
            [[0.0, 1.0], [0.3, 0.0]],
        ],
        "source": {
            "C": [[0.0, 0.0], [0.1, -1.0]],
            "quad": [
                [[0.2, 0.0], [0.0, 0.0]],
                [[0.0, 0.5], [0.0, -0.3]],
            ],
            "d": [0.1, -0.2],
        },
        "P0": [[1.0, 0.0], [0.5, 1.0]],
        "S0": [[-1.0]],
    }
    model = custom.model_from_dict(raw)
    rng = np.random.default_rng(12)
    h = 1e-7
    for _ in range(10):
        U = rng.uniform(-0.3, 0.3, 2)
        W = rng.standard_normal(2)
        # A_dir against finite differences
        fd = (model.A(U + h * W) - model.A(U - h * W)) / (2 * h)
        assert np.allclose(model.A_dir(U, W), fd, atol=1e-7)
        # Q_U against finite differences
        fdJ = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fdJ[:, j] = (model.Q(U + e) - model.Q(U - e)) / (2 * h)
        assert np.allclose(model.Q_U(U), fdJ, atol=1e-6)
    assert np.abs(model.Q(np.zeros(2))).max() == 0.0


def test_dimension_validation():
    base = linear_model_dict()
    bad = dict(base, A0c=[[1.0]])
    with pytest.raises(DimensionMismatch):
        custom.model_from_dict(bad)
    bad = dict(base, m=0)
    with pytest.raises(DimensionMismatch):
        custom.model_from_dict(bad)
    bad = dict(base, source={"C": [[0.0]]})
    with pytest.raises(DimensionMismatch):
        custom.model_from_dict(bad)


def test_load_model_roundtrip(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(linear_model_dict()))
    model = custom.load_model(path)
    assert model.n == 2 and model.m == 1 and model.r == 1


def test_custom_model_runs_in_simulator():
    model = custom.model_from_dict(linear_model_dict())
    tmodel = sim.transformed(model)
    spec = spectral_decompose(model.A(np.zeros(2)))
    spec_V = sim.spectrum_to_V(spec, model.P0, model.P0_inv)
    N = 32
    x = (np.arange(N) + 0.5) / N
    from conftest import cos4_bump
    V0 = np.column_stack([cos4_bump(x, 0.5, 0.25),
                          0.5 * cos4_bump(x, 0.5, 0.25)])
    config = sim.SimConfig(N=N, t_end=0.2, backend="numpy")
    traj = sim.run(tmodel, spec_V, FeedbackGain.zero(2, 1), V0, config)
    assert traj.reached_t_end
    assert np.isfinite(traj.states[-1].V).all()
