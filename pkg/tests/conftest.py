"""Shared fixtures: reference parameters, random valid parameter sets,
and a small linear model used by the exact-solution tests."""

import numpy as np
import pytest

from hypstab import sve
from hypstab.errors import HypstabError


@pytest.fixture(scope="session")
def p_ref():
    return sve.reference_parameters()


def draw_valid_parameters(rng):
    """One parameter set satisfying the slow-sediment assumptions."""
    while True:
        g = rng.uniform(3.0, 20.0)
        a = rng.uniform(1e-4, 0.03)
        H = rng.uniform(0.3, 3.0)
        V = rng.uniform(0.2, 2.5)
        C_f = rng.uniform(0.0, 0.05)
        try:
            p = sve.make_equilibrium(g=g, a=a, H_star=H, V_star=V, C_f=C_f)
            sve.characteristic_roots(p)
        except (HypstabError, ValueError):
            continue
        return p


@pytest.fixture(scope="session")
def param_sets():
    """100 random valid parameter sets (fixed seed)."""
    rng = np.random.default_rng(20240817)
    return [draw_valid_parameters(rng) for _ in range(100)]


def linear_model_dict():
    """Constant-coefficient diagonal system with one damped field.

    u1_t - u1_x = 0 and u2_t + u2_x = -u2 on (0,1); with zero boundary
    reflection the exact solution is u1(t,x) = f1(x+t),
    u2(t,x) = e^{-t} f2(x-t).
    """
    return {
        "n": 2, "m": 1, "r": 1,
        "A0c": [[-1.0, 0.0], [0.0, 1.0]],
        "source": {"C": [[0.0, 0.0], [0.0, -1.0]]},
        "P0": [[1.0, 0.0], [0.0, 1.0]],
        "S0": [[-1.0]],
    }


def cos4_bump(x, center, width):
    """C^3 compactly supported bump used as smooth initial data."""
    s = (np.asarray(x) - center) / width
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.cos(0.5 * np.pi * s[inside]) ** 4
    return out
