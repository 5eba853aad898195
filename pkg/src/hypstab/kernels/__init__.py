"""Backend selection for the hot solver kernels.

Two interchangeable lanes:

* ``accelerated`` -- numba @njit kernels with an analytic 3x3
  characteristic decomposition in the inner loop (default when numba
  imports and the model ships compiled coefficient functions);
* ``reference``   -- pure-numpy batched implementation, also the
  independent cross-check for the accelerated lane.

Set ``HYPSTAB_BACKEND=numpy`` (or ``numba``) to force a lane; the
environment variable wins over the per-run config.
"""

import os

_ENV_VAR = "HYPSTAB_BACKEND"
_VALID = ("auto", "numba", "numpy")


def backend_name(requested="auto"):
    """Resolve the lane name: env var > requested > availability."""
    env = os.environ.get(_ENV_VAR, "").strip().lower()
    if env:
        if env not in _VALID:
            raise ValueError(f"{_ENV_VAR}={env!r}; expected one of {_VALID}")
        requested = env
    if requested not in _VALID:
        raise ValueError(f"backend {requested!r}; expected one of {_VALID}")
    if requested == "auto":
        return "numba" if numba_available() else "numpy"
    return requested


def numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True
