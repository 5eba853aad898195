"""Lane benchmark: numba kernels vs the pure-numpy reference.

Runs a fixed river-model scenario on both backends, reports wall times
and the maximum pointwise deviation between the two solutions.

    python -m hypstab.benchmark [--N 200] [--t-end 2.0]
"""

import argparse
import time

import numpy as np

from . import simulator as sim
from . import sve
from .kernels import numba_available


def _scenario(N):
    p = sve.reference_parameters()
    tm, spec = sve.transformed_model(p)
    K = sve.feedback_matrix(1.0, -3.13, p)
    x = (np.arange(N) + 0.5) / N
    prof = np.sin(np.pi * x) ** 4
    V0 = 1e-3 * np.outer(prof, np.array([1.0, 0.5, -0.3]))
    return tm, spec, K, V0


def run(N=200, t_end=2.0, cfl=0.5):
    tm, spec, K, V0 = _scenario(N)

    def once(backend):
        # timing scenario only; the sine bump is not compatibility-matched
        cfg = sim.SimConfig(N=N, cfl=cfl, t_end=t_end, compat_tol=1e-3,
                            output_stride=10**9, backend=backend)
        t0 = time.perf_counter()
        traj = sim.run(tm, spec, K, V0, cfg)
        return traj, time.perf_counter() - t0

    traj_ref, t_ref = once("numpy")
    print(f"numpy lane : {t_ref:8.3f} s  ({traj_ref.steps_total} steps)")
    if not numba_available():
        print("numba lane : unavailable")
        return
    once("numba")  # compile
    traj_acc, t_acc = once("numba")
    dev = max(
        np.abs(a.V - b.V).max()
        for a, b in zip(traj_ref.states, traj_acc.states)
    )
    print(f"numba lane : {t_acc:8.3f} s  ({traj_acc.steps_total} steps, warm)")
    print(f"speedup    : {t_ref / t_acc:8.1f} x")
    print(f"max lane deviation: {dev:.3e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--t-end", type=float, default=2.0)
    ap.add_argument("--cfl", type=float, default=0.5)
    args = ap.parse_args(argv)
    run(N=args.N, t_end=args.t_end, cfl=args.cfl)


if __name__ == "__main__":
    main()
