"""Benchmark the trajectory-recursion kernel: numpy loop vs numba JIT.

The recursion is the only sequential pure-Python hot loop in the package
(LP solving is native code either way), so it is the kernel gated by the
``DISTSYNTH_NO_NUMBA`` flag.  Run:

    python benchmarks/bench_kernels.py [steps]
"""

import sys
import time

import numpy as np

from distsynth._accel import USING_NUMBA, state_recursion, state_recursion_numpy
from distsynth.cli import cmd_gen
from distsynth.setgeom import Box, BoxHullSet, sample_batch


def time_fn(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    spec = cmd_gen(6, 3, 2, 0.8, seed=0)
    sys_ = spec.sys
    W = BoxHullSet(
        (
            Box(np.zeros(3), 0.1 * np.ones(3)),
            Box(0.05 * np.ones(3), 0.05 * np.ones(3)),
        )
    )
    w_seq = sample_batch(W, steps, np.random.default_rng(0))
    x0 = np.zeros(sys_.n_x)
    args = (sys_.A, sys_.B, sys_.C, sys_.D, x0, w_seq)

    t_plain = time_fn(state_recursion_numpy, *args)
    print(f"steps={steps}  state dim={sys_.n_x}")
    print(f"numpy loop      : {t_plain * 1e3:9.2f} ms")
    if USING_NUMBA:
        state_recursion(*args)  # compile outside the timer
        t_jit = time_fn(state_recursion, *args)
        print(f"numba njit      : {t_jit * 1e3:9.2f} ms")
        print(f"speedup         : {t_plain / t_jit:9.1f}x")
        Xa, Ya = state_recursion_numpy(*args)
        Xb, Yb = state_recursion(*args)
        same = np.array_equal(Xa, Xb) and np.array_equal(Ya, Yb)
        print(f"paths bit-equal : {same}")
    else:
        print("numba path disabled or unavailable (DISTSYNTH_NO_NUMBA)")


if __name__ == "__main__":
    main()
