"""Hot numeric kernels with optional numba acceleration.

The state-recursion kernel dominates the runtime of long Monte-Carlo
trajectory checks, so it is JIT-compiled when numba is importable.
Setting the environment variable ``DISTSYNTH_NO_NUMBA`` (to any
nonempty value) forces the pure-numpy path; both paths are bit-identical
because all randomness is drawn before the kernel runs.
"""

import os

import numpy as np


def state_recursion_numpy(A, B, C, D, x0, w_seq):
    """Roll the recursion x+ = A x + B w, y = C x + D w over a drawn
    disturbance sequence.

    Returns the state and output trajectories as (T, n_x) and (T, n_y)
    arrays; row t holds x(t) and y(t) for t = 0..T-1.
    """
    T = w_seq.shape[0]
    X = np.empty((T, A.shape[0]))
    Y = np.empty((T, C.shape[0]))
    x = x0.copy()
    for t in range(T):
        w = w_seq[t]
        X[t] = x
        Y[t] = C @ x + D @ w
        x = A @ x + B @ w
    return X, Y


USING_NUMBA = False
state_recursion = state_recursion_numpy

if not os.environ.get("DISTSYNTH_NO_NUMBA"):
    try:
        from numba import njit

        state_recursion = njit(cache=True)(state_recursion_numpy)
        USING_NUMBA = True
    except ImportError:
        pass
