import numpy as np

from distsynth import _accel

from conftest import random_hull, random_stable_system


def test_fallback_and_jit_paths_agree_bitwise():
    rng = np.random.default_rng(70)
    sys = random_stable_system(rng, n_x=3, n_w=2, n_y=2, rho=0.6)
    from distsynth.setgeom import sample_batch

    w_seq = sample_batch(random_hull(rng), 500, np.random.default_rng(1))
    x0 = rng.standard_normal(3)
    Xa, Ya = _accel.state_recursion_numpy(sys.A, sys.B, sys.C, sys.D, x0, w_seq)
    Xb, Yb = _accel.state_recursion(sys.A, sys.B, sys.C, sys.D, x0, w_seq)
    assert np.array_equal(Xa, Xb)
    assert np.array_equal(Ya, Yb)


def test_recursion_matches_manual_rollout():
    rng = np.random.default_rng(71)
    sys = random_stable_system(rng, n_x=2, n_w=2, n_y=2, rho=0.5)
    w_seq = rng.uniform(-1, 1, (20, 2))
    x0 = rng.standard_normal(2)
    X, Y = _accel.state_recursion_numpy(sys.A, sys.B, sys.C, sys.D, x0, w_seq)
    x = x0.copy()
    for t in range(20):
        assert np.allclose(X[t], x)
        assert np.allclose(Y[t], sys.C @ x + sys.D @ w_seq[t])
        x = sys.A @ x + sys.B @ w_seq[t]
