import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from se3_koopman.dynamics import ControlInput, QuadState
from se3_koopman.errors import ReconstructionFailedError
from se3_koopman.lift import LiftConfig, lift, lift_augmented, reconstruct_state, recovery_matrix
from se3_koopman.se3 import hat, so3_exp, vectorize

from conftest import random_state


def test_rest_state_lift():
    z = lift(QuadState(), LiftConfig(3))
    expected = np.zeros(51)
    expected[6:15] = vectorize(np.eye(3))
    np.testing.assert_array_equal(z, expected)


def test_first_block_at_identity_attitude():
    w = np.array([0.0, 0.0, 1.0])
    z = lift(QuadState(w=w), LiftConfig(3))
    np.testing.assert_array_equal(z[24:33], vectorize(hat(w)))


@pytest.mark.parametrize("p", range(1, 7))
def test_blocks_match_matrix_powers(rng, p):
    cfg = LiftConfig(p)
    x = random_state(rng)
    z = lift(x, cfg)
    assert z.shape == (24 + 9 * p,)
    np.testing.assert_array_equal(z[:3], x.p)
    np.testing.assert_array_equal(z[3:6], x.v)
    np.testing.assert_array_equal(z[6:15], vectorize(x.R))
    np.testing.assert_array_equal(z[15:24], vectorize(hat(x.w)))
    W = hat(x.w)
    for i in range(1, p + 1):
        oracle = x.R @ np.linalg.matrix_power(W, i)
        np.testing.assert_allclose(z[cfg.h_slice(i)], vectorize(oracle), rtol=1e-12, atol=1e-12)


def test_order_bounds():
    for bad in (0, 7, 2.5):
        with pytest.raises(ValueError):
            LiftConfig(bad)
    assert LiftConfig().dim == 51


def test_augmented_lift(rng):
    cfg = LiftConfig(3)
    x = random_state(rng)
    za = lift_augmented(x, ControlInput(), cfg)
    assert za.shape == (55,)
    np.testing.assert_array_equal(za[-4:], 0.0)
    u = ControlInput(1.0, [2.0, 3.0, 4.0])
    za = lift_augmented(x, u, cfg)
    np.testing.assert_array_equal(za[:51], lift(x, cfg))
    np.testing.assert_array_equal(za[51:], [1, 2, 3, 4])


def test_recovery_matrix(rng):
    cfg = LiftConfig(3)
    C = recovery_matrix(cfg)
    assert C.shape == (24, 51)
    assert np.count_nonzero(C) == 24 and np.array_equal(C[:, :24], np.eye(24))
    assert np.linalg.matrix_rank(C) == 24
    x = random_state(rng)
    np.testing.assert_array_equal(C @ lift(x, cfg), lift(x, cfg)[:24])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_lift_reconstruct_roundtrip(seed, p):
    x = random_state(np.random.default_rng(seed))
    y, theta = reconstruct_state(lift(x, LiftConfig(p)))
    assert y.allclose(x, atol=1e-10)
    np.testing.assert_allclose(so3_exp(theta), x.R, atol=1e-10)


def test_reconstruct_projects_rotation_block():
    z = lift(QuadState(), LiftConfig(3))
    z[6:15] *= 1.001
    x, theta = reconstruct_state(z)
    np.testing.assert_allclose(x.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(theta, 0.0, atol=1e-12)


def test_reconstruct_skew_symmetrizes_rate_block(rng):
    w = np.array([0.3, -1.0, 2.0])
    z = lift(QuadState(w=w), LiftConfig(3))
    N = rng.standard_normal((3, 3)) * 1e-3
    z[15:24] += vectorize(N + N.T)
    x, _ = reconstruct_state(z)
    np.testing.assert_allclose(x.w, w, atol=1e-14)


def test_reconstruct_failures():
    z = lift(QuadState(), LiftConfig(3))
    z[0] = np.nan
    with pytest.raises(ReconstructionFailedError):
        reconstruct_state(z)
    z = lift(QuadState(), LiftConfig(3))
    z[6:15] = 0.0
    with pytest.raises(ReconstructionFailedError):
        reconstruct_state(z)


def test_lift_is_lipschitz_locally(rng):
    # Pinned regression bound: a perturbation of size eps moves z by at most
    # L * (1 + |w|)^3 * eps; the cubic factor comes from the R hat(w)^3 block.
    # Empirical maximum over 2000 random states was 1.34.
    cfg = LiftConfig(3)
    for _ in range(50):
        x = random_state(rng)
        d = rng.standard_normal(12)
        d /= np.linalg.norm(d)
        L = 2.0 * (1.0 + np.linalg.norm(x.w)) ** 3
        for eps in (1e-3, 1e-5):
            y = QuadState(x.p + eps * d[:3], x.v + eps * d[3:6], x.R @ so3_exp(eps * d[6:9]), x.w + eps * d[9:])
            assert np.linalg.norm(lift(y, cfg) - lift(x, cfg)) <= L * eps
