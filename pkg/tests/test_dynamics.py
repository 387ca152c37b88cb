import numpy as np
import pytest

from se3_koopman.dynamics import (
    ActuatorLimits,
    ControlInput,
    QuadParams,
    QuadState,
    RotorForces,
    Trajectory,
    dynamics,
    inverse_mixer,
    mechanical_energy,
    mixer,
    mixer_matrix,
    sample_random_inputs,
    simulate,
    step,
)
from se3_koopman.errors import IntegrationDivergedError
from se3_koopman.se3 import so3_exp

from conftest import random_state

P = QuadParams()


def hover_input(params=P):
    return ControlInput(params.m * params.g, np.zeros(3))


def rest():
    return QuadState(np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3))


def test_table_values():
    assert (P.m, P.Ixx, P.Iyy, P.Izz, P.d, P.c_tau, P.g) == (4.34, 0.0820, 0.0845, 0.1377, 0.315, 8e-4, 9.81)
    assert P.hover_thrust == pytest.approx(42.5754, abs=1e-12)
    np.testing.assert_array_equal(P.J, np.diag([0.0820, 0.0845, 0.1377]))


def test_params_validation():
    with pytest.raises(ValueError):
        QuadParams(m=0.0)
    with pytest.raises(ValueError):
        QuadParams(Iyy=-1.0)


def test_state_validity():
    assert QuadState().is_valid()
    assert not QuadState(R=2 * np.eye(3)).is_valid()
    assert not QuadState(p=[np.nan, 0, 0]).is_valid()
    with pytest.raises(ValueError):
        QuadState(p=np.zeros(2))


def test_mixer_hover_and_first_column():
    u = mixer(RotorForces(10.0, 10.0, 10.0, 10.0), P)
    assert u.f_t == pytest.approx(40.0)
    np.testing.assert_allclose(u.M, 0.0, atol=1e-15)
    u = mixer(RotorForces(1.0, 0.0, 0.0, 0.0), P)
    np.testing.assert_allclose(u.as_array(), [1.0, 0.0, 0.315, -8e-4], atol=1e-15)


def test_inverse_mixer(rng):
    np.testing.assert_allclose(inverse_mixer(ControlInput(40.0, np.zeros(3)), P).as_array(), 10.0, atol=1e-12)
    np.testing.assert_allclose(inverse_mixer(ControlInput(0.0, np.zeros(3)), P).as_array(), 0.0, atol=1e-15)
    f = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(inverse_mixer(mixer(RotorForces(*f), P), P).as_array(), f, atol=1e-10)
    Minv = np.linalg.inv(mixer_matrix(P))
    for _ in range(20):
        u = ControlInput.from_array(rng.standard_normal(4) * 10)
        np.testing.assert_allclose(inverse_mixer(u, P).as_array(), Minv @ u.as_array(), atol=1e-10)
        np.testing.assert_allclose(mixer(inverse_mixer(u, P), P).as_array(), u.as_array(), atol=1e-10)


def test_derivatives_hover_and_free_fall():
    p_dot, v_dot, R_dot, w_dot = dynamics(rest(), hover_input(), P)
    for d in (p_dot, v_dot, R_dot, w_dot):
        np.testing.assert_allclose(d, 0.0, atol=1e-14)
    _, v_dot, _, _ = dynamics(rest(), ControlInput(0.0, np.zeros(3)), P)
    np.testing.assert_allclose(v_dot, [0, 0, -9.81])


def test_thrust_is_rotated_into_inertial_frame():
    R = so3_exp([np.pi / 2, 0, 0])  # body z -> inertial -y
    x = QuadState(np.zeros(3), np.zeros(3), R, np.zeros(3))
    _, v_dot, _, _ = dynamics(x, ControlInput(P.m, np.zeros(3)), P)
    np.testing.assert_allclose(v_dot, [0, -1, -9.81], atol=1e-14)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_principal_axis_spin_has_no_gyroscopic_term(axis):
    w = np.zeros(3)
    w[axis] = 1.0
    x = QuadState(np.zeros(3), np.zeros(3), np.eye(3), w)
    M = np.array([0.1, -0.2, 0.3])
    _, _, _, w_dot = dynamics(x, ControlInput(0.0, M), P)
    np.testing.assert_allclose(w_dot, np.linalg.solve(P.J, M), atol=1e-15)


def test_gyroscopic_term_off_axis():
    w = np.array([1.0, 2.0, 3.0])
    x = QuadState(np.zeros(3), np.zeros(3), np.eye(3), w)
    _, _, _, w_dot = dynamics(x, ControlInput(0.0, np.zeros(3)), P)
    np.testing.assert_allclose(w_dot, -np.linalg.solve(P.J, np.cross(w, P.J @ w)), atol=1e-14)


def test_hover_is_fixed_point():
    x = rest()
    y = step(x, hover_input(), P, 0.001)
    assert y.allclose(x, atol=1e-12)
    traj = simulate(x, [hover_input()] * 200, P, 0.001)
    for s in traj.states:
        assert s.allclose(x, atol=1e-10)


def test_ballistic_fall():
    n, dt = 500, 0.001
    traj = simulate(rest(), [ControlInput(0.0, np.zeros(3))] * n, P, dt)
    assert traj.states[-1].p[2] == pytest.approx(-0.5 * 9.81 * (n * dt) ** 2, abs=1e-12)


def _tumble_run(dt, T=0.2):
    x0 = QuadState(np.zeros(3), np.array([0.5, 0, 0]), so3_exp([0.3, -0.2, 0.1]), np.array([3.0, -2.0, 5.0]))
    u = ControlInput(30.0, np.array([0.4, -0.3, 0.2]))
    traj = simulate(x0, [u] * int(round(T / dt)), P, dt)
    x = traj.states[-1]
    return np.concatenate([x.p, x.v, x.R.ravel(), x.w])


def test_rk4_fourth_order_convergence():
    ref = _tumble_run(0.01 / 16)
    e1 = np.linalg.norm(_tumble_run(0.01) - ref)
    e2 = np.linalg.norm(_tumble_run(0.005) - ref)
    ratio = e1 / e2
    assert 12.0 < ratio < 20.0, ratio


def test_orthonormality_preserved_over_long_run(rng):
    x = random_state(rng)
    inputs = sample_random_inputs(2000, [P.hover_thrust, 0, 0, 0], [10, 1, 1, 1], 7)
    traj = simulate(x, inputs, P, 0.001)
    for s in traj.states[::100]:
        assert np.linalg.norm(s.R.T @ s.R - np.eye(3)) <= 1e-9
        assert abs(np.linalg.det(s.R) - 1.0) <= 1e-9


def test_energy_conserved_without_input(rng):
    zero = ControlInput(0.0, np.zeros(3))
    for dt in (0.001, 0.002):
        x = random_state(rng)
        e0 = mechanical_energy(x, P)
        drifts = []
        for _ in range(100):
            x = step(x, zero, P, dt)
            drifts.append(abs(mechanical_energy(x, P) - e0))
        assert max(drifts) < 1e-9


def test_step_is_bitwise_deterministic(rng):
    x = random_state(rng)
    u = ControlInput(40.0, np.array([0.1, 0.2, -0.1]))
    a, b = step(x, u, P, 0.001), step(x, u, P, 0.001)
    for f in ("p", "v", "R", "w"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_simulate_shapes_and_single_step(rng):
    x = random_state(rng)
    inputs = sample_random_inputs(100, [P.hover_thrust, 0, 0, 0], [10] * 4, 3)
    traj = simulate(x, inputs, P, 0.001)
    assert len(traj.states) == 101 and len(traj.inputs) == 100
    assert traj.states[1].allclose(step(x, inputs[0], P, 0.001), atol=0.0)
    with pytest.raises(ValueError):
        Trajectory(0.001, traj.states, inputs[:10])


def test_divergence_is_reported_with_step():
    x = QuadState(np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3))
    with pytest.raises(IntegrationDivergedError) as info:
        simulate(x, [ControlInput(1e13, np.zeros(3))] * 5, P, 0.01)
    assert info.value.step_index is not None


def test_random_inputs():
    same = sample_random_inputs(5, [1, 2, 3, 4], [0, 0, 0, 0], 0)
    for u in same:
        np.testing.assert_array_equal(u.as_array(), [1, 2, 3, 4])
    a = sample_random_inputs(50, [0] * 4, [10] * 4, 42)
    b = sample_random_inputs(50, [0] * 4, [10] * 4, 42)
    assert all(np.array_equal(x.as_array(), y.as_array()) for x, y in zip(a, b))


def test_random_inputs_statistics():
    n = 100_000
    U = np.array([u.as_array() for u in sample_random_inputs(n, [0] * 4, [10] * 4, 2024)])
    sigma = np.sqrt(10.0)
    assert np.all(np.abs(U.mean(axis=0)) <= 3 * sigma / np.sqrt(n))
    assert np.all(np.abs(U.var(axis=0) - 10.0) <= 0.5)


def test_actuator_limits():
    lim = ActuatorLimits.default_for(P)
    assert lim.f_t_max == pytest.approx(2 * P.m * P.g)
    assert lim.contains(hover_input())
    assert not lim.contains(ControlInput(-1.0, np.zeros(3)))
    c = lim.clamp(ControlInput(1e3, np.array([9.0, -9.0, 1.0])))
    np.testing.assert_allclose(c.as_array(), [lim.f_t_max, 5.0, -5.0, 1.0])
    with pytest.raises(ValueError):
        ActuatorLimits(1.0, 0.5)
