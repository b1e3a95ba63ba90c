"""Tests for rigid-body and motor dynamics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from curioflight.core import dynamics
from curioflight.core.dynamics import RigidBodyState
from curioflight.core.errors import SimulationError
from curioflight.core.models import VehicleParams

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quiet_params(**overrides) -> VehicleParams:
    return VehicleParams(motor_noise_std=0.0, linear_drag_coeff=0.0, angular_drag_coeff=0.0, **overrides)


def test_hover_speed_balances_gravity():
    params = VehicleParams()
    hover = dynamics.hover_speed(params)
    assert 4 * params.thrust_coeff * hover**2 == pytest.approx(params.mass * params.gravity)


def test_hover_residual_acceleration_is_tiny():
    params = quiet_params()
    motors = np.full(4, dynamics.hover_speed(params))
    linear, angular = dynamics.accelerations(np.zeros(3), IDENTITY, np.zeros(3), motors, params)
    assert np.linalg.norm(linear) < 1e-6
    assert np.linalg.norm(angular) < 1e-9


def test_hover_step_keeps_vehicle_still():
    params = quiet_params()
    hover = dynamics.hover_speed(params)
    state = RigidBodyState.create(position=(0.0, 0.0, 1.0), motor_speeds=np.full(4, hover))
    after = dynamics.step(state, np.full(4, hover), params, 0.01, None)
    assert np.linalg.norm(after.linear_accel) < 1e-6
    assert np.allclose(after.position, state.position, atol=1e-9)
    assert after.time == pytest.approx(0.01)


def test_free_fall_is_exactly_gravity():
    params = quiet_params()
    linear, _ = dynamics.accelerations(np.zeros(3), IDENTITY, np.zeros(3), np.zeros(4), params)
    assert linear[0] == 0.0
    assert linear[1] == 0.0
    assert linear[2] == -params.gravity


def test_motor_response_first_order_lag():
    params = quiet_params()
    speeds = dynamics.motor_response(np.full(4, 100.0), np.zeros(4), 0.01, params, None)
    assert speeds == pytest.approx(np.full(4, 100.0 * (1 - math.exp(-0.2))))


def test_motor_response_clamps_command_to_limit():
    params = quiet_params()
    speeds = dynamics.motor_response(np.full(4, 5000.0), np.full(4, params.max_motor_speed), 0.01, params, None)
    assert np.all(speeds == params.max_motor_speed)


def test_motor_noise_needs_rng():
    with pytest.raises(ValueError):
        dynamics.motor_response(np.zeros(4), np.zeros(4), 0.01, VehicleParams(), None)


def test_motor_noise_is_seeded():
    params = VehicleParams()
    a = dynamics.motor_response(np.full(4, 400.0), np.full(4, 400.0), 0.001, params, np.random.default_rng(3))
    b = dynamics.motor_response(np.full(4, 400.0), np.full(4, 400.0), 0.001, params, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert not np.allclose(a, 400.0)


def test_zero_drag_energy_drift_over_one_second():
    params = quiet_params()
    state = RigidBodyState.create(position=(0.0, 0.0, 100.0), angular_velocity=(0.0, 0.0, 2.0))
    start = dynamics.mechanical_energy(state, params)
    for _ in range(100):
        state = dynamics.step(state, np.zeros(4), params, 0.01, None)
    drift = abs(dynamics.mechanical_energy(state, params) - start) / start
    assert drift < 1e-4
    assert state.velocity[2] == pytest.approx(-params.gravity, rel=1e-9)


def test_zero_drag_energy_drift_is_absolute_and_height_independent():
    """Semi-implicit Euler loses m g^2 h t / 2 joules in free fall, whatever the height."""
    params = quiet_params()
    h = params.physics_dt
    expected = -0.5 * params.mass * params.gravity**2 * h * 1.0
    for height in (1.0, 100.0):
        state = RigidBodyState.create(position=(0.0, 0.0, height), angular_velocity=(0.0, 0.0, 2.0))
        start = dynamics.mechanical_energy(state, params)
        for _ in range(100):
            state = dynamics.step(state, np.zeros(4), params, 0.01, None)
        drift = dynamics.mechanical_energy(state, params) - start
        assert drift == pytest.approx(expected, rel=1e-6, abs=1e-9)
        assert abs(drift) < 0.05


def test_roll_torque_sign():
    params = quiet_params()
    motors = np.array([400.0, 450.0, 400.0, 350.0])
    _, torque = dynamics.rotor_wrench(motors, params)
    assert torque[0] > 0
    assert torque[1] == 0.0


def test_pitch_torque_sign_and_second_order_yaw():
    params = quiet_params()
    hover, delta = dynamics.hover_speed(params), 10.0
    motors = np.array([hover + delta, hover, hover - delta, hover])
    _, torque = dynamics.rotor_wrench(motors, params)
    assert torque[1] < 0
    assert torque[1] == pytest.approx(-4 * params.arm_length * params.thrust_coeff * hover * delta)
    assert torque[0] == 0.0
    assert torque[2] == pytest.approx(-2 * params.torque_coeff * delta**2)

    _, angular = dynamics.accelerations(np.zeros(3), IDENTITY, np.zeros(3), motors, params)
    assert angular[1] == pytest.approx(torque[1] / params.inertia_diag[1])
    assert abs(angular[2]) < 1e-3 * abs(angular[1])


def test_yaw_torque_from_spin_directions():
    params = quiet_params()
    motors = np.array([400.0, 450.0, 400.0, 450.0])
    _, torque = dynamics.rotor_wrench(motors, params)
    assert torque[2] > 0
    assert torque[0] == 0.0


def test_euler_quaternion_round_trip():
    q = dynamics.euler_to_quat(0.1, -0.2, 0.3)
    assert np.linalg.norm(q) == pytest.approx(1.0)
    assert dynamics.quat_to_euler(q) == pytest.approx((0.1, -0.2, 0.3))


def test_rotation_matrix_is_orthonormal():
    r = dynamics.quat_to_rotation(dynamics.euler_to_quat(0.4, 0.2, -1.0))
    assert np.allclose(r @ r.T, np.eye(3))
    assert np.linalg.det(r) == pytest.approx(1.0)


def test_quaternion_stays_normalized_while_spinning():
    params = quiet_params()
    state = RigidBodyState.create(position=(0.0, 0.0, 50.0), angular_velocity=(3.0, -2.0, 1.0))
    for _ in range(50):
        state = dynamics.step(state, np.zeros(4), params, 0.01, None)
    assert np.linalg.norm(state.orientation) == pytest.approx(1.0, abs=1e-12)


def test_non_finite_state_raises_simulation_error():
    params = quiet_params()
    state = RigidBodyState.create(position=(float("nan"), 0.0, 1.0))
    with pytest.raises(SimulationError) as excinfo:
        dynamics.step(state, np.zeros(4), params, 0.01, None)
    assert excinfo.value.field == "position"


def test_non_finite_command_is_rejected():
    with pytest.raises(SimulationError) as excinfo:
        dynamics.motor_response(np.array([np.inf, 0, 0, 0]), np.zeros(4), 0.01, quiet_params(), None)
    assert excinfo.value.field == "commanded"


def test_with_motor_speeds_copies_state():
    state = RigidBodyState.create(position=(1.0, 2.0, 3.0))
    spun = dynamics.with_motor_speeds(state, [1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(spun.motor_speeds, [1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(state.motor_speeds, np.zeros(4))


def test_mirroring_y_mirrors_trajectory():
    """Mirroring y swaps rotors 1 and 3 and flips roll and yaw.

    Swapping the rotors cannot flip the yaw moment, so the commands keep it at
    zero (w0^2 + w2^2 == w1^2 + w3^2).
    """
    params = quiet_params()
    hover, delta = dynamics.hover_speed(params), 15.0
    side = math.sqrt(hover**2 + delta**2)
    motors = np.array([side, hover + delta, side, hover - delta])
    mirrored_motors = motors[[0, 3, 2, 1]]

    state = RigidBodyState.create(position=(0.5, 0.8, 2.0), velocity=(0.3, -0.4, 0.1), motor_speeds=motors)
    mirror = RigidBodyState.create(position=(0.5, -0.8, 2.0), velocity=(0.3, 0.4, 0.1), motor_speeds=mirrored_motors)
    for _ in range(50):
        state = dynamics.step(state, motors, params, 0.01, None)
        mirror = dynamics.step(mirror, mirrored_motors, params, 0.01, None)

    flip = np.array([1.0, -1.0, 1.0])
    assert np.allclose(mirror.position, flip * state.position, atol=1e-9)
    assert np.allclose(mirror.velocity, flip * state.velocity, atol=1e-9)
    assert np.allclose(mirror.angular_velocity, -flip * state.angular_velocity, atol=1e-9)
    w, x, y, z = state.orientation
    assert np.allclose(mirror.orientation, [w, -x, y, -z], atol=1e-9)
    assert abs(state.position[1] - 0.8) > 1e-3
