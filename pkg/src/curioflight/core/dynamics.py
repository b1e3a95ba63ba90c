"""Rigid-body quadrotor physics with a noisy, damped first-order motor model.

Conventions: world z up, quaternions stored (w, x, y, z) rotating body to
world, body z is the thrust axis. Rotors in "+" configuration: 0 front (+x),
1 left (+y), 2 back (-x), 3 right (-y); rotors 0/2 spin opposite to 1/3.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np
from numpy.typing import NDArray

from curioflight.core.errors import SimulationError
from curioflight.core.models import VehicleParams

FloatArray = NDArray[np.float64]

_STATE_FIELDS = (
    "position",
    "velocity",
    "orientation",
    "angular_velocity",
    "linear_accel",
    "angular_accel",
    "motor_speeds",
)


def _vec(values, size: int) -> FloatArray:
    array = np.asarray(values, dtype=np.float64).reshape(size)
    return array.copy()


@dataclass(frozen=True)
class RigidBodyState:
    """Full kinematic state of the vehicle; treated as an immutable value."""

    position: FloatArray
    velocity: FloatArray = field(default_factory=lambda: np.zeros(3))
    orientation: FloatArray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    angular_velocity: FloatArray = field(default_factory=lambda: np.zeros(3))
    linear_accel: FloatArray = field(default_factory=lambda: np.zeros(3))
    angular_accel: FloatArray = field(default_factory=lambda: np.zeros(3))
    motor_speeds: FloatArray = field(default_factory=lambda: np.zeros(4))
    time: float = 0.0

    @classmethod
    def create(
        cls,
        position,
        velocity=(0.0, 0.0, 0.0),
        orientation=(1.0, 0.0, 0.0, 0.0),
        angular_velocity=(0.0, 0.0, 0.0),
        motor_speeds=(0.0, 0.0, 0.0, 0.0),
    ) -> RigidBodyState:
        """Build a state from plain sequences; the quaternion is normalized."""
        q = _vec(orientation, 4)
        return cls(
            position=_vec(position, 3),
            velocity=_vec(velocity, 3),
            orientation=q / np.linalg.norm(q),
            angular_velocity=_vec(angular_velocity, 3),
            motor_speeds=_vec(motor_speeds, 4),
        )

    def check_finite(self) -> None:
        """Raise SimulationError naming the first non-finite field."""
        for name in _STATE_FIELDS:
            value = getattr(self, name)
            if not np.all(np.isfinite(value)):
                raise SimulationError(name, np.array2string(value))
        if not math.isfinite(self.time):
            raise SimulationError("time")


def quat_multiply(q: FloatArray, p: FloatArray) -> FloatArray:
    w1, x1, y1, z1 = q
    w2, x2, y2, z2 = p
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_to_rotation(q: FloatArray) -> FloatArray:
    """Rotation matrix (body -> world) of a unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_euler(q: FloatArray) -> tuple[float, float, float]:
    """Z-Y-X (yaw-pitch-roll) angles of a unit quaternion as (roll, pitch, yaw)."""
    w, x, y, z = q
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def euler_to_quat(roll: float, pitch: float, yaw: float) -> FloatArray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def hover_speed(params: VehicleParams) -> float:
    """Motor speed at which total thrust balances gravity."""
    return math.sqrt(params.mass * params.gravity / (4.0 * params.thrust_coeff))


def motor_response(
    commanded: FloatArray,
    current: FloatArray,
    dt: float,
    params: VehicleParams,
    rng: np.random.Generator | None,
) -> FloatArray:
    """First-order lag toward the command plus Gaussian noise, clamped to [0, w_max].

    Args:
        commanded: Commanded motor speeds [rad/s], clamped before use.
        current: Actual motor speeds [rad/s].
        dt: Elapsed time [s].
        params: Vehicle parameters (tau, noise std, w_max).
        rng: Noise source; may be None when motor_noise_std is 0.

    Returns:
        New actual motor speeds.

    """
    commanded = np.asarray(commanded, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if not np.all(np.isfinite(commanded)):
        raise SimulationError("commanded", np.array2string(commanded))
    if not np.all(np.isfinite(current)):
        raise SimulationError("motor_speeds", np.array2string(current))
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")

    target = np.clip(commanded, 0.0, params.max_motor_speed)
    decay = math.exp(-dt / params.motor_time_constant)
    speeds = target + (current - target) * decay
    if params.motor_noise_std > 0:
        if rng is None:
            raise ValueError("rng is required when motor_noise_std > 0")
        speeds = speeds + rng.normal(0.0, params.motor_noise_std, size=4)
    return np.clip(speeds, 0.0, params.max_motor_speed)


def rotor_wrench(motor_speeds: FloatArray, params: VehicleParams) -> tuple[float, FloatArray]:
    """Total thrust [N] and body torque [N m] produced by the rotors."""
    w2 = np.square(motor_speeds)
    forces = params.thrust_coeff * w2
    arm = params.arm_length
    torque = np.array([
        arm * (forces[1] - forces[3]),
        arm * (forces[2] - forces[0]),
        params.torque_coeff * (-w2[0] + w2[1] - w2[2] + w2[3]),
    ])
    return float(forces.sum()), torque


def accelerations(
    velocity: FloatArray,
    orientation: FloatArray,
    angular_velocity: FloatArray,
    motor_speeds: FloatArray,
    params: VehicleParams,
) -> tuple[FloatArray, FloatArray]:
    """World linear acceleration and body angular acceleration."""
    thrust, torque = rotor_wrench(motor_speeds, params)
    thrust_world = quat_to_rotation(orientation)[:, 2] * thrust
    gravity = np.array([0.0, 0.0, params.gravity])
    linear = (thrust_world - params.linear_drag_coeff * velocity) / params.mass - gravity

    inertia = np.asarray(params.inertia_diag, dtype=np.float64)
    gyroscopic = np.cross(angular_velocity, inertia * angular_velocity)
    angular = (torque - gyroscopic - params.angular_drag_coeff * angular_velocity) / inertia
    return linear, angular


def step(
    state: RigidBodyState,
    commanded: FloatArray,
    params: VehicleParams,
    dt: float,
    rng: np.random.Generator | None,
) -> RigidBodyState:
    """Advance the vehicle by one control period with semi-implicit Euler sub-steps.

    Raises:
        SimulationError: a field of the resulting state is not finite.

    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    substeps = max(1, round(dt / params.physics_dt))
    h = dt / substeps

    position = state.position.copy()
    velocity = state.velocity.copy()
    q = state.orientation.copy()
    omega = state.angular_velocity.copy()
    motors = state.motor_speeds.copy()
    linear = state.linear_accel
    angular = state.angular_accel

    for _ in range(substeps):
        motors = motor_response(commanded, motors, h, params, rng)
        linear, angular = accelerations(velocity, q, omega, motors, params)
        velocity = velocity + linear * h
        position = position + velocity * h
        omega = omega + angular * h
        q = q + 0.5 * h * quat_multiply(q, np.array([0.0, *omega]))
        q = q / np.linalg.norm(q)

    result = RigidBodyState(
        position=position,
        velocity=velocity,
        orientation=q,
        angular_velocity=omega,
        linear_accel=linear,
        angular_accel=angular,
        motor_speeds=motors,
        time=state.time + dt,
    )
    result.check_finite()
    return result


def mechanical_energy(state: RigidBodyState, params: VehicleParams) -> float:
    """Translational + potential + rotational energy [J]."""
    inertia = np.asarray(params.inertia_diag, dtype=np.float64)
    kinetic = 0.5 * params.mass * float(state.velocity @ state.velocity)
    potential = params.mass * params.gravity * float(state.position[2])
    rotational = 0.5 * float(inertia @ np.square(state.angular_velocity))
    return kinetic + potential + rotational


def with_motor_speeds(state: RigidBodyState, motor_speeds) -> RigidBodyState:
    return replace(state, motor_speeds=_vec(motor_speeds, 4))
