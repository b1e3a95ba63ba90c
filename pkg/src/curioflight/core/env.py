"""Flight task: random spawn, obstacles between vehicle and goal, shaped rewards."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
import math
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from curioflight.core import dynamics
from curioflight.core._logging import get_logger
from curioflight.core.dynamics import RigidBodyState
from curioflight.core.errors import EnvStateError, NumericalError
from curioflight.core.models import EnvConfig, VehicleParams

FloatArray = NDArray[np.float64]

ODOMETRY_SIZE = 18
MAX_OBSTACLES = 3
AUX_SIZE = 4 + 3 * MAX_OBSTACLES + 1
OBSERVATION_SIZE = ODOMETRY_SIZE + AUX_SIZE
ACTION_SIZE = 4

SAMPLES_PER_ROUND = 1000
MAX_WIDENING_ROUNDS = 50
WIDENING_FACTOR = 1.1

TRAJECTORY_HEADER = [
    "time", "x", "y", "z", "roll", "pitch", "yaw",
    "motor0", "motor1", "motor2", "motor3", "r_ext", "terminal_cause",
]

logger = get_logger(__name__)


class TerminalCause(str, Enum):
    NONE = "none"
    CRASH = "crash"
    OBSTACLE_HIT = "obstacle_hit"
    OUT_OF_BOUNDS = "out_of_bounds"
    TIMEOUT = "timeout"

    @property
    def is_failure(self) -> bool:
        return self in (TerminalCause.CRASH, TerminalCause.OBSTACLE_HIT)


@dataclass(frozen=True)
class Observation:
    """Agent input: odometry block (first layer) and auxiliary block (skip input).

    odometry: position(3), roll/pitch/yaw(3), velocity(3), angular velocity(3),
    linear accel(3), angular accel(3).
    aux: previous motor speeds(4), (dx, dy, distance) per obstacle slot(9),
    XY distance to goal(1).
    """

    odometry: FloatArray
    aux: FloatArray

    @property
    def vector(self) -> FloatArray:
        return np.concatenate([self.odometry, self.aux])

    @classmethod
    def from_vector(cls, vector: FloatArray) -> Observation:
        vector = np.asarray(vector, dtype=np.float64)
        return cls(odometry=vector[:ODOMETRY_SIZE].copy(), aux=vector[ODOMETRY_SIZE:].copy())


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    r_ext: float
    terminal: bool
    terminal_cause: TerminalCause
    pose_error: FloatArray
    goal_distance: float
    mean_obstacle_distance: float


def wrap_angle(angle: float) -> float:
    """Wrap into [-pi, pi)."""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def desired_yaw(position_xy, current_yaw: float = 0.0) -> float:
    """Yaw pointing from the vehicle toward the world origin.

    At the origin itself the current yaw is returned, so the yaw error is 0.
    """
    x, y = float(position_xy[0]), float(position_xy[1])
    if x == 0.0 and y == 0.0:
        return current_yaw
    return math.atan2(0.0 - y, 0.0 - x)


def compute_yaw_reward(psi_c: float, psi_d: float) -> float:
    return abs(wrap_angle(psi_d - psi_c))


def compute_flight_reward(pose, config: EnvConfig, psi_d: float | None = None) -> float:
    """Position shaping minus attitude error.

    Args:
        pose: (x, y, z, roll, pitch, yaw) of the vehicle.
        config: Goal, bounds and weights.
        psi_d: Desired yaw; defaults to the yaw pointing at the origin.

    Returns:
        alpha_p * sum of per-axis terms - alpha_a * attitude error. Each axis
        term is 1 - |d - c| / max, or -1.0 once |d - c| exceeds max / 2.

    """
    x, y, z, roll, pitch, yaw = (float(v) for v in pose)
    if psi_d is None:
        psi_d = desired_yaw((x, y), yaw)

    position_term = 0.0
    for desired, current, limit in zip(config.goal_position, (x, y, z), config.bounds):
        error = abs(desired - current)
        position_term += -1.0 if error > limit / 2 else 1.0 - error / limit

    attitude_error = (
        abs(config.goal_roll - roll)
        + abs(config.goal_pitch - pitch)
        + abs(wrap_angle(psi_d - yaw))
    )
    return config.alpha_p * position_term - config.alpha_a * attitude_error


def compute_velocity_reward(nu, omega, config: EnvConfig) -> float:
    return config.alpha_nu * float(np.linalg.norm(nu)) + config.alpha_omega * float(np.linalg.norm(omega))


def extrinsic_reward(pose, velocity, angular_velocity, config: EnvConfig) -> float:
    """Non-crash extrinsic reward: weighted flight and yaw terms plus velocity term."""
    x, y, yaw = float(pose[0]), float(pose[1]), float(pose[5])
    psi_d = desired_yaw((x, y), yaw)
    return (
        compute_flight_reward(pose, config, psi_d=psi_d) * config.alpha_flight
        + compute_yaw_reward(yaw, psi_d) * config.alpha_yaw
        + compute_velocity_reward(velocity, angular_velocity, config)
    )


def pose_of(state: RigidBodyState) -> FloatArray:
    roll, pitch, yaw = dynamics.quat_to_euler(state.orientation)
    return np.array([*state.position, roll, pitch, yaw])


def assemble_observation(
    state: RigidBodyState,
    prev_motors: FloatArray,
    obstacles: FloatArray,
    goal,
    config: EnvConfig,
    vehicle: VehicleParams,
) -> Observation:
    """Normalize the vehicle state and task geometry into an Observation."""
    scales = config.scales
    bounds = np.asarray(config.bounds, dtype=np.float64)
    distance_scale = bounds[0]

    odometry = np.concatenate([
        state.position / bounds,
        np.asarray(dynamics.quat_to_euler(state.orientation)) / math.pi,
        state.velocity / scales.velocity,
        state.angular_velocity / scales.angular_velocity,
        state.linear_accel / scales.linear_accel,
        state.angular_accel / scales.angular_accel,
    ])

    slots = np.zeros((MAX_OBSTACLES, 3))
    slots[:, 2] = 1.0
    xy = state.position[:2]
    for index, obstacle in enumerate(np.asarray(obstacles, dtype=np.float64).reshape(-1, 2)):
        delta = obstacle - xy
        slots[index] = (*delta / distance_scale, math.hypot(*delta) / distance_scale)

    goal_xy = np.asarray(goal, dtype=np.float64)[:2]
    goal_distance = math.hypot(*(goal_xy - xy)) / distance_scale
    aux = np.concatenate([
        np.asarray(prev_motors, dtype=np.float64) / vehicle.max_motor_speed,
        slots.reshape(-1),
        [goal_distance],
    ])
    return Observation(odometry=odometry, aux=aux)


def detect_terminal(
    state: RigidBodyState,
    obstacles: FloatArray,
    steps: int,
    config: EnvConfig,
) -> TerminalCause:
    """Classify the state; obstacle hits win over crashes over bounds over timeout."""
    x, y, z = state.position
    reach = config.obstacle_radius + config.collision_margin
    for ox, oy in np.asarray(obstacles, dtype=np.float64).reshape(-1, 2):
        if math.hypot(x - ox, y - oy) < reach and z < config.obstacle_height:
            return TerminalCause.OBSTACLE_HIT

    roll, pitch, _ = dynamics.quat_to_euler(state.orientation)
    if z < config.crash_altitude and state.velocity[2] < 0:
        return TerminalCause.CRASH
    if abs(roll) > config.max_tilt or abs(pitch) > config.max_tilt:
        return TerminalCause.CRASH

    x_max, y_max, z_max = config.bounds
    if abs(x) > x_max or abs(y) > y_max or z > z_max:
        return TerminalCause.OUT_OF_BOUNDS
    if steps >= config.max_flight_steps:
        return TerminalCause.TIMEOUT
    return TerminalCause.NONE


class QuadrotorEnv:
    """Single-threaded flight environment; pass independent RNGs to parallel copies."""

    def __init__(
        self,
        config: EnvConfig,
        vehicle: VehicleParams,
        record_trajectory: bool = False,
    ) -> None:
        self.config = config
        self.vehicle = vehicle
        self.record_trajectory = record_trajectory
        self.goal = np.asarray(config.goal_position, dtype=np.float64)
        self.obstacles = np.zeros((0, 2))
        self.corridor: tuple[FloatArray, FloatArray] = (np.zeros(2), np.zeros(2))
        self.trajectory: list[list[float | str]] = []
        self.steps = 0
        self._state: RigidBodyState | None = None
        self._prev_motors = np.zeros(4)
        self._terminal = False

    @property
    def state(self) -> RigidBodyState:
        if self._state is None:
            raise EnvStateError("Environment has not been reset")
        return self._state

    def action_to_motor(self, action: FloatArray) -> FloatArray:
        """Affine map from [-1, 1] to [0, w_max]."""
        clipped = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        return (clipped + 1.0) * 0.5 * self.vehicle.max_motor_speed

    def reset(self, rng: np.random.Generator) -> Observation:
        config = self.config
        position = np.asarray(config.spawn_position, dtype=np.float64)
        if config.init_position_range > 0:
            span = config.init_position_range
            position = position + rng.uniform(-span, span, size=3)
        attitude = np.zeros(3)
        if config.init_attitude_range > 0:
            span = config.init_attitude_range
            attitude = rng.uniform(-span, span, size=3)

        hover = dynamics.hover_speed(self.vehicle)
        self._state = RigidBodyState.create(
            position=position,
            orientation=dynamics.euler_to_quat(*attitude),
            motor_speeds=np.full(4, hover),
        )
        self._prev_motors = np.full(4, hover)
        self.obstacles = self._place_obstacles(rng, position[:2])
        self.steps = 0
        self._terminal = False
        self.trajectory = []
        return self.observe()

    def set_obstacles(self, obstacles_xy) -> None:
        """Replace the obstacle layout (scripted scenarios)."""
        obstacles = np.asarray(obstacles_xy, dtype=np.float64).reshape(-1, 2)
        if len(obstacles) > MAX_OBSTACLES:
            raise ValueError(f"At most {MAX_OBSTACLES} obstacles fit the observation")
        self.obstacles = obstacles

    def observe(self) -> Observation:
        return assemble_observation(
            self.state, self._prev_motors, self.obstacles, self.goal, self.config, self.vehicle,
        )

    def step(self, action: FloatArray, rng: np.random.Generator | None) -> StepResult:
        if self._state is None:
            raise EnvStateError("step() called before reset()")
        if self._terminal:
            raise EnvStateError("step() called after a terminal step without reset()")
        action = np.asarray(action, dtype=np.float64)
        if not np.all(np.isfinite(action)):
            raise NumericalError(f"Non-finite action {action}")

        commanded = self.action_to_motor(action)
        state = dynamics.step(self._state, commanded, self.vehicle, self.config.control_dt, rng)
        self._state = state
        self._prev_motors = commanded
        self.steps += 1

        cause = detect_terminal(state, self.obstacles, self.steps, self.config)
        pose = pose_of(state)
        if cause.is_failure:
            reward = self.config.crash_reward
        else:
            reward = extrinsic_reward(pose, state.velocity, state.angular_velocity, self.config)
        self._terminal = cause is not TerminalCause.NONE

        psi_d = desired_yaw(pose[:2], pose[5])
        pose_error = np.abs(np.array([
            pose[0] - self.goal[0],
            pose[1] - self.goal[1],
            pose[2] - self.goal[2],
            pose[3] - self.config.goal_roll,
            pose[4] - self.config.goal_pitch,
            wrap_angle(pose[5] - psi_d),
        ]))

        if self.record_trajectory:
            self.trajectory.append(
                [state.time, *pose, *state.motor_speeds, reward, cause.value],
            )

        return StepResult(
            observation=self.observe(),
            r_ext=reward,
            terminal=self._terminal,
            terminal_cause=cause,
            pose_error=pose_error,
            goal_distance=float(np.linalg.norm(state.position - self.goal)),
            mean_obstacle_distance=self.mean_obstacle_distance(),
        )

    def mean_obstacle_distance(self) -> float:
        if len(self.obstacles) == 0:
            return 0.0
        deltas = self.obstacles - self.state.position[:2]
        return float(np.mean(np.hypot(deltas[:, 0], deltas[:, 1])))

    def _place_obstacles(self, rng: np.random.Generator, vehicle_xy: FloatArray) -> FloatArray:
        config = self.config
        goal_xy = self.goal[:2]
        centre = (vehicle_xy + goal_xy) / 2
        half = np.maximum(np.abs(vehicle_xy - goal_xy) / 2, 2 * config.obstacle_radius)
        separation = 2 * config.obstacle_radius
        clearance = config.obstacle_radius + config.collision_margin

        for round_index in range(MAX_WIDENING_ROUNDS + 1):
            low, high = centre - half, centre + half
            placed: list[FloatArray] = []
            for _ in range(SAMPLES_PER_ROUND):
                if len(placed) == config.obstacle_count:
                    break
                candidate = rng.uniform(low, high)
                if any(np.linalg.norm(candidate - other) < separation for other in placed):
                    continue
                if np.linalg.norm(candidate - vehicle_xy) < clearance:
                    continue
                if np.linalg.norm(candidate - goal_xy) < clearance:
                    continue
                placed.append(candidate)
            if len(placed) == config.obstacle_count:
                self.corridor = (low, high)
                return np.array(placed).reshape(-1, 2)
            half = half * WIDENING_FACTOR
            logger.warning(
                "Obstacle placement failed after %d samples (round %d); widening corridor to %s",
                SAMPLES_PER_ROUND, round_index + 1, np.array2string(2 * half, precision=3),
            )
        raise EnvStateError(
            f"Could not place {config.obstacle_count} obstacles after {MAX_WIDENING_ROUNDS} widenings",
        )


def write_trajectory_csv(path: Path, rows: list[list[float | str]]) -> None:
    """Dump one flight: header row plus one row per control step."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_HEADER)
        for row in rows:
            writer.writerow([value if isinstance(value, str) else repr(float(value)) for value in row])
