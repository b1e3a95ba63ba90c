"""Curioflight core models - configuration sections and run records."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vec3 = tuple[float, float, float]

DEFAULT_THRUST_COEFF = 8.54858e-6


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VehicleParams(_Section):
    """Hummingbird-class airframe; nominal values, not calibrated."""

    mass: float = Field(default=0.68, gt=0, description="Vehicle mass [kg]")
    inertia_diag: Vec3 = Field(
        default=(7.0e-3, 7.0e-3, 1.2e-2), description="Principal moments of inertia [kg m^2]",
    )
    arm_length: float = Field(default=0.17, gt=0, description="Rotor arm length [m]")
    thrust_coeff: float = Field(
        default=DEFAULT_THRUST_COEFF, gt=0, description="Rotor thrust coefficient k_f [N s^2/rad^2]",
    )
    torque_coeff: float = Field(
        default=1.6e-2 * DEFAULT_THRUST_COEFF,
        ge=0,
        description="Rotor drag-torque coefficient k_m [N m s^2/rad^2]",
    )
    motor_time_constant: float = Field(default=0.05, gt=0, description="Motor lag tau [s]")
    motor_noise_std: float = Field(default=5.0, ge=0, description="Motor speed noise std [rad/s]")
    linear_drag_coeff: float = Field(default=0.1, ge=0, description="Linear drag [N s/m]")
    angular_drag_coeff: float = Field(default=1e-4, ge=0, description="Angular drag [N m s/rad]")
    max_motor_speed: float = Field(default=838.0, gt=0, description="Motor speed limit [rad/s]")
    gravity: float = Field(default=9.81, ge=0, description="Gravity [m/s^2]")
    physics_dt: float = Field(default=1e-3, gt=0, description="Physics sub-step [s]")

    @field_validator("inertia_diag")
    @classmethod
    def _positive_inertia(cls, value: Vec3) -> Vec3:
        if any(component <= 0 for component in value):
            raise ValueError("inertia components must be > 0")
        return value


class ObservationScales(_Section):
    """Fixed per-channel normalizers; bounds, pi and motor limit cover the rest."""

    velocity: float = Field(default=5.0, gt=0, description="Linear velocity scale [m/s]")
    angular_velocity: float = Field(default=10.0, gt=0, description="Angular velocity scale [rad/s]")
    linear_accel: float = Field(default=20.0, gt=0, description="Linear acceleration scale [m/s^2]")
    angular_accel: float = Field(
        default=100.0, gt=0, description="Angular acceleration scale [rad/s^2]",
    )


class EnvConfig(_Section):
    """Task definition: goal, arena, obstacles and reward coefficients."""

    goal_position: Vec3 = Field(default=(0.0, 0.0, 1.5), description="Desired position [m]")
    goal_roll: float = Field(default=0.0, description="Desired roll [rad]")
    goal_pitch: float = Field(default=0.0, description="Desired pitch [rad]")
    bounds: Vec3 = Field(default=(5.0, 5.0, 3.0), description="x_max, y_max, z_max [m]")
    spawn_position: Vec3 = Field(default=(3.0, 3.0, 1.5), description="Spawn centre [m]")
    init_position_range: float = Field(default=1.0, ge=0, description="Spawn jitter per axis [m]")
    init_attitude_range: float = Field(default=0.3, ge=0, description="Attitude jitter [rad]")
    obstacle_count: int = Field(default=3, ge=0, le=3, description="Number of obstacles")
    obstacle_radius: float = Field(default=0.25, gt=0, description="Cylinder radius [m]")
    obstacle_height: float = Field(default=3.0, gt=0, description="Cylinder height [m]")
    collision_margin: float = Field(default=0.15, ge=0, description="Vehicle body radius [m]")
    alpha_p: float = Field(default=1.0, description="Position reward weight")
    alpha_a: float = Field(default=0.3, description="Attitude error weight")
    alpha_flight: float = Field(default=1.0, description="Flight reward weight")
    alpha_yaw: float = Field(default=-0.1, description="Yaw reward weight (negative penalizes)")
    alpha_nu: float = Field(default=-0.02, description="Linear speed weight")
    alpha_omega: float = Field(default=-0.02, description="Angular speed weight")
    crash_reward: float = Field(default=-10.0, description="Reward on crash or obstacle hit")
    crash_altitude: float = Field(default=0.05, description="Ground-contact altitude [m]")
    max_tilt: float = Field(default=math.pi / 2, gt=0, description="Roll/pitch crash limit [rad]")
    max_flight_steps: int = Field(default=1000, gt=0, description="Per-flight timeout [steps]")
    control_dt: float = Field(default=0.01, gt=0, description="Control period [s]")
    goal_tolerance: float = Field(default=0.3, gt=0, description="Reached-goal radius [m]")
    scales: ObservationScales = Field(default_factory=ObservationScales)

    @field_validator("bounds")
    @classmethod
    def _positive_bounds(cls, value: Vec3) -> Vec3:
        if any(component <= 0 for component in value):
            raise ValueError("bounds must be > 0")
        return value


class PpoConfig(_Section):
    """PPO with dual value heads."""

    batch_size: int = Field(default=16384, gt=0, description="Transitions per training batch")
    gamma: float = Field(default=0.99, gt=0, lt=1, description="Discount factor")
    lam: float = Field(default=0.95, gt=0, lt=1, description="GAE lambda")
    clip_epsilon: float = Field(default=0.2, gt=0, lt=1, description="Clip range epsilon")
    c1: float = Field(default=0.5, ge=0, description="Extrinsic value loss weight")
    c2: float = Field(default=0.01, ge=0, description="Entropy bonus weight")
    value_int_coef: float = Field(default=0.5, ge=0, description="Curiosity value loss weight")
    epochs: int = Field(default=10, gt=0, description="Passes over the batch per update")
    minibatch_size: int = Field(default=2048, gt=0, description="Minibatch size")
    lr_policy: float = Field(default=3e-4, ge=0, description="Policy learning rate")
    lr_value_ext: float = Field(default=1e-3, ge=0, description="Extrinsic value learning rate")
    lr_value_int: float = Field(default=3e-4, ge=0, description="Intrinsic value learning rate")
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    standard_td: bool = Field(default=False, description="Use the standard combined TD residual")
    normalize_advantages: bool = Field(default=True, description="Normalize advantages per batch")
    hidden_sizes: tuple[int, int] = Field(default=(256, 256), description="Hidden layer widths")
    init_log_std: float = Field(default=0.0, description="Initial exploration log std")


class IcmConfig(_Section):
    """Single-transition curiosity baseline."""

    beta: float = Field(default=0.2, gt=0, lt=1, description="Forward/inverse loss mix")
    eta: float = Field(default=1.0, gt=0, description="Reward scale")
    hidden_sizes: tuple[int, int] = Field(default=(128, 128))
    lr: float = Field(default=1e-3, ge=0)
    epochs: int = Field(default=1, gt=0, description="Passes over the batch per update")
    minibatch_size: int = Field(default=256, gt=0)


class HcmConfig(_Section):
    """Segment-level curiosity ensemble."""

    segment_length: int = Field(default=50, gt=0, description="Segment length n [steps]")
    stride: int = Field(default=25, gt=0, description="Anchor stride [steps]")
    heads_per_type: int = Field(default=5, gt=0, description="Heads per space (SS and SR)")
    beta: float = Field(default=0.2, gt=0, lt=1, description="Forward/inverse loss mix")
    alpha_curiosity: float = Field(default=0.1, ge=0, description="Curiosity reward scale")
    kappa: float = Field(default=0.9, gt=0, lt=1, description="Trajectory decay factor")
    hidden_sizes: tuple[int, int] = Field(default=(128, 128))
    lr: float = Field(default=1e-3, ge=0)
    epochs: int = Field(default=4, gt=0)
    minibatch_size: int = Field(default=256, gt=0)


class VizConfig(_Section):
    """Visitation grid resolution over the XY bounds and its rendering scale."""

    rows: int = Field(default=100, gt=0)
    cols: int = Field(default=100, gt=0)
    normalization: Literal["max", "log"] = Field(
        default="max",
        description="Rendering scale: divide by the busiest cell, or log(1 + count) by log(1 + max)",
    )


class RunConfig(_Section):
    """Complete training run. Every key has a default; unknown keys are rejected."""

    algorithm: Literal["ppo", "ppo_icm", "ppo_hcm"] = Field(default="ppo_hcm")
    seed: int = Field(default=0, ge=0)
    total_batches: int = Field(default=200, gt=0)
    output_dir: str = Field(default="runs/default")
    checkpoint_interval: int = Field(default=10, gt=0)
    vehicle: VehicleParams = Field(default_factory=VehicleParams)
    env: EnvConfig = Field(default_factory=EnvConfig)
    ppo: PpoConfig = Field(default_factory=PpoConfig)
    icm: IcmConfig = Field(default_factory=IcmConfig)
    hcm: HcmConfig = Field(default_factory=HcmConfig)
    viz: VizConfig = Field(default_factory=VizConfig)

    @model_validator(mode="after")
    def _segments_fit_batch(self) -> RunConfig:
        if self.algorithm == "ppo_hcm" and self.ppo.batch_size < 2 * self.hcm.segment_length + 1:
            raise ValueError("ppo.batch_size must be at least 2 * hcm.segment_length + 1")
        return self


METRICS_SCHEMA_VERSION = 1


class MetricsRow(BaseModel):
    """One row per training batch; column order is the CSV schema."""

    schema_version: int = Field(default=METRICS_SCHEMA_VERSION)
    batch: int = Field(description="Zero-based batch index")
    mean_r_ext: float = Field(description="Mean extrinsic reward per step")
    mean_r_int: float = Field(description="Mean intrinsic reward per step")
    flights: int = Field(description="Flights finished in the batch")
    failed_flights: int = Field(description="Flights ending in crash or obstacle hit")
    err_x: float
    err_y: float
    err_z: float
    err_roll: float
    err_pitch: float
    err_yaw: float
    goal_distance: float
    obstacle_distance: float
    policy_loss: float
    value_ext_loss: float
    value_int_loss: float
    entropy: float
    curiosity_loss: float = Field(description="Mean ICM/HCM training loss (0 for plain PPO)")


class UpdateStats(BaseModel):
    """Diagnostics reported by one PPO update."""

    policy_loss: float = 0.0
    value_ext_loss: float = 0.0
    value_int_loss: float = 0.0
    entropy: float = 0.0
    mean_ratio: float = 1.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    total_loss: float = 0.0
    minibatches: int = 0
    aborted: bool = False


class CuriosityStats(BaseModel):
    """Losses reported by an ICM or HCM update."""

    kind: Literal["none", "icm", "hcm"] = "none"
    inverse_loss: float = 0.0
    forward_loss: float = 0.0
    total_loss: float = 0.0
    mean_reward: float = 0.0
    samples: int = 0
    aborted_heads: list[int] = Field(default_factory=list)
    head_losses: list[float] = Field(default_factory=list)


class FlightOutcome(BaseModel):
    """Result of one evaluation flight."""

    flight: int
    outcome: Literal["reached_goal", "crash", "timeout"]
    terminal_cause: str
    steps: int
    final_pose_error: list[float] = Field(description="|x|,|y|,|z|,|roll|,|pitch|,|yaw| errors")
    final_goal_distance: float
    min_obstacle_distance: float
    total_reward: float
    trajectory_csv: str | None = None


class EvaluationReport(BaseModel):
    """Deterministic-policy evaluation summary."""

    checkpoint: str
    seed: int
    episodes: int
    reached_goal: int
    crashes: int
    timeouts: int
    flights: list[FlightOutcome] = Field(default_factory=list)


class SelfTestCheck(BaseModel):
    """Single oracle or property check."""

    name: str = Field(description="Short check identifier")
    passed: bool
    detail: str = Field(default="", description="Measured value versus tolerance")


class SelfTestSummary(BaseModel):
    total: int
    passed: int
    failed: int


class SelfTestMetadata(BaseModel):
    version: str = Field(description="curioflight version")
    python: str = Field(description="Python version")
    numpy: str | None = Field(default=None, description="NumPy version")


class SelfTestResult(BaseModel):
    """Canonical self-test output."""

    status: Literal["pass", "fail"]
    checks: list[SelfTestCheck] = Field(default_factory=list)
    summary: SelfTestSummary
    metadata: SelfTestMetadata
