"""Simulated IMU and position measurements, and integer-ratio downsampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .vehicle import VehicleState


@dataclass(frozen=True)
class NoiseParams:
    """Sensor noise levels. The defaults are assumptions, not measured specs."""

    accel_sigma: float = 0.05
    gyro_sigma: float = 0.002
    accel_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    position_sigma: float = 0.001

    @classmethod
    def noiseless(cls) -> NoiseParams:
        return cls(accel_sigma=0.0, gyro_sigma=0.0, position_sigma=0.0)


@dataclass(frozen=True)
class RateSchedule:
    sim_hz: int = 1000
    imu_hz: int = 500
    position_hz: int = 200
    command_hz: int = 50
    record_hz: int = 50

    def __post_init__(self):
        for name in ("imu_hz", "position_hz", "command_hz", "record_hz"):
            rate = getattr(self, name)
            if rate <= 0 or self.sim_hz % rate:
                raise ValueError(f"{name}={rate} does not divide sim_hz={self.sim_hz}")
        if self.record_hz > min(self.imu_hz, self.position_hz, self.command_hz):
            raise ValueError("record rate may not exceed any other rate")
        if self.imu_hz % self.command_hz or self.imu_hz % self.record_hz:
            raise ValueError("command and record rates must divide the IMU rate")

    @property
    def dt(self) -> float:
        return 1.0 / self.sim_hz

    def divider(self, rate: int) -> int:
        return self.sim_hz // rate


@dataclass
class ImuSample:
    t: float
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))


def sample_imu(
    truth: VehicleState,
    true_accel,
    noise: NoiseParams,
    rng: np.random.Generator | None,
    gravity=(0.0, 0.0, -9.81),
    t: float = 0.0,
) -> ImuSample:
    """Accelerometer and gyro readings for the true state and acceleration.

    The accelerometer senses ``R^T (a - g)``: at rest it reads +g along the
    body z axis, in free fall it reads zero. Noise draws are skipped entirely
    when the corresponding sigma is zero, so a noiseless run never touches
    ``rng``.
    """
    specific = truth.attitude.apply_inverse(np.asarray(true_accel) - np.asarray(gravity))
    accel = specific + np.asarray(noise.accel_bias)
    gyro = np.asarray(truth.angular_velocity, dtype=float) + np.asarray(noise.gyro_bias)
    if noise.accel_sigma > 0:
        accel = accel + rng.normal(0.0, noise.accel_sigma, 3)
    if noise.gyro_sigma > 0:
        gyro = gyro + rng.normal(0.0, noise.gyro_sigma, 3)
    return ImuSample(t, accel, gyro)


def measure_position(position, noise: NoiseParams, rng: np.random.Generator | None):
    p = np.asarray(position, dtype=float).copy()
    if noise.position_sigma > 0:
        p = p + rng.normal(0.0, noise.position_sigma, 3)
    return p


def downsample(stream: Sequence, source_hz: int, target_hz: int):
    """Keep every ``source_hz // target_hz``-th sample, starting with the first."""
    if target_hz <= 0 or source_hz % target_hz:
        raise ValueError(f"cannot downsample {source_hz} Hz to {target_hz} Hz")
    return stream[:: source_hz // target_hz]


def zero_order_hold(stream: Sequence, factor: int) -> list:
    """Repeat each sample ``factor`` times (inverse of ``downsample`` in rate)."""
    if factor <= 0:
        raise ValueError("factor must be positive")
    return [s for s in stream for _ in range(factor)]
