"""Disturbance wrench observers and the record-fused force estimate."""

from __future__ import annotations

import numpy as np

from .mathcore import E3, FilteredDifferentiator, LowPassFilter, Rotation, as_vec3
from .sensing import ImuSample


class ForceObserver:
    """World-frame disturbance force from the accelerometer and commanded thrust.

    raw = m R acc - c_sigma R e3, then low-pass filtered.
    """

    def __init__(self, mass: float, tau: float, dt: float):
        self.mass = float(mass)
        self.filter = LowPassFilter(tau, dt)
        self.raw = np.zeros(3)
        self.estimate = np.zeros(3)

    def reset(self, value=None) -> None:
        self.filter.reset(value)
        self.estimate = self.filter.state.copy()

    def step(self, imu: ImuSample, attitude: Rotation, c_sigma: float) -> np.ndarray:
        if c_sigma < 0:
            raise ValueError("c_sigma must be non-negative")
        R = attitude.as_matrix()
        self.raw = self.mass * (R @ imu.accel) - c_sigma * (R @ E3)
        self.estimate = self.filter.step(self.raw)
        return self.estimate


def observe_force(obs: ForceObserver, imu: ImuSample, attitude: Rotation, c_sigma: float):
    return obs.step(imu, attitude, c_sigma)


class TorqueObserver:
    """Body-frame disturbance torque from rate-gyro data and commanded torque.

    raw = J dw/dt + w x (J w) - tau_p, with dw/dt from a filtered backward
    difference of the gyro stream; the sum is low-pass filtered. While the
    differentiator has no history the estimate is held at zero and
    ``warming_up`` is set.
    """

    def __init__(self, inertia, tau: float, dt: float, tau_diff: float = 0.02):
        self.J = np.asarray(inertia, dtype=float).reshape(3)
        self.diff = FilteredDifferentiator(tau_diff, dt)
        self.filter = LowPassFilter(tau, dt)
        self.raw = np.zeros(3)
        self.estimate = np.zeros(3)

    @property
    def warming_up(self) -> bool:
        return self.diff.warming_up

    def step(self, gyro, tau_p) -> np.ndarray:
        w = as_vec3(gyro)
        w_dot = self.diff.step(w)
        if self.diff.warming_up:
            return self.estimate
        Jw = self.J * w
        gyroscopic = np.array(
            [w[1] * Jw[2] - w[2] * Jw[1], w[2] * Jw[0] - w[0] * Jw[2], w[0] * Jw[1] - w[1] * Jw[0]]
        )
        self.raw = self.J * w_dot + gyroscopic - np.asarray(tau_p, dtype=float)
        self.estimate = self.filter.step(self.raw)
        return self.estimate


def observe_torque(obs: TorqueObserver, gyro, tau_p):
    return obs.step(gyro, tau_p)


def fuse_with_record(est: FusedForceEstimator, prev, recorded) -> np.ndarray:
    """Blend the previous estimate toward the recorded force at this position.

    ``recorded + F(prev - recorded)``, where F is the residual filter: one
    step of the first-order smoother from rest, i.e. a gain of
    ``dt / (tau + dt)`` on the residual. When ``prev == recorded`` the
    residual is exactly zero and so is its filtered value, whatever the
    estimator has seen before.
    """
    prev = np.asarray(prev, dtype=float)
    recorded = np.asarray(recorded, dtype=float)
    return recorded + est.gain * (prev - recorded)


class FusedForceEstimator:
    """Return-flight force estimate anchored on the outbound recording.

    The recursion ``f[k] = rec[k] + g * (f[k-1] - rec[k])`` is itself a
    first-order smoother of the recorded stream whose pole ``g`` is the
    residual-filter gain, so the estimate follows the recording with far
    less lag than the live observer at the same time constant. When the
    recorder has nothing relevant the live estimate passes through and
    becomes the new starting point.
    """

    def __init__(self, tau: float, dt: float):
        if dt <= 0 or tau < 0:
            raise ValueError("need dt > 0 and tau >= 0")
        self.tau = float(tau)
        self.dt = float(dt)
        self.gain = self.dt / (self.tau + self.dt)
        self.state = np.zeros(3)
        self.fallback = False

    def reset(self, value=None) -> None:
        self.state = np.zeros(3) if value is None else as_vec3(value)
        self.fallback = False

    def step(self, recorded, live_estimate) -> np.ndarray:
        if recorded is None:
            self.fallback = True
            self.state = as_vec3(live_estimate)
        else:
            self.fallback = False
            self.state = fuse_with_record(self, self.state, recorded)
        return self.state.copy()
