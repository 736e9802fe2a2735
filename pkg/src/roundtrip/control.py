"""Cascaded PD position control and a tilt-prioritized attitude controller.

The position loop turns reference tracking errors into a desired world-frame
force, subtracting the disturbance estimate in use. The attitude loop turns
that force into a collective thrust and a body torque, correcting thrust
direction before heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .mathcore import E3, Rotation, as_vec3, cross, norm, quat_multiply
from .vehicle import VehicleParams


class Mode(str, Enum):
    PD_ONLY = "pd-only"
    FEEDBACK = "feedback"
    FEEDFORWARD = "feedforward"


MODE_CODES = {Mode.PD_ONLY: 0, Mode.FEEDBACK: 1, Mode.FEEDFORWARD: 2}


@dataclass(frozen=True)
class ControllerGains:
    kp: tuple[float, float, float] = (4.0, 4.0, 4.0)
    kd: tuple[float, float, float] = (2.8, 2.8, 2.8)
    attitude_tau: tuple[float, float] = (0.06, 0.06)
    yaw_tau: float = 0.2

    def __post_init__(self):
        values = (*self.kp, *self.kd, *self.attitude_tau, self.yaw_tau)
        if min(values) <= 0:
            raise ValueError("all gains and time constants must be positive")
        position_bandwidth = max(math.sqrt(k) for k in self.kp)
        if 1.0 / max(self.attitude_tau) < 4.0 * position_bandwidth:
            raise ValueError("attitude loop must be at least 4x faster than the position loop")

    @classmethod
    def from_natural_frequency(
        cls, omega: float = 2.0, damping: float = 0.7, attitude_tau: float = 0.06, yaw_tau: float = 0.2
    ) -> ControllerGains:
        kp = omega * omega
        kd = 2.0 * damping * omega
        return cls((kp,) * 3, (kd,) * 3, (attitude_tau, attitude_tau), yaw_tau)

    def time_constants(self) -> np.ndarray:
        return np.array([self.attitude_tau[0], self.attitude_tau[1], self.yaw_tau])


@dataclass
class ControlOutput:
    thrust: float
    torque: np.ndarray
    thrust_saturated: bool = False
    degenerate: bool = False
    flags: dict = field(default_factory=dict)


def position_loop(
    position,
    velocity,
    p_ref,
    v_ref,
    a_ref,
    f_hat,
    params: VehicleParams,
    gains: ControllerGains,
) -> np.ndarray:
    """Desired world-frame force for the PD law with disturbance compensation."""
    e_p = np.asarray(p_ref, dtype=float) - np.asarray(position, dtype=float)
    e_v = np.asarray(v_ref, dtype=float) - np.asarray(velocity, dtype=float)
    acc = np.asarray(a_ref, dtype=float) + np.asarray(gains.kp) * e_p + np.asarray(gains.kd) * e_v
    return params.mass * acc - params.mass * params.gravity_vector - np.asarray(f_hat, dtype=float)


def attitude_error(attitude: Rotation, force_dir, yaw_des: float):
    """Split the attitude error into a body-frame tilt vector and a yaw angle.

    The desired attitude has body z along ``force_dir`` and heading
    ``yaw_des``. Its error quaternion relative to the current attitude is
    factored into a tilt about a horizontal body axis followed by a yaw about
    body z. Returns ``(tilt_vector, yaw_error, degenerate)``; ``degenerate``
    marks a desired direction anti-parallel to body z, in which case the tilt
    is taken about body x and the yaw error is zero.
    """
    z_des = np.asarray(force_dir, dtype=float)
    z_body = attitude.apply_inverse(z_des)
    if z_body[2] < -1.0 + 1e-12 and math.hypot(z_body[0], z_body[1]) < 1e-9:
        return np.array([math.pi, 0.0, 0.0]), 0.0, True

    c, s = math.cos(yaw_des), math.sin(yaw_des)
    x_c = np.array([c, s, 0.0])
    y_des = cross(z_des, x_c)
    n = norm(y_des)
    if n < 1e-9:
        y_c = np.array([-s, c, 0.0])
        x_des = cross(y_c, z_des)
        x_des /= norm(x_des)
        y_des = cross(z_des, x_des)
    else:
        y_des /= n
        x_des = cross(y_des, z_des)
    q_des = _matrix_to_quat(np.column_stack((x_des, y_des, z_des)))

    w, x, y, z = attitude.q
    q_err = quat_multiply((w, -x, -y, -z), q_des)
    if q_err[0] < 0:
        q_err = -q_err
    ew, ex, ey, ez = q_err
    n_yaw = math.hypot(ew, ez)
    if n_yaw < 1e-12:
        tilt_q = q_err
        yaw_err = 0.0
    else:
        yaw_err = 2.0 * math.atan2(ez, ew)
        tilt_q = np.array([n_yaw, (ew * ex - ey * ez) / n_yaw, (ew * ey + ex * ez) / n_yaw, 0.0])
    v = tilt_q[1:]
    sin_half = norm(v)
    if sin_half < 1e-15:
        tilt = np.zeros(3)
    else:
        tilt = (2.0 * math.atan2(sin_half, tilt_q[0]) / sin_half) * v
    yaw_err = math.atan2(math.sin(yaw_err), math.cos(yaw_err))
    return tilt, yaw_err, False


def _matrix_to_quat(R: np.ndarray) -> np.ndarray:
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q / norm(q)


def attitude_loop(
    attitude: Rotation,
    desired_force,
    yaw_des: float,
    params: VehicleParams,
    gains: ControllerGains,
    angular_velocity=(0.0, 0.0, 0.0),
) -> ControlOutput:
    """Collective thrust and body torque for a desired world-frame force.

    The thrust is the projection of the (limit-scaled) desired force onto the
    current body z axis. Each attitude error component decays first-order
    with its time constant ``T``: the commanded rate is ``e / T`` and the
    inner rate loop runs with time constant ``T / 2``, so
    ``torque_i = 2 J_i (e_i / T_i - w_i) / T_i + (w x J w)_i``.
    """
    F = as_vec3(desired_force)
    w = as_vec3(angular_velocity)
    magnitude = norm(F)
    flags = {}
    if magnitude < 1e-12:
        return ControlOutput(0.0, np.zeros(3), degenerate=True, flags={"zero_force": True})
    saturated = magnitude > params.max_thrust
    if saturated:
        F = F * (params.max_thrust / magnitude)
        magnitude = params.max_thrust
    z_body_world = attitude.apply(E3)
    thrust = min(max(float(F @ z_body_world), 0.0), params.max_thrust)

    tilt, yaw_err, degenerate = attitude_error(attitude, F / magnitude, yaw_des)
    if degenerate:
        flags["antiparallel"] = True
    err = np.array([tilt[0], tilt[1], yaw_err])
    T = gains.time_constants()
    J = np.asarray(params.inertia)
    Jw = J * w
    gyroscopic = cross(w, Jw)
    torque = 2.0 * J * (err / T - w) / T + gyroscopic
    return ControlOutput(thrust, torque, thrust_saturated=saturated, degenerate=degenerate, flags=flags)


@dataclass
class FeedforwardInputs:
    force: np.ndarray
    torque: np.ndarray
    active: bool


def compose_feedforward(live_force, live_torque, lookup, fused) -> FeedforwardInputs:
    """Pick the disturbance terms the return-flight controller compensates.

    ``lookup`` is a recorder lookup result and ``fused`` the
    :class:`~roundtrip.estimation.FusedForceEstimator`. With a usable record the
    position loop gets the fused force and the attitude loop cancels the
    recorded torque; on fallback both revert to the live observer estimates.
    """
    if lookup is None or lookup.fallback:
        fused.step(None, live_force)
        return FeedforwardInputs(as_vec3(live_force), as_vec3(live_torque), False)
    force = fused.step(lookup.record.force, live_force)
    return FeedforwardInputs(force, as_vec3(lookup.record.torque), True)
