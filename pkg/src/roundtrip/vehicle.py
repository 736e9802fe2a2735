"""Quadrotor rigid-body model: parameters, motor allocation, RK4 dynamics, drag.

World frame is z-up with gravity along -z. Body frame has x forward, y left
and z along the thrust axis. The state vector used by the integrator is laid
out as ``[p(3), v(3), q(4), omega(3)]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mathcore import Rotation, as_vec3, cross_rows

STATE_SIZE = 13


class SimulationDiverged(RuntimeError):
    """Raised when the integrated state stops being finite."""


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 0.154
    arm_length: float = 0.0585
    inertia: tuple[float, float, float] = (8e-5, 8e-5, 1.4e-4)
    max_thrust: float = 4.6
    gravity: float = 9.81
    # reaction torque per newton of rotor thrust (m)
    yaw_torque_coeff: float = 0.006
    # drag force = (linear + quadratic * |v_rel|) * v_rel
    drag_linear: float = 0.0
    drag_quadratic: float = 0.15 / 36.0
    # applied/commanded thrust ratio; 1.0 means the motor model is exact
    thrust_mismatch: float = 1.0

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise ValueError("inertia must have three positive diagonal entries")
        if self.arm_length <= 0:
            raise ValueError("arm_length must be positive")
        if self.max_thrust <= self.mass * self.gravity:
            raise ValueError("thrust-to-weight ratio must exceed 1")
        object.__setattr__(self, "inertia", tuple(float(j) for j in self.inertia))

    @property
    def max_motor_force(self) -> float:
        return self.max_thrust / 4.0

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity

    @property
    def gravity_vector(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.gravity])

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.diag(self.inertia)

    def rotor_positions(self) -> np.ndarray:
        """Body-frame rotor positions, X configuration, order FR, FL, BL, BR."""
        d = self.arm_length / math.sqrt(2.0)
        return np.array([[d, -d, 0.0], [d, d, 0.0], [-d, d, 0.0], [-d, -d, 0.0]])

    def allocation_matrix(self) -> np.ndarray:
        """Maps the four motor forces to ``[thrust, tau_x, tau_y, tau_z]``."""
        r = self.rotor_positions()
        k = self.yaw_torque_coeff
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                r[:, 1],
                -r[:, 0],
                [k, -k, k, -k],
            ]
        )

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class VehicleState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: Rotation = field(default_factory=Rotation.identity)
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_array(self) -> np.ndarray:
        return np.concatenate(
            (self.position, self.velocity, self.attitude.q, self.angular_velocity)
        ).astype(float)

    @classmethod
    def from_array(cls, x) -> VehicleState:
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), Rotation(x[6:10]), x[10:13].copy())

    @classmethod
    def hover_at(cls, position, yaw: float = 0.0) -> VehicleState:
        return cls(position=as_vec3(position), attitude=Rotation.from_yaw(yaw))


@dataclass(frozen=True)
class MotorCommand:
    forces: tuple[float, float, float, float]
    saturated: bool = False

    @property
    def total(self) -> float:
        return float(sum(self.forces))


@dataclass
class Wrench:
    """Force in the world frame (N) and torque in the body frame (N m)."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __add__(self, other: Wrench) -> Wrench:
        return Wrench(self.force + other.force, self.torque + other.torque)

    @classmethod
    def zero(cls) -> Wrench:
        return cls()


class Mixer:
    """X-configuration allocation with thrust-priority saturation."""

    def __init__(self, params: VehicleParams):
        self.params = params
        self.A = params.allocation_matrix()
        self.A_inv = np.linalg.inv(self.A)
        self.f_max = params.max_motor_force

    def mix(self, total_thrust: float, torque) -> MotorCommand:
        if total_thrust < 0:
            raise ValueError("total thrust must be non-negative")
        f_max = self.f_max
        base = np.full(4, total_thrust / 4.0)
        delta = self.A_inv[:, 1:] @ np.asarray(torque, dtype=float)
        forces = base + delta
        if forces.min() >= 0.0 and forces.max() <= f_max:
            return MotorCommand(tuple(forces.tolist()))
        # keep collective thrust, shrink the torque part until every motor fits
        base = np.clip(base, 0.0, f_max)
        scale = 1.0
        for b, d in zip(base, delta):
            if d > 0:
                scale = min(scale, (f_max - b) / d)
            elif d < 0:
                scale = min(scale, (0.0 - b) / d)
        scale = max(scale, 0.0)
        forces = np.clip(base + scale * delta, 0.0, f_max)
        return MotorCommand(tuple(forces.tolist()), saturated=True)

    def unmix(self, cmd: MotorCommand) -> tuple[float, np.ndarray]:
        out = self.A @ np.asarray(cmd.forces, dtype=float)
        return float(out[0]), out[1:].copy()


def mix(total_thrust: float, torque_cmd, params: VehicleParams) -> MotorCommand:
    return Mixer(params).mix(total_thrust, torque_cmd)


def unmix(cmd: MotorCommand, params: VehicleParams) -> tuple[float, np.ndarray]:
    return Mixer(params).unmix(cmd)


def state_derivative(x, thrust, torque, dist_force, dist_torque, params: VehicleParams):
    """Time derivative of the 13-element state under held inputs."""
    px, py, pz, vx, vy, vz, qw, qx, qy, qz, wx, wy, wz = x.tolist()
    m = params.mass
    jx, jy, jz = params.inertia
    tx, ty, tz = torque
    fx, fy, fz = dist_force
    dx, dy, dz = dist_torque

    # third column of R(q) is the body z axis in the world frame
    bx = 2.0 * (qx * qz + qw * qy)
    by = 2.0 * (qy * qz - qw * qx)
    bz = 1.0 - 2.0 * (qx * qx + qy * qy)

    ax = (thrust * bx + fx) / m
    ay = (thrust * by + fy) / m
    az = (thrust * bz + fz) / m - params.gravity

    dqw = 0.5 * (-qx * wx - qy * wy - qz * wz)
    dqx = 0.5 * (qw * wx + qy * wz - qz * wy)
    dqy = 0.5 * (qw * wy - qx * wz + qz * wx)
    dqz = 0.5 * (qw * wz + qx * wy - qy * wx)

    hx, hy, hz = jx * wx, jy * wy, jz * wz
    dwx = (tx + dx - (wy * hz - wz * hy)) / jx
    dwy = (ty + dy - (wz * hx - wx * hz)) / jy
    dwz = (tz + dz - (wx * hy - wy * hx)) / jz

    return np.array([vx, vy, vz, ax, ay, az, dqw, dqx, dqy, dqz, dwx, dwy, dwz])


def linear_acceleration(x, thrust, dist_force, params: VehicleParams) -> np.ndarray:
    """World-frame acceleration for the current state and held inputs."""
    d = state_derivative(x, thrust, (0.0, 0.0, 0.0), dist_force, (0.0, 0.0, 0.0), params)
    return d[3:6]


def rk4_step(x, thrust, torque, dist_force, dist_torque, params: VehicleParams, dt: float):
    """One RK4 step of the state vector; inputs are held over the step."""
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01] s, got {dt}")
    args = (thrust, torque, dist_force, dist_torque, params)
    k1 = state_derivative(x, *args)
    k2 = state_derivative(x + (0.5 * dt) * k1, *args)
    k3 = state_derivative(x + (0.5 * dt) * k2, *args)
    k4 = state_derivative(x + dt * k3, *args)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q = out[6:10]
    out[6:10] = q / math.sqrt(float(q @ q))
    if not np.all(np.isfinite(out)):
        raise SimulationDiverged(f"non-finite state after step: {out.tolist()}")
    return out


def step_dynamics(
    state: VehicleState,
    cmd: MotorCommand,
    disturbance: Wrench,
    params: VehicleParams,
    dt: float,
) -> VehicleState:
    """Advance the rigid body by ``dt`` under a motor command and external wrench."""
    thrust, torque = unmix(cmd, params)
    thrust *= params.thrust_mismatch
    torque = torque * params.thrust_mismatch
    x = rk4_step(
        state.to_array(),
        thrust,
        torque.tolist(),
        np.asarray(disturbance.force, dtype=float).tolist(),
        np.asarray(disturbance.torque, dtype=float).tolist(),
        params,
        dt,
    )
    return VehicleState.from_array(x)


def _drag_force(v_rel: np.ndarray, params: VehicleParams, share: float = 1.0):
    speed = np.linalg.norm(v_rel, axis=-1, keepdims=True)
    return share * (params.drag_linear + params.drag_quadratic * speed) * v_rel


def rotor_points_world(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """World-frame positions of the four rotors."""
    R = state.attitude.as_matrix()
    return state.position + params.rotor_positions() @ R.T


def drag_wrench(
    state: VehicleState,
    air_velocity,
    params: VehicleParams,
    rotor_air_velocities=None,
) -> Wrench:
    """Aerodynamic drag from the wind relative to the vehicle.

    The force uses the air velocity at the vehicle center. The torque sums the
    moments of per-rotor drag shares, each driven by the air velocity sampled
    at that rotor, so it is zero in a uniform field and picks up a yaw
    component when one side of the vehicle sits in stronger flow. Without
    ``rotor_air_velocities`` the field is treated as uniform over the span.
    """
    force, torque = drag_from_arrays(
        state.velocity, state.attitude.as_matrix(), air_velocity, rotor_air_velocities, params
    )
    return Wrench(force, torque)


def drag_from_arrays(velocity, R, air_center, air_rotors, params: VehicleParams):
    """Array form of :func:`drag_wrench`; ``R`` is the body-to-world matrix."""
    velocity = np.asarray(velocity, dtype=float)
    force = _drag_force(np.asarray(air_center, dtype=float) - velocity, params)
    if air_rotors is None:
        return force, np.zeros(3)
    v_rel_rotors = np.asarray(air_rotors, dtype=float) - velocity
    f_rotors_body = _drag_force(v_rel_rotors, params, 0.25) @ R
    moments = cross_rows(params.rotor_positions(), f_rotors_body)
    # diagonal pairs first so a uniform field cancels exactly
    torque = (moments[0] + moments[2]) + (moments[1] + moments[3])
    return force, torque
