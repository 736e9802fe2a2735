"""3-D vector helpers, unit-quaternion rotations and discrete filters.

Vectors are plain ``numpy`` arrays of shape ``(3,)``. Quaternions are stored
scalar-first ``(w, x, y, z)`` and rotate body-frame vectors into the world
frame.
"""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)

UNIT_TOL = 1e-9

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def vec3(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a.copy()


def cross(a, b) -> np.ndarray:
    # np.cross carries a lot of per-call overhead for 3-vectors
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def cross_rows(a, b) -> np.ndarray:
    """Row-wise cross product of two ``(N, 3)`` arrays."""
    return np.column_stack(
        (
            a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
            a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
            a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
        )
    )


def norm(v) -> float:
    return math.sqrt(float(v @ v))


def quat_multiply(p, q) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


class Rotation:
    """Body-to-world rotation backed by a unit quaternion."""

    __slots__ = ("q",)

    def __init__(self, q=(1.0, 0.0, 0.0, 0.0)):
        q = np.asarray(q, dtype=float).reshape(4)
        n = math.sqrt(float(q @ q))
        if n == 0.0 or not math.isfinite(n):
            raise ValueError(f"cannot build a rotation from quaternion {q!r}")
        if abs(n - 1.0) > UNIT_TOL:
            log.debug("renormalizing quaternion with norm %.12g", n)
        self.q = q / n

    @classmethod
    def identity(cls) -> Rotation:
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> Rotation:
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            return cls()
        axis = axis / n
        half = 0.5 * angle
        return cls(np.concatenate(([math.cos(half)], math.sin(half) * axis)))

    @classmethod
    def from_yaw(cls, yaw: float) -> Rotation:
        return cls.from_axis_angle(E3, yaw)

    def as_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def inverse(self) -> Rotation:
        w, x, y, z = self.q
        return Rotation((w, -x, -y, -z))

    def __mul__(self, other: Rotation) -> Rotation:
        return Rotation(quat_multiply(self.q, other.q))

    def apply(self, v) -> np.ndarray:
        return quat_to_matrix(self.q) @ np.asarray(v, dtype=float)

    def apply_inverse(self, v) -> np.ndarray:
        return quat_to_matrix(self.q).T @ np.asarray(v, dtype=float)

    def yaw(self) -> float:
        w, x, y, z = self.q
        return math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))

    def __repr__(self) -> str:
        return f"Rotation(q={self.q.tolist()})"


def rotate(r: Rotation, v) -> np.ndarray:
    """Rotate ``v`` from the body frame into the world frame."""
    return r.apply(v)


class LowPassFilter:
    """First-order exponential smoother on 3-vectors.

    ``y[k] = y[k-1] + dt / (tau + dt) * (u[k] - y[k-1])``; ``tau = 0`` passes
    the input straight through.
    """

    def __init__(self, tau: float, dt: float, initial=None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if tau < 0:
            raise ValueError("tau must be non-negative")
        self.tau = float(tau)
        self.dt = float(dt)
        self.gain = self.dt / (self.tau + self.dt)
        self.state = np.zeros(3) if initial is None else as_vec3(initial)

    def reset(self, value=None) -> None:
        self.state = np.zeros(3) if value is None else as_vec3(value)

    def step(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError(f"non-finite filter input {u!r}")
        self.state = self.state + self.gain * (u - self.state)
        return self.state.copy()


def lpf_step(f: LowPassFilter, u) -> np.ndarray:
    return f.step(u)


class FilteredDifferentiator:
    """Backward difference of a sampled 3-vector, smoothed by a low-pass filter.

    The first call has no history, returns zero and sets ``warming_up``.
    """

    def __init__(self, tau: float, dt: float):
        self.dt = float(dt)
        self.filter = LowPassFilter(tau, dt)
        self.previous: np.ndarray | None = None
        self.warming_up = True

    def reset(self) -> None:
        self.previous = None
        self.warming_up = True
        self.filter.reset()

    def step(self, u) -> np.ndarray:
        u = as_vec3(u)
        if self.previous is None:
            self.previous = u
            self.warming_up = True
            return np.zeros(3)
        raw = (u - self.previous) / self.dt
        self.previous = u
        self.warming_up = False
        return self.filter.step(raw)


def diff_step(d: FilteredDifferentiator, u) -> np.ndarray:
    return d.step(u)
