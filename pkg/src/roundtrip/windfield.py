"""Analytic air-velocity fields: round jets, uniform flow, sums and time gains.

Every field exposes ``velocity(points, t)`` taking an ``(N, 3)`` array of
world positions and returning ``(N, 3)`` air velocities in m/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LN2 = math.log(2.0)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("direction must be non-zero")
    return v / n


def _perpendicular_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 0.0, 1.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    u1 = np.cross(helper, axis)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(axis, u1)
    return u1, u2


class WindField:
    static = True

    def velocity(self, points, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError


@dataclass
class UniformFlow(WindField):
    air_velocity: Sequence[float] = (0.0, 0.0, 0.0)

    def velocity(self, points, t=0.0):
        points = np.atleast_2d(points)
        return np.broadcast_to(np.asarray(self.air_velocity, dtype=float), points.shape).copy()


@dataclass
class JetFlow(WindField):
    """Round jet with a flat core and a Gaussian skirt.

    The radial profile is 1 inside ``core_radius`` and decays as a Gaussian
    that reaches one half at ``half_width`` from the axis. Along the axis the
    speed holds ``ref_speed`` up to ``ref_distance`` and then falls off as
    ``ref_distance / axial``. Upstream of the exit plane the flow fades over
    one core radius. ``blocked_sector`` (degrees, measured about the axis from
    the first perpendicular basis vector) zeroes the flow in an angular slice,
    as if part of the nozzle exit were obstructed.

    ``turbulence`` adds a zero-mean fluctuation along the axis whose amplitude
    is ``turbulence`` times the local radial speed gradient times
    ``half_width``; it is a seeded sum of sinusoids in time, so the field stays
    a deterministic function of position and time.
    """

    origin: Sequence[float] = (1.0, -0.3, 1.0)
    direction: Sequence[float] = (0.0, 1.0, 0.0)
    ref_speed: float = 6.0
    ref_distance: float = 0.3
    core_radius: float = 0.06
    half_width: float = 0.15
    blocked_sector: tuple[float, float] | None = None
    turbulence: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.half_width <= self.core_radius:
            raise ValueError("half_width must exceed core_radius")
        if self.ref_distance <= 0 or self.core_radius < 0:
            raise ValueError("invalid jet geometry")
        self._origin = np.asarray(self.origin, dtype=float)
        self._axis = _unit(self.direction)
        self._u1, self._u2 = _perpendicular_basis(self._axis)
        self._skirt = self.half_width - self.core_radius
        if self.turbulence:
            rng = np.random.default_rng(self.seed)
            self._freqs = rng.uniform(2.0, 20.0, size=6)
            self._phases = rng.uniform(0.0, 2 * math.pi, size=6)
        self.static = not self.turbulence

    def radial_profile(self, r):
        r = np.asarray(r, dtype=float)
        s = np.maximum(r - self.core_radius, 0.0) / self._skirt
        return np.exp(-LN2 * s * s)

    def axial_gain(self, axial):
        axial = np.asarray(axial, dtype=float)
        downstream = self.ref_distance / np.maximum(axial, self.ref_distance)
        fade_len = max(self.core_radius, 1e-3)
        upstream = np.exp(-((np.minimum(axial, 0.0) / fade_len) ** 2))
        return np.where(axial >= 0.0, downstream, upstream)

    def _decompose(self, points):
        d = np.atleast_2d(np.asarray(points, dtype=float)) - self._origin
        axial = d @ self._axis
        radial_vec = d - axial[:, None] * self._axis
        r = np.sqrt(np.einsum("ij,ij->i", radial_vec, radial_vec))
        return d, axial, r

    def speed(self, points, t=0.0) -> np.ndarray:
        d, axial, r = self._decompose(points)
        s = self.ref_speed * self.axial_gain(axial) * self.radial_profile(r)
        if self.blocked_sector is not None:
            lo, hi = (math.radians(a) for a in self.blocked_sector)
            phi = np.arctan2(d @ self._u2, d @ self._u1)
            phi = np.mod(phi - lo, 2 * math.pi)
            s = np.where(phi < (hi - lo) % (2 * math.pi), 0.0, s)
        if self.turbulence:
            excess = np.maximum(r - self.core_radius, 0.0)
            grad = self.ref_speed * self.axial_gain(axial) * (
                2 * LN2 * excess / self._skirt**2
            ) * self.radial_profile(r)
            wobble = np.sin(self._freqs * t + self._phases).sum() / math.sqrt(3.0)
            s = s + self.turbulence * grad * self.half_width * wobble
        return s

    def velocity(self, points, t=0.0):
        return self.speed(points, t)[:, None] * self._axis


@dataclass
class CompositeFlow(WindField):
    components: list = field(default_factory=list)

    def __post_init__(self):
        self.static = all(c.static for c in self.components)

    def velocity(self, points, t=0.0):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(points)
        for c in self.components:
            out = out + c.velocity(points, t)
        return out


class SinusoidalGain:
    def __init__(self, mean: float = 1.0, amplitude: float = 0.0, period: float = 1.0):
        self.mean, self.amplitude, self.period = mean, amplitude, period

    def __call__(self, t: float) -> float:
        return self.mean + self.amplitude * math.sin(2 * math.pi * t / self.period)


class PiecewiseGain:
    """Gain ``values[i]`` from ``times[i]`` until the next breakpoint."""

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        if len(times) != len(values) or not times:
            raise ValueError("times and values must be non-empty and equally long")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoints must increase")
        self.times = list(times)
        self.values = list(values)

    def __call__(self, t: float) -> float:
        g = self.values[0]
        for ti, vi in zip(self.times, self.values):
            if t >= ti:
                g = vi
        return g


@dataclass
class TimeVaryingFlow(WindField):
    base: WindField = field(default_factory=UniformFlow)
    gain: Callable[[float], float] = field(default_factory=SinusoidalGain)

    def __post_init__(self):
        self.static = False

    def velocity(self, points, t=0.0):
        return self.base.velocity(points, t) * float(self.gain(t))


def air_velocity(wind: WindField, position, t: float = 0.0) -> np.ndarray:
    return wind.velocity(np.asarray(position, dtype=float).reshape(1, 3), t)[0]


def sample_plane(
    wind: WindField,
    axis: str,
    value: float,
    extent: tuple[tuple[float, float], tuple[float, float]],
    resolution: float,
    t: float = 0.0,
) -> np.ndarray:
    """Grid a field on the plane ``axis = value``.

    Returns an ``(N, 7)`` array with columns x, y, z, vx, vy, vz, speed.
    """
    free = [a for a in "xyz" if a != axis]
    if axis not in "xyz" or len(axis) != 1:
        raise ValueError(f"plane axis must be x, y or z, got {axis!r}")
    (a0, a1), (b0, b1) = extent
    na = int(round((a1 - a0) / resolution)) + 1
    nb = int(round((b1 - b0) / resolution)) + 1
    ga = np.linspace(a0, a1, na)
    gb = np.linspace(b0, b1, nb)
    A, B = np.meshgrid(ga, gb, indexing="ij")
    pts = np.zeros((A.size, 3))
    pts[:, "xyz".index(free[0])] = A.ravel()
    pts[:, "xyz".index(free[1])] = B.ravel()
    pts[:, "xyz".index(axis)] = value
    vel = wind.velocity(pts, t)
    speed = np.linalg.norm(vel, axis=1)
    return np.column_stack((pts, vel, speed))
