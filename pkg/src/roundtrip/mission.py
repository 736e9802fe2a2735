"""Round-trip missions: reference trajectories, the multi-rate closed loop, metrics.

A mission flies A -> B while recording disturbance estimates against
position, hovers at B, then flies back. The return leg can ignore
disturbances (``pd-only``), compensate the live estimate (``feedback``) or
use the recording (``feedforward``).
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .control import MODE_CODES, ControllerGains, Mode, attitude_loop, compose_feedforward, position_loop
from .estimation import ForceObserver, FusedForceEstimator, TorqueObserver
from .mathcore import Rotation, as_vec3, quat_to_matrix
from .recorder import DEFAULT_FALLBACK_DISTANCE, DisturbanceRecord, DisturbanceTrack
from .sensing import NoiseParams, RateSchedule, measure_position, sample_imu
from .vehicle import (
    Mixer,
    SimulationDiverged,
    VehicleParams,
    VehicleState,
    Wrench,
    drag_from_arrays,
    linear_acceleration,
    rk4_step,
)
from .windfield import UniformFlow, WindField

LEG_CODES = {"outbound": 0, "dwell": 1, "return": 2, "hold": 3}

TRUTH_COLUMNS = (
    "t", "leg", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz",
)
ONBOARD_COLUMNS = (
    "t", "leg", "ax", "ay", "az", "gx", "gy", "gz",
    "fhx", "fhy", "fhz", "thx", "thy", "thz", "warmup",
    "thrust_cmd", "tpx", "tpy", "tpz",
    "fdx", "fdy", "fdz", "tdx", "tdy", "tdz",
)
CONTROL_COLUMNS = (
    "t", "leg", "mode", "px", "py", "pz", "rx", "ry", "rz", "rvx", "rvy", "rvz",
    "mx", "my", "mz", "Fx", "Fy", "Fz", "fux", "fuy", "fuz", "tux", "tuy", "tuz",
    "lookup_index", "lookup_distance", "ff_active", "motor_saturated",
    "dpx", "dpy", "dpz",
)


class TrajectoryError(ValueError):
    pass


@dataclass
class LineTrajectory:
    """Straight segment flown with a trapezoidal speed profile."""

    start: np.ndarray
    end: np.ndarray
    speed: float
    accel: float
    t0: float = 0.0

    def __post_init__(self):
        self.start = as_vec3(self.start)
        self.end = as_vec3(self.end)
        if self.speed <= 0 or self.accel <= 0:
            raise TrajectoryError("speed and acceleration limit must be positive")
        delta = self.end - self.start
        self.length = float(np.linalg.norm(delta))
        if self.length < 1e-6:
            raise TrajectoryError("start and end coincide")
        self.direction = delta / self.length
        ramp_len = self.speed**2 / self.accel
        if ramp_len >= self.length:
            self.peak_speed = math.sqrt(self.accel * self.length)
            self.cruise_duration = 0.0
        else:
            self.peak_speed = self.speed
            self.cruise_duration = (self.length - ramp_len) / self.speed
        self.ramp_duration = self.peak_speed / self.accel
        self.duration = 2.0 * self.ramp_duration + self.cruise_duration

    def sample(self, t: float):
        """Reference position, velocity and acceleration at absolute time ``t``."""
        tau = min(max(t - self.t0, 0.0), self.duration)
        a, vp, tr = self.accel, self.peak_speed, self.ramp_duration
        if tau < tr:
            s, ds, dds = 0.5 * a * tau * tau, a * tau, a
        elif tau < tr + self.cruise_duration:
            s, ds, dds = 0.5 * vp * tr + vp * (tau - tr), vp, 0.0
        elif tau < self.duration:
            rem = self.duration - tau
            s, ds, dds = self.length - 0.5 * a * rem * rem, a * rem, -a
        else:
            s, ds, dds = self.length, 0.0, 0.0
        u = self.direction
        return self.start + s * u, ds * u, dds * u


@dataclass
class HoldTrajectory:
    point: np.ndarray
    duration: float
    t0: float = 0.0

    def __post_init__(self):
        self.point = as_vec3(self.point)
        self._zero = np.zeros(3)

    def sample(self, t: float):
        return self.point.copy(), self._zero.copy(), self._zero.copy()


def generate_trajectory(start, end, speed: float, accel: float, t0: float = 0.0) -> LineTrajectory:
    return LineTrajectory(start, end, speed, accel, t0)


@dataclass(frozen=True)
class MissionPlan:
    origin: tuple[float, float, float] = (0.0, 0.0, 1.0)
    target: tuple[float, float, float] = (2.0, 0.0, 1.0)
    outbound_speed: float = 0.1
    return_speed: float = 1.0
    accel_limit: float = 1.0
    dwell: float = 2.0
    outbound_mode: Mode = Mode.FEEDBACK
    return_mode: Mode = Mode.FEEDFORWARD
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "outbound_mode", Mode(self.outbound_mode))
        object.__setattr__(self, "return_mode", Mode(self.return_mode))
        if self.outbound_mode is Mode.FEEDFORWARD:
            raise ValueError("feedforward needs a recording, so it is only valid on the return leg")
        if self.dwell < 0:
            raise ValueError("dwell must be non-negative")

    def outbound(self, t0: float = 0.0) -> LineTrajectory:
        return generate_trajectory(self.origin, self.target, self.outbound_speed, self.accel_limit, t0)

    def inbound(self, t0: float = 0.0) -> LineTrajectory:
        return generate_trajectory(self.target, self.origin, self.return_speed, self.accel_limit, t0)


@dataclass(frozen=True)
class EstimatorConfig:
    tau_force: float = 0.1
    tau_torque: float = 0.05
    tau_diff: float = 0.02
    tau_fuse: float = 0.1
    fallback_distance: float = DEFAULT_FALLBACK_DISTANCE


@dataclass
class LegInfo:
    name: str
    mode: str
    t_start: float
    t_end: float


@dataclass
class MissionLog:
    truth: list = field(default_factory=list)
    onboard: list = field(default_factory=list)
    control: list = field(default_factory=list)
    legs: list = field(default_factory=list)
    track: DisturbanceTrack | None = None
    failed: bool = False
    failure: str = ""

    def table(self, group: str) -> np.ndarray:
        rows = getattr(self, group)
        cols = {"truth": TRUTH_COLUMNS, "onboard": ONBOARD_COLUMNS, "control": CONTROL_COLUMNS}[group]
        return np.array(rows, dtype=float).reshape(-1, len(cols))

    def column(self, group: str, name: str) -> np.ndarray:
        cols = {"truth": TRUTH_COLUMNS, "onboard": ONBOARD_COLUMNS, "control": CONTROL_COLUMNS}[group]
        return self.table(group)[:, cols.index(name)]

    def leg_rows(self, group: str, leg: str) -> np.ndarray:
        tab = self.table(group)
        return tab[tab[:, 1] == LEG_CODES[leg]]


def leg_error_norms(control: np.ndarray, leg: str, axes=None) -> np.ndarray:
    """Per-sample tracking error magnitudes of one leg from a control table."""
    rows = control[control[:, 1] == LEG_CODES[leg]]
    if rows.size == 0:
        raise ValueError(f"leg {leg!r} has no samples")
    i = CONTROL_COLUMNS.index
    err = rows[:, i("px") : i("pz") + 1] - rows[:, i("rx") : i("rz") + 1]
    if axes is not None:
        err = err[:, ["xyz".index(a) for a in axes]]
    return np.sqrt(np.sum(err * err, axis=1))


def rmse_of(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("no samples")
    return float(np.sqrt(np.mean(errors * errors)))


def rmse(log: MissionLog | np.ndarray, leg: str, axes=None) -> float:
    """Root-mean-square position tracking error over a leg's command-rate samples."""
    control = log.table("control") if isinstance(log, MissionLog) else np.asarray(log)
    return rmse_of(leg_error_norms(control, leg, axes))


def reduction_percent(rmse_new: float, rmse_baseline: float) -> float:
    return 100.0 * (1.0 - rmse_new / rmse_baseline)


class Simulator:
    """Closed-loop multirotor simulation with sensors, observers and controller.

    Timing per base step ``k`` (1 kHz by default): the wind wrench is
    evaluated at the current state; on IMU ticks the sensors are sampled and
    both observers run against the command applied over the previous
    interval; on position ticks a position fix is taken; on command ticks the
    outbound record is appended and the position loop runs; on IMU ticks the
    attitude loop and mixer update the motor command; then the rigid body is
    integrated one step.
    """

    def __init__(
        self,
        params: VehicleParams | None = None,
        gains: ControllerGains | None = None,
        wind: WindField | None = None,
        noise: NoiseParams | None = None,
        rates: RateSchedule | None = None,
        estimator: EstimatorConfig | None = None,
        seed: int = 0,
        injected: Wrench | None = None,
        start=(0.0, 0.0, 1.0),
        yaw: float = 0.0,
        log_truth: bool = True,
    ):
        self.params = params or VehicleParams()
        self.gains = gains or ControllerGains()
        self.wind = wind or UniformFlow()
        self.noise = noise or NoiseParams()
        self.rates = rates or RateSchedule()
        self.est_cfg = estimator or EstimatorConfig()
        self.injected = injected or Wrench.zero()
        self.rng = np.random.default_rng(seed)
        self.log_truth = log_truth
        self.yaw = yaw

        r = self.rates
        self.div_imu = r.divider(r.imu_hz)
        self.div_pos = r.divider(r.position_hz)
        self.div_cmd = r.divider(r.command_hz)
        self.div_rec = r.divider(r.record_hz)
        self.dt = r.dt
        dt_imu = 1.0 / r.imu_hz

        self.mixer = Mixer(self.params)
        self._rotors = self.params.rotor_positions()
        self.force_obs = ForceObserver(self.params.mass, self.est_cfg.tau_force, dt_imu)
        self.torque_obs = TorqueObserver(
            self.params.inertia, self.est_cfg.tau_torque, dt_imu, self.est_cfg.tau_diff
        )
        self.fused = FusedForceEstimator(self.est_cfg.tau_fuse, 1.0 / r.command_hz)

        self.x = VehicleState.hover_at(start, yaw).to_array()
        self.k = 0
        hover = self.params.hover_thrust
        self.thrust_cmd = hover
        self.torque_cmd = np.zeros(3)
        self.motor = self.mixer.mix(hover, np.zeros(3))
        self._apply_motor()
        self.F_des = np.array([0.0, 0.0, hover])
        self.torque_comp = np.zeros(3)
        self.ff_torque: np.ndarray | None = None
        self.p_meas = self.x[0:3].copy()
        self.v_meas = self.x[3:6].copy()
        self.gyro = self.x[10:13].copy()
        self.outbound_done = False
        self.log = MissionLog()

    @property
    def t(self) -> float:
        return self.k / self.rates.sim_hz

    def state(self) -> VehicleState:
        return VehicleState.from_array(self.x)

    def _apply_motor(self):
        thrust, torque = self.mixer.unmix(self.motor)
        s = self.params.thrust_mismatch
        self.applied_thrust = thrust * s
        self.applied_torque = (torque * s).tolist()

    def _disturbance(self, t: float):
        x = self.x
        R = quat_to_matrix(x[6:10])
        pts = np.vstack((x[0:3], x[0:3] + self._rotors @ R.T))
        air = self.wind.velocity(pts, t)
        force, torque = drag_from_arrays(x[3:6], R, air[0], air[1:], self.params)
        return force + self.injected.force, torque + self.injected.torque

    def run_leg(
        self,
        name: str,
        reference,
        duration: float,
        mode: Mode,
        record: DisturbanceTrack | None = None,
        track: DisturbanceTrack | None = None,
    ) -> MissionLog:
        """Fly ``reference`` for ``duration`` seconds (rounded up to whole command periods)."""
        mode = Mode(mode)
        if mode is Mode.FEEDFORWARD:
            if track is None or len(track) == 0:
                raise ValueError("feedforward mode needs a non-empty track")
            if record is not None:
                raise ValueError("cannot record and feed forward in the same leg")
            self.fused.reset(self.force_obs.estimate)
        n_cmd = max(1, math.ceil(round(duration * self.rates.command_hz, 9)))
        n_steps = n_cmd * self.div_cmd
        leg_code = LEG_CODES[name]
        mode_code = MODE_CODES[mode]
        t_start = self.t
        log = self.log
        p = self.params
        gravity = p.gravity_vector
        yaw = self.yaw
        lookup = None
        dt_cmd = 1.0 / self.rates.command_hz
        # double-integrated acceleration difference between the fused and live
        # force estimates: the position correction the recording implies; logged only
        vel_corr = np.zeros(3)
        pos_corr = np.zeros(3)
        try:
            for _ in range(n_steps):
                k = self.k
                t = k / self.rates.sim_hz
                dforce, dtorque = self._disturbance(t)
                dforce = dforce.tolist()
                dtorque = dtorque.tolist()

                imu_tick = k % self.div_imu == 0
                if imu_tick:
                    acc = linear_acceleration(self.x, self.applied_thrust, dforce, p)
                    truth = VehicleState.from_array(self.x)
                    imu = sample_imu(truth, acc, self.noise, self.rng, gravity, t)
                    self.gyro = imu.gyro
                    self.force_obs.step(imu, truth.attitude, self.thrust_cmd)
                    self.torque_obs.step(imu.gyro, self.torque_cmd)
                    log.onboard.append(
                        [t, leg_code, *imu.accel.tolist(), *imu.gyro.tolist(),
                         *self.force_obs.estimate.tolist(), *self.torque_obs.estimate.tolist(),
                         float(self.torque_obs.warming_up), self.thrust_cmd,
                         *self.torque_cmd.tolist(), *dforce, *dtorque]
                    )

                if k % self.div_pos == 0:
                    self.p_meas = measure_position(self.x[0:3], self.noise, self.rng)
                    self.v_meas = self.x[3:6].copy()

                if record is not None and k % self.div_rec == 0:
                    record.append(
                        DisturbanceRecord(
                            t,
                            tuple(self.p_meas.tolist()),
                            tuple(self.force_obs.estimate.tolist()),
                            tuple(self.torque_obs.estimate.tolist()),
                        )
                    )

                if k % self.div_cmd == 0:
                    p_ref, v_ref, a_ref = reference.sample(t)
                    lookup = None
                    ff_active = False
                    if mode is Mode.PD_ONLY:
                        f_use = np.zeros(3)
                        self.ff_torque = np.zeros(3)
                    elif mode is Mode.FEEDBACK:
                        f_use = self.force_obs.estimate
                        self.ff_torque = None
                    else:
                        if not self.outbound_done:
                            raise RuntimeError("feedforward lookup before the outbound leg finished")
                        lookup = track.lookup_nearest(self.p_meas)
                        ff = compose_feedforward(
                            self.force_obs.estimate, self.torque_obs.estimate, lookup, self.fused
                        )
                        f_use = ff.force
                        ff_active = ff.active
                        self.ff_torque = ff.torque if ff.active else None
                        if ff.active:
                            vel_corr = vel_corr + (f_use - self.force_obs.estimate) * (dt_cmd / p.mass)
                            pos_corr = pos_corr + vel_corr * dt_cmd
                    self.F_des = position_loop(
                        self.p_meas, self.v_meas, p_ref, v_ref, a_ref, f_use, p, self.gains
                    )
                    cmd_row = [
                        t, leg_code, mode_code, *self.x[0:3].tolist(), *p_ref.tolist(),
                        *v_ref.tolist(), *self.p_meas.tolist(), *self.F_des.tolist(),
                        *np.asarray(f_use).tolist(),
                    ]

                if imu_tick:
                    torque_comp = (
                        self.torque_obs.estimate if self.ff_torque is None else self.ff_torque
                    )
                    out = attitude_loop(
                        Rotation(self.x[6:10]), self.F_des, yaw, p, self.gains, self.gyro
                    )
                    self.thrust_cmd = out.thrust
                    self.torque_cmd = out.torque - torque_comp
                    self.motor = self.mixer.mix(out.thrust, self.torque_cmd)
                    self._apply_motor()

                if k % self.div_cmd == 0:
                    cmd_row += [
                        *np.asarray(torque_comp).tolist(),
                        -1 if lookup is None else lookup.index,
                        math.nan if lookup is None else lookup.distance,
                        float(ff_active),
                        float(self.motor.saturated),
                        *pos_corr.tolist(),
                    ]
                    log.control.append(cmd_row)

                if self.log_truth:
                    log.truth.append([t, leg_code, *self.x.tolist()])
                self.x = rk4_step(
                    self.x, self.applied_thrust, self.applied_torque, dforce, dtorque, p, self.dt
                )
                self.k += 1
        except SimulationDiverged as exc:
            log.failed = True
            log.failure = f"{name} leg diverged at t={self.t:.3f}s: {exc}"
        log.legs.append(LegInfo(name, mode.value, t_start, self.t))
        return log


def new_track(sim: Simulator, metadata: dict | None = None) -> DisturbanceTrack:
    """Empty track tagged with the rates, filter settings and vehicle digest."""
    meta = {
        "rates": asdict(sim.rates),
        "tau_force": sim.est_cfg.tau_force,
        "tau_torque": sim.est_cfg.tau_torque,
        "vehicle": sim.params.digest(),
    }
    meta.update(metadata or {})
    return DisturbanceTrack(sim.est_cfg.fallback_distance, meta)


def _outbound_and_dwell(sim: Simulator, plan: MissionPlan, metadata=None) -> DisturbanceTrack:
    track = new_track(sim, metadata)
    out = plan.outbound(sim.t)
    sim.run_leg("outbound", out, out.duration, plan.outbound_mode, record=track)
    sim.log.track = track
    sim.outbound_done = True
    if not sim.log.failed and plan.dwell > 0:
        sim.run_leg("dwell", HoldTrajectory(plan.target, plan.dwell, sim.t), plan.dwell, plan.outbound_mode)
    return track


def _return(sim: Simulator, plan: MissionPlan, mode: Mode, track: DisturbanceTrack) -> MissionLog:
    if not sim.log.failed:
        back = plan.inbound(sim.t)
        sim.run_leg("return", back, back.duration, mode, track=track if mode is Mode.FEEDFORWARD else None)
    return sim.log


def run_roundtrip(plan: MissionPlan, sim: Simulator, metadata: dict | None = None) -> MissionLog:
    """Outbound with recording, dwell at the target, then the return leg.

    ``metadata`` is merged into the track's metadata.
    """
    track = _outbound_and_dwell(sim, plan, metadata)
    return _return(sim, plan, plan.return_mode, track)


def run_paired(
    plan: MissionPlan, sim: Simulator, modes, metadata: dict | None = None
) -> dict[str, MissionLog]:
    """Shared outbound and dwell, then one return leg per mode.

    Each branch continues from a copy of the simulator, RNG included, so
    every returned log is identical to a full mission run on its own.
    """
    _outbound_and_dwell(sim, plan, metadata)
    logs = {}
    for mode in modes:
        mode = Mode(mode)
        branch = copy.deepcopy(sim)
        logs[mode.value] = _return(branch, plan, mode, branch.log.track)
    return logs
