import math

import numpy as np
import pytest

from roundtrip.control import Mode
from roundtrip.mission import (
    CONTROL_COLUMNS,
    LEG_CODES,
    HoldTrajectory,
    MissionPlan,
    Simulator,
    TrajectoryError,
    generate_trajectory,
    reduction_percent,
    rmse,
    rmse_of,
    run_paired,
    run_roundtrip,
)
from roundtrip.recorder import DisturbanceRecord, DisturbanceTrack
from roundtrip.vehicle import Wrench
from roundtrip.windfield import JetFlow

CC = CONTROL_COLUMNS.index
SHORT = MissionPlan(outbound_speed=0.5, dwell=0.5)


# ---- trajectories ------------------------------------------------------------------


def test_outbound_cruise_duration():
    traj = generate_trajectory((0, 0, 1), (2, 0, 1), 0.1, 1.0)
    # 2 m at 0.1 m/s is 20 s; the two half-speed ramps cost v / a
    assert traj.cruise_duration == pytest.approx(20.0 - 0.1 / 1.0)
    assert traj.duration == pytest.approx(20.0 + 0.1)


def test_return_leg_ten_times_faster():
    slow = generate_trajectory((0, 0, 1), (2, 0, 1), 0.1, 1.0)
    fast = generate_trajectory((2, 0, 1), (0, 0, 1), 1.0, 1.0)
    assert (slow.length / slow.speed) / (fast.length / fast.speed) == pytest.approx(10.0)
    assert fast.cruise_duration == pytest.approx(2.0 - 1.0)
    p0, _, _ = fast.sample(0.0)
    p1, _, _ = fast.sample(fast.duration)
    np.testing.assert_allclose(p0, [2, 0, 1])
    np.testing.assert_allclose(p1, [0, 0, 1], atol=1e-12)


def test_degenerate_segment_rejected():
    with pytest.raises(TrajectoryError):
        generate_trajectory((0, 0, 1), (1e-9, 0, 1), 0.1, 1.0)


@pytest.mark.parametrize("speed, accel", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_non_positive_limits_rejected(speed, accel):
    with pytest.raises(TrajectoryError):
        generate_trajectory((0, 0, 1), (2, 0, 1), speed, accel)


@pytest.mark.parametrize("speed", [0.1, 1.0, 5.0])
def test_reference_speed_bounded_and_position_continuous(speed):
    traj = generate_trajectory((0, 0, 1), (2, 0.5, 1.2), speed, 1.0, t0=3.0)
    ts = np.arange(0.0, traj.t0 + traj.duration + 1.0, 0.001)
    samples = [traj.sample(t) for t in ts]
    p = np.array([s[0] for s in samples])
    v = np.array([s[1] for s in samples])
    assert np.max(np.linalg.norm(v, axis=1)) <= speed + 1e-12
    step = np.max(np.linalg.norm(np.diff(p, axis=0), axis=1))
    assert step <= speed * 0.001 + 1e-9
    # velocity is the derivative of position
    np.testing.assert_allclose(np.gradient(p[:, 0], 0.001), v[:, 0], atol=2e-3)


def test_short_segment_triangular_profile():
    traj = generate_trajectory((0, 0, 0), (0.5, 0, 0), 1.0, 1.0)
    assert traj.cruise_duration == 0.0
    assert traj.peak_speed == pytest.approx(math.sqrt(0.5))


def test_plan_rejects_feedforward_outbound():
    with pytest.raises(ValueError):
        MissionPlan(outbound_mode=Mode.FEEDFORWARD)


# ---- metrics -----------------------------------------------------------------------


def control_table(errors, leg="return"):
    rows = np.zeros((len(errors), len(CONTROL_COLUMNS)))
    rows[:, CC("leg")] = LEG_CODES[leg]
    rows[:, CC("px") : CC("pz") + 1] = np.asarray(errors)
    return rows


def test_rmse_zero():
    assert rmse(control_table(np.zeros((5, 3))), "return") == 0.0


def test_rmse_constant_offset():
    e = np.array([0.03, -0.04, 0.12])
    assert rmse(control_table(np.tile(e, (20, 1))), "return") == pytest.approx(np.linalg.norm(e))


def test_rmse_hand_value():
    tab = control_table([[0.3, 0, 0], [0, 0.4, 0]])
    assert rmse(tab, "return") == pytest.approx(math.sqrt((0.09 + 0.16) / 2))
    assert round(rmse(tab, "return"), 4) == 0.3536
    assert rmse(tab, "return", axes="x") == pytest.approx(math.sqrt(0.09 / 2))


def test_rmse_empty_leg_errors():
    with pytest.raises(ValueError):
        rmse(control_table(np.zeros((3, 3)), "outbound"), "return")
    with pytest.raises(ValueError):
        rmse_of([])


def test_reduction_percent():
    assert reduction_percent(0.57, 1.0) == pytest.approx(43.0)


# ---- missions ------------------------------------------------------------------------


def test_roundtrip_is_deterministic():
    logs = [run_roundtrip(SHORT, Simulator(wind=JetFlow(), seed=5)) for _ in range(2)]
    for group in ("truth", "onboard", "control"):
        assert np.array_equal(logs[0].table(group), logs[1].table(group), equal_nan=True)
    assert logs[0].track.records == logs[1].track.records
    other = run_roundtrip(SHORT, Simulator(wind=JetFlow(), seed=6))
    assert not np.array_equal(other.table("control"), logs[0].table("control"))


def test_paired_branch_equals_independent_run():
    paired = run_paired(SHORT, Simulator(wind=JetFlow(), seed=5), ["feedback", "feedforward"])
    for mode in ("feedback", "feedforward"):
        plan = MissionPlan(outbound_speed=0.5, dwell=0.5, return_mode=mode)
        alone = run_roundtrip(plan, Simulator(wind=JetFlow(), seed=5))
        for group in ("truth", "onboard", "control"):
            assert np.array_equal(paired[mode].table(group), alone.table(group), equal_nan=True)


def test_stage_ordering_in_log():
    log = run_roundtrip(SHORT, Simulator(wind=JetFlow(), seed=1))
    ctl = log.table("control")
    looked = ctl[ctl[:, CC("lookup_index")] >= 0]
    out_end = max(l.t_end for l in log.legs if l.name == "outbound")
    assert len(looked) > 0
    assert looked[:, 0].min() >= out_end
    assert set(looked[:, CC("leg")].tolist()) == {LEG_CODES["return"]}
    assert [l.name for l in log.legs] == ["outbound", "dwell", "return"]


def test_feedforward_before_outbound_refused():
    track = DisturbanceTrack()
    track.append(DisturbanceRecord(0.0, (0, 0, 1), (0, 0, 0), (0, 0, 0)))
    sim = Simulator()
    with pytest.raises(RuntimeError):
        sim.run_leg("return", HoldTrajectory((0, 0, 1), 1.0), 1.0, Mode.FEEDFORWARD, track=track)


def test_feedforward_needs_track():
    with pytest.raises(ValueError):
        Simulator().run_leg("return", HoldTrajectory((0, 0, 1), 1.0), 1.0, Mode.FEEDFORWARD)


def test_calm_air_errors_stay_small():
    # without wind the recording only carries noise and motion drag, so both
    # return modes track closely; feedforward may still help a little
    logs = run_paired(SHORT, Simulator(seed=2), ["feedback", "feedforward"])
    fb, ff = (rmse(logs[m], "return") for m in ("feedback", "feedforward"))
    assert fb < 0.03 and ff < 0.03
    # outbound error at 0.5 m/s and return error at 1 m/s are the same order
    out = rmse(logs["feedback"], "outbound")
    assert 0.2 < fb / out < 5


def test_divergence_marks_log_failed():
    sim = Simulator(injected=Wrench(np.array([1e300, 0, 0]), np.zeros(3)))
    with np.errstate(all="ignore"):
        log = run_roundtrip(SHORT, sim)
    assert log.failed and "diverged" in log.failure
    assert [l.name for l in log.legs] == ["outbound"]


def test_log_rates():
    log = run_roundtrip(SHORT, Simulator(seed=1, wind=JetFlow()))
    truth, onboard, ctl = (log.table(g) for g in ("truth", "onboard", "control"))
    assert len(truth) == 2 * len(onboard) == 20 * len(ctl)
    np.testing.assert_allclose(np.diff(ctl[:, 0]), 0.02, atol=1e-12)
    np.testing.assert_allclose(np.diff(onboard[:, 0]), 0.002, atol=1e-12)
    out_rows = ctl[ctl[:, 1] == LEG_CODES["outbound"]]
    assert len(log.track) == len(out_rows)
