import math

import numpy as np
import pytest

from roundtrip.mathcore import Rotation
from roundtrip.sensing import (
    NoiseParams,
    RateSchedule,
    downsample,
    measure_position,
    sample_imu,
    zero_order_hold,
)
from roundtrip.vehicle import VehicleState

G = np.array([0.0, 0.0, -9.81])
QUIET = NoiseParams.noiseless()


def test_hover_specific_force():
    imu = sample_imu(VehicleState.hover_at([0, 0, 1]), [0, 0, 0], QUIET, None)
    np.testing.assert_array_equal(imu.accel, [0, 0, 9.81])
    np.testing.assert_array_equal(imu.gyro, [0, 0, 0])


def test_free_fall_reads_zero():
    imu = sample_imu(VehicleState(), G, QUIET, None)
    np.testing.assert_array_equal(imu.accel, [0, 0, 0])


def test_world_x_acceleration_at_identity():
    imu = sample_imu(VehicleState(), [1.0, 0, 0], QUIET, None)
    np.testing.assert_allclose(imu.accel, [1.0, 0, 9.81], atol=1e-15)


def test_hover_reading_is_gravity_in_body_frame():
    r = Rotation.from_axis_angle([1, 2, 0.5], 0.4)
    imu = sample_imu(VehicleState(attitude=r), [0, 0, 0], QUIET, None)
    np.testing.assert_allclose(imu.accel, r.apply_inverse(-G), atol=1e-12)
    assert np.linalg.norm(imu.accel) == pytest.approx(9.81)


def test_noiseless_sensing_inverts_exactly():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = Rotation(rng.normal(size=4))
        a = rng.normal(size=3) * 3
        imu = sample_imu(VehicleState(attitude=r), a, QUIET, None)
        np.testing.assert_allclose(r.apply(imu.accel) + G, a, atol=1e-9)


def test_noise_statistics_and_bias():
    noise = NoiseParams(accel_sigma=0.05, gyro_sigma=0.002, accel_bias=(0.1, 0, 0), gyro_bias=(0, 0.01, 0))
    rng = np.random.default_rng(1)
    s = VehicleState.hover_at([0, 0, 0])
    samples = [sample_imu(s, [0, 0, 0], noise, rng) for _ in range(4000)]
    acc = np.array([x.accel for x in samples])
    gyr = np.array([x.gyro for x in samples])
    np.testing.assert_allclose(acc.mean(axis=0), [0.1, 0, 9.81], atol=0.005)
    np.testing.assert_allclose(acc.std(axis=0), 0.05, rtol=0.05)
    np.testing.assert_allclose(gyr.mean(axis=0), [0, 0.01, 0], atol=2e-4)
    np.testing.assert_allclose(gyr.std(axis=0), 0.002, rtol=0.05)


def test_same_seed_same_stream():
    noise = NoiseParams()
    s = VehicleState.hover_at([0, 0, 1])

    def stream(seed):
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(50):
            imu = sample_imu(s, [0, 0, 0], noise, rng)
            out.append(np.concatenate((imu.accel, imu.gyro, measure_position(s.position, noise, rng))))
        return np.array(out)

    assert np.array_equal(stream(3), stream(3))
    assert not np.array_equal(stream(3), stream(4))


def test_noiseless_mode_never_touches_rng():
    class Exploding:
        def normal(self, *a, **k):
            raise AssertionError("rng used")

    sample_imu(VehicleState(), [0, 0, 0], QUIET, Exploding())
    measure_position([1, 2, 3], QUIET, Exploding())


def test_position_noise_default_one_millimetre():
    rng = np.random.default_rng(2)
    p = np.array([measure_position([1, 2, 3], NoiseParams(), rng) for _ in range(4000)])
    np.testing.assert_allclose(p.std(axis=0), 0.001, rtol=0.05)


# ---- rates ---------------------------------------------------------------------


def test_default_rates():
    r = RateSchedule()
    assert (r.sim_hz, r.imu_hz, r.position_hz, r.command_hz, r.record_hz) == (1000, 500, 200, 50, 50)
    assert r.divider(r.imu_hz) == 2 and r.divider(r.record_hz) == 20
    assert r.dt == 0.001


@pytest.mark.parametrize(
    "kw", [{"imu_hz": 300}, {"record_hz": 100, "command_hz": 50}, {"position_hz": 0}]
)
def test_bad_rates_rejected(kw):
    with pytest.raises(ValueError):
        RateSchedule(**kw)


def test_downsample_500_to_50_keeps_every_tenth():
    stream = list(range(100))
    assert downsample(stream, 500, 50) == list(range(0, 100, 10))


def test_downsample_identity():
    stream = list(range(7))
    assert downsample(stream, 200, 200) == stream


def test_downsample_200_to_50_indices():
    kept = downsample(list(range(200)), 200, 50)
    assert kept == [4 * i for i in range(50)]
    assert kept[:3] == [0, 4, 8]


def test_downsample_non_divisible_rejected():
    with pytest.raises(ValueError):
        downsample([1, 2, 3], 500, 200)


def test_downsample_then_hold_adds_no_new_samples():
    rng = np.random.default_rng(0)
    stream = rng.normal(size=200).tolist()
    held = zero_order_hold(downsample(stream, 500, 50), 10)
    assert len(held) == len(stream)
    assert set(held) <= set(stream)
    assert held[::10] == stream[::10]
    assert math.isfinite(sum(held))
