import math

import numpy as np
import pytest

from nosnet.drive import (
    Amplitude,
    DriveSpec,
    amplitude_scale_warning,
    analytic_shot_stats,
    mmpp_stationary_mean,
    sample_drive,
    sample_mmpp,
    shot_kernel_trace,
)

DT = 0.005


def test_zero_rate_trace():
    assert not sample_drive(DriveSpec(rate=0.0), 1000, DT, seed=3).any()


def test_zero_rate_stats():
    s = analytic_shot_stats(DriveSpec(rate=0.0))
    assert s.mean == 0 and s.variance == 0 and s.psd(1.0) == 0


def test_single_event_kernel():
    tr = shot_kernel_trace([0.0], [1.0], tau_s=2 * DT, horizon=3, dt=DT)
    assert np.allclose(tr, [1.0, math.exp(-0.5), math.exp(-1.0)], atol=1e-12)


def test_impulse_limit():
    tr = shot_kernel_trace([0.0, 0.011], [1.0, 2.0], tau_s=0.0, horizon=4, dt=DT)
    assert np.allclose(tr, [1.0, 0.0, 0.0, 2.0])


def test_hand_moments():
    s = analytic_shot_stats(DriveSpec(rate=50.0, amplitude=Amplitude("constant", 0.6), tau_s=0.01))
    assert s.mean == pytest.approx(0.3)
    assert s.variance == pytest.approx(0.09)


def test_psd_half_power():
    s = analytic_shot_stats(DriveSpec(rate=50.0, tau_s=0.01))
    assert s.psd(0.0) == pytest.approx(2 * 50 * 0.36 * 0.01)
    assert s.psd(1 / 0.01) == pytest.approx(0.5 * s.psd(0.0))


def test_non_shot_rejected():
    with pytest.raises(ValueError):
        analytic_shot_stats(DriveSpec(kind="mmpp"))


def test_long_run_mean():
    spec = DriveSpec(rate=50.0, amplitude=Amplitude("exponential", 0.6), tau_s=0.01)
    x = sample_drive(spec, 200_000, DT, seed=7)
    assert x.mean() == pytest.approx(0.3, rel=0.03)


def test_autocov_decay():
    spec = DriveSpec(rate=50.0, amplitude=Amplitude("constant", 0.6), tau_s=0.01)
    x = sample_drive(spec, 1_000_000, DT, seed=2)
    s = analytic_shot_stats(spec)
    xc = (x - x.mean()).reshape(20, -1)
    for m in (1, 2, 5):
        lag = int(round(m * spec.tau_s / DT))
        per_batch = np.mean(xc[:, :-lag] * xc[:, lag:], axis=1)
        emp, se = per_batch.mean(), per_batch.std(ddof=1) / math.sqrt(20)
        want = float(s.autocov(lag * DT))
        if m < 5:
            assert emp == pytest.approx(want, rel=0.1)
        else:
            # e^-5 var is below the estimator's resolution for a 10% check
            assert abs(emp - want) < 3 * se


def test_determinism():
    spec = DriveSpec()
    a = sample_drive(spec, 5000, DT, seed=11)
    b = sample_drive(spec, 5000, DT, seed=11)
    c = sample_drive(spec, 5000, DT, seed=12)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_bad_horizon():
    with pytest.raises(ValueError):
        sample_drive(DriveSpec(), 0)


def test_missing_trace_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        sample_drive(DriveSpec(kind="trace", trace_file=str(tmp_path / "nope.csv")), 10)


def test_trace_replay(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("bin,node,count\n0,0,2\n3,0,1\n3,1,5\n")
    x = sample_drive(DriveSpec(kind="trace", trace_file=str(path)), 5, node=0)
    assert np.array_equal(x, [2, 0, 0, 1, 0])


def test_mmpp_off_silent():
    spec = DriveSpec(kind="mmpp", intensity_on=100.0, intensity_off=0.0)
    s = sample_mmpp(spec, 20_000, seed=1)
    assert not s.counts[~s.on].any()


def test_mmpp_equal_intensity_is_poisson_mean():
    spec = DriveSpec(kind="mmpp", intensity_on=60.0, intensity_off=60.0)
    s = sample_mmpp(spec, 100_000, seed=2)
    assert s.counts.mean() == pytest.approx(60 * DT, rel=0.03)


def test_mmpp_stationary_mean():
    spec = DriveSpec(kind="mmpp", on_rate=2.0, off_rate=5.0, intensity_on=200.0, intensity_off=20.0)
    counts = sample_mmpp(spec, 400_000, seed=3).counts
    m = mmpp_stationary_mean(spec, DT)
    # batch-means standard error accounts for the slow modulation
    se = counts.reshape(100, -1).mean(axis=1).std(ddof=1) / 10
    assert abs(counts.mean() - m) < 3 * se


def test_mmpp_shared_epochs_across_nodes():
    spec = DriveSpec(kind="mmpp")
    a = sample_mmpp(spec, 3000, seed=5, node=0)
    b = sample_mmpp(spec, 3000, seed=5, node=1)
    assert np.array_equal(a.on, b.on) and not np.array_equal(a.counts, b.counts)


def test_amplitude_warning():
    with pytest.warns(UserWarning):
        msg = amplitude_scale_warning(DriveSpec(amplitude=Amplitude("constant", 50.0)), 0.6)
    assert msg is not None
    assert amplitude_scale_warning(DriveSpec(), 0.6) is None


def test_amplitude_moments():
    assert Amplitude("uniform", lo=0.0, hi=1.0).second_moment == pytest.approx(1 / 3)
    assert Amplitude("exponential", 0.5).second_moment == pytest.approx(0.5)
