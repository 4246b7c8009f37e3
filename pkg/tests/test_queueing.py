import numpy as np
import pytest

from nosnet.model import NodeParams, ResetSpec, ThresholdSpec
from nosnet.queueing import (
    CONTROLLERS,
    ClosedLoopSpec,
    MarkingSpec,
    binned_queue,
    burst_load,
    calibrate_light_load,
    closed_loop_run,
    compare_controllers,
    ensemble_response,
    mm1_mean,
    mm1_reference,
    mm1k_mean,
    mm1k_pmf,
    nos_response,
    step_load,
)
from nosnet.rng import stream

P = NodeParams(gamma=0.0)
MU = 200.0


def test_mm1_analytic():
    assert mm1_mean(0.5) == pytest.approx(1.0)
    assert mm1_mean(0.9) == pytest.approx(9.0)


def test_mm1_refuses_unstable_without_buffer():
    with pytest.raises(ValueError):
        mm1_reference(120.0, 100.0)
    r = mm1_reference(120.0, 100.0, K=20, events=20_000)
    assert np.isnan(r.analytic_mean) and r.sim_mean == pytest.approx(mm1k_mean(1.2, 20), rel=0.1)


def test_mm1k_light_load_matches_analytic():
    r = mm1_reference(20.0, 100.0, events=300_000, seed=4)
    assert abs(r.sim_mean - r.analytic_mean) < 3 * r.sim_se


def test_mm1k_geometric_law_ks():
    rho = 0.3
    r = mm1_reference(rho * 100, 100.0, K=1000, events=1_000_000, seed=5)
    k = np.arange(r.pmf.size)
    geo = (1 - rho) * rho**k
    ks = np.max(np.abs(np.cumsum(r.pmf) - np.cumsum(geo)))
    assert ks < 0.02


def test_mm1k_pmf_normalised():
    assert mm1k_pmf(0.7, 15).sum() == pytest.approx(1.0)
    assert np.allclose(mm1k_pmf(1.0, 4), 0.2)


def test_binned_queue_bounds():
    a = stream(0, 1).poisson(2.0, (500, 2))
    q = binned_queue(a, 1.0, 30)
    assert q.shape == a.shape and q.min() >= 0 and q.max() <= 30


def test_calibration_errors():
    with pytest.raises(ValueError):
        calibrate_light_load(P, [0.0, 10.0], MU)
    with pytest.raises(ValueError):
        calibrate_light_load(P, [190.0], MU)
    with pytest.raises(ValueError):
        calibrate_light_load(P, np.zeros((100, 2)), MU)
    with pytest.raises(ValueError):
        calibrate_light_load(NodeParams(gamma=0.5), [10.0], MU, horizon=500)


def test_calibration_deterministic():
    a = calibrate_light_load(P, [10.0, 20.0], MU, horizon=3000)
    b = calibrate_light_load(P, [10.0, 20.0], MU, horizon=3000)
    assert a.gain_I == b.gain_I and np.array_equal(a.per_node_scale, b.per_node_scale)
    assert a.gain_I > 0 and np.all(a.per_node_scale > 0)


def _fresh_error(calib, rates, seed=9, horizon=100_000):
    counts = stream(seed, 99).poisson(rates * 0.005, (horizon, rates.size)).astype(float)
    v = nos_response(P, counts, calib.gain_I, ThresholdSpec(), ResetSpec(), seed)
    return calib.per_node_scale * v.mean(axis=0) / calib.reference_means - 1


def test_calibration_scale_consistent():
    base = np.array([0.05, 0.1, 0.15]) * MU
    c1 = calibrate_light_load(P, base, MU, horizon=40_000)
    c2 = calibrate_light_load(P, 2 * base, MU, horizon=40_000)
    assert c1.gain_I != pytest.approx(c2.gain_I, rel=0.05)
    assert np.all(np.abs(_fresh_error(c1, base)) < 0.05)
    assert np.all(np.abs(_fresh_error(c2, 2 * base)) < 0.05)


def test_calibration_with_observed_counts_and_buffer():
    counts = stream(3, 5).poisson(np.array([10.0, 30.0]) * 0.005, (20_000, 2)).astype(float)
    c = calibrate_light_load(P, counts, MU, K=50)
    rho = counts.mean(axis=0) / 0.005 / MU
    assert np.allclose(c.reference_means, [mm1k_mean(r, 50) for r in rho])


def test_marking_is_logistic():
    m = MarkingSpec(slope=20.0, midpoint=0.3)
    assert m(0.3) == pytest.approx(0.5)
    assert m(0.0) == pytest.approx(1 / (1 + np.exp(6.0)))


@pytest.mark.parametrize("controller", CONTROLLERS)
def test_zero_load(controller):
    spec = ClosedLoopSpec()
    r = closed_loop_run(controller, np.zeros(300), spec, seed=1)
    assert not r.queue_trace.any()
    # the NOS state rests at its zero-input level, a hair above zero
    assert np.ptp(r.p_trace[-100:]) < 1e-9
    assert np.allclose(r.p_trace, spec.marking(0.0), atol=1e-5)


def test_controllers_share_load():
    out = compare_controllers(burst_load(600, 5, 30, 100, 10), seed=3)
    hashes = {r.arrivals_hash for r in out.values()}
    assert len(hashes) == 1


def test_unknown_controller():
    with pytest.raises(ValueError):
        closed_loop_run("pid", np.zeros(10))


def test_metrics_present():
    r = closed_loop_run("lp-queue", step_load(1400, 5, 15, 1000), seed=2, step_at=1000)
    for k in ("settling_bins", "overshoot", "mark_jitter", "mean_queue", "max_queue"):
        assert k in r.metrics


def test_step_settles_faster_than_low_pass():
    load = step_load(1400, 5, 15, 1000)
    nos = ensemble_response("nos-state", load, step_at=1000)
    lp = ensemble_response("lp-queue", load, step_at=1000)
    assert nos["settling_bins"] < lp["settling_bins"]


def test_burst_peak_not_above_low_pass():
    load = burst_load(1400, 5, 30, 100, 10, 1000)
    nos = ensemble_response("nos-state", load, step_at=1000)
    lp = ensemble_response("lp-queue", load, step_at=1000)
    assert nos["max_queue"] <= lp["max_queue"]
