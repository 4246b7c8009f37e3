import numpy as np
import pytest

from nosnet.drive import Amplitude, DriveSpec
from nosnet.graph import CouplingGraph, LinkGateSpec, normalise_to_rho, random_delays, random_sparse
from nosnet.model import NodeParams, ResetSpec, ThresholdSpec
from nosnet.simulator import AdaptationSpec, SimConfig, run_simulation
from nosnet.stability import solve_equilibrium

OFF = DriveSpec(kind="none", I0=0.0)


def two_node(delay, w=1.0):
    W = np.array([[0.0, 0.0], [w, 0.0]])
    D = np.array([[0, 0], [delay, 0]])
    return CouplingGraph(W, D)


def noisy_net(n=30, seed=1):
    g = normalise_to_rho(random_sparse(n, 0.2, seed), 1.0)
    return random_delays(g, 25, seed).with_gain(0.8)


def test_relaxes_to_equilibrium_without_spikes():
    p = NodeParams()
    cfg = SimConfig(graph=CouplingGraph(np.zeros((3, 3)), None), params=p, drive=OFF,
                    horizon=400, v0=p.v_rest + 0.01, record=frozenset({"spikes", "states"}))
    r = run_simulation(cfg, 0)
    eq = solve_equilibrium(p, 0.0)
    assert r.population_counts.sum() == 0
    assert np.allclose(r.v_trace[-1], eq.v_star, atol=1e-9)
    assert np.allclose(r.u_trace[-1], eq.u_star, atol=1e-9)


def test_delay_bookkeeping():
    cfg = SimConfig(graph=two_node(3), params=NodeParams(gamma=0.0), drive=OFF, horizon=30,
                    v0=0.0, forced_spikes={0: [10]}, record=frozenset({"spikes", "inputs"}))
    r = run_simulation(cfg, 0)
    assert list(r.spikes[0]) == [10]
    pulse = np.flatnonzero(r.I_trace[:, 1])
    assert list(pulse) == [13]
    assert r.I_trace[13, 1] == pytest.approx(1.0)


def test_zero_delay_delivers_next_bin():
    cfg = SimConfig(graph=two_node(0), params=NodeParams(gamma=0.0), drive=OFF, horizon=10,
                    v0=0.0, forced_spikes={0: [4]}, record=frozenset({"spikes", "inputs"}))
    assert list(np.flatnonzero(run_simulation(cfg, 0).I_trace[:, 1])) == [5]


def test_bit_reproducible():
    cfg = SimConfig(graph=noisy_net(), threshold=ThresholdSpec(sigma=0.02), horizon=1500,
                    record=frozenset({"spikes", "states"}))
    a, b = run_simulation(cfg, 5), run_simulation(cfg, 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.spikes, b.spikes))
    assert np.array_equal(a.v_trace, b.v_trace) and np.array_equal(a.u_trace, b.u_trace)
    c = run_simulation(cfg, 6)
    assert not np.array_equal(a.v_trace, c.v_trace)


def test_causality_on_instrumented_chain():
    # node 2 is only reachable through node 1, which is only reachable from node 0
    W = np.zeros((3, 3))
    W[1, 0] = W[2, 1] = 1.0
    D = np.zeros((3, 3), dtype=int)
    D[1, 0], D[2, 1] = 4, 7
    p = NodeParams(gamma=0.0)
    cfg = SimConfig(graph=CouplingGraph(W, D), params=p, drive=OFF, horizon=60, v0=0.0,
                    forced_spikes={0: [5]}, record=frozenset({"spikes", "inputs"}))
    r = run_simulation(cfg, 0)
    assert np.flatnonzero(r.I_trace[:, 1])[0] == 9
    first1 = np.flatnonzero(r.I_trace[:, 1])[0]
    assert not r.I_trace[: first1 + 1, 2].any()
    if r.spikes[1].size:
        assert np.flatnonzero(r.I_trace[:, 2])[0] == r.spikes[1][0] + 7


def test_spikes_respect_threshold_and_population():
    cfg = SimConfig(graph=noisy_net(), threshold=ThresholdSpec(sigma=0.02), horizon=2000,
                    record=frozenset({"spikes", "states", "spike_v"}))
    r = run_simulation(cfg, 2)
    assert r.population_counts.sum() > 0
    counts = np.zeros(cfg.horizon, dtype=int)
    for i, s in enumerate(r.spikes):
        counts[s] += 1
        assert np.all(np.asarray(r.spike_v[i]) >= r.threshold_trace[s, i])
    assert np.array_equal(counts, r.population_counts)


def test_clamps_hold():
    cfg = SimConfig(graph=noisy_net().with_gain(3.0), drive=DriveSpec(amplitude=Amplitude("exponential", 3.0)),
                    horizon=1500, v_max=1.2, u_min=-0.5, u_max=0.8, record=frozenset({"spikes", "states"}))
    r = run_simulation(cfg, 3)
    assert r.v_trace.min() >= 0.0 and r.v_trace.max() <= 1.2
    assert r.u_trace.min() >= -0.5 and r.u_trace.max() <= 0.8


def test_single_spike_decays_toward_baseline():
    p = NodeParams(gamma=0.0, beta=0.0, alpha=0.7, b=0.0)
    rs = ResetSpec(c=0.1, r_reset=5.0, d=0.0)
    cfg = SimConfig(graph=CouplingGraph(np.zeros((1, 1)), None), params=p, drive=OFF, reset=rs,
                    horizon=60, v0=1.0, record=frozenset({"spikes", "states"}))
    r = run_simulation(cfg, 0)
    assert list(r.spikes[0]) == [0]
    v = r.v_trace[:, 0]
    assert np.all(np.diff(v) <= 0)
    assert v[-1] < 0.1


def test_no_drive_no_spikes():
    cfg = SimConfig(graph=noisy_net(), params=NodeParams(gamma=0.0), drive=OFF, horizon=1000, init_noise=0.0)
    assert run_simulation(cfg, 0).population_counts.sum() == 0


def test_continuous_pullback_records_crossings():
    cfg = SimConfig(graph=noisy_net(), reset=ResetSpec(kind="continuous-pullback"), horizon=1500,
                    drive=DriveSpec(amplitude=Amplitude("exponential", 1.0)),
                    record=frozenset({"spikes", "states"}))
    r = run_simulation(cfg, 1)
    assert r.population_counts.sum() > 0
    for i, s in enumerate(r.spikes):
        assert np.all(r.v_trace[s, i] >= r.threshold_trace[s, i])


def test_gated_and_adaptive_runs_are_finite():
    g = CouplingGraph(noisy_net().W, noisy_net().delays, g=1.5, gate=LinkGateSpec("logistic", k=8.0, theta=0.5))
    cfg = SimConfig(graph=g, adaptation=AdaptationSpec(), threshold=ThresholdSpec(sigma=0.1), horizon=1000,
                    record=frozenset({"spikes", "states"}))
    r = run_simulation(cfg, 4)
    assert np.all(np.isfinite(r.v_trace))
    assert np.all(np.abs(r.threshold_trace - 0.6) <= 0.05 + 1e-12)


def test_config_validation():
    g = CouplingGraph(np.zeros((2, 2)), None)
    with pytest.raises(ValueError):
        SimConfig(graph=g, horizon=0)
    with pytest.raises(ValueError):
        SimConfig(graph=g, u_min=1.0, u_max=0.0)
    with pytest.raises(ValueError):
        SimConfig(graph=g, params=(NodeParams(),))
