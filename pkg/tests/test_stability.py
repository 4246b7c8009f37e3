import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import grid_root, jacobian_2x2, random_admissible
from nosnet.continuation import eig_sweep_gstar
from nosnet.drive import Amplitude, DriveSpec
from nosnet.graph import CouplingGraph, normalise_to_rho, random_sparse
from nosnet.model import NodeParams, f_sat_prime
from nosnet.stability import (
    GRID_POINTS,
    existence_and_margins,
    gershgorin_bounds,
    local_jacobian,
    network_thresholds,
    operational_margin,
    operational_margin_zero,
    quadratic_diagnostics,
    quantised_margin_check,
    solve_equilibrium,
    stability_report,
    transfer_and_variance,
    uniqueness_and_rule_check,
)

WORKED = NodeParams(alpha=0.02, kappa=0.0, beta=0.5, gamma=0.05, lam=0.2, chi=0.05, a=0.05, b=0.5, mu=0.01)


def test_origin_root():
    eq = solve_equilibrium(NodeParams(gamma=0.0), 0.0)
    assert eq.v_star == 0.0 and eq.u_star == 0.0


def test_worked_example_surrogate():
    eq = solve_equilibrium(WORKED, 0.0, (0.0, 5.0))
    assert eq.L == pytest.approx(-0.16667, abs=1e-5)
    assert eq.C == pytest.approx(0.05)
    qd = quadratic_diagnostics(WORKED)
    assert qd.curvature_cap == pytest.approx(0.34722, abs=1e-5)
    assert eq.v_star == pytest.approx(qd.roots[0], abs=1e-10)


def test_u_star_relation():
    p = NodeParams()
    eq = solve_equilibrium(p, 0.1)
    assert eq.u_star == p.a * p.b / (p.a + p.mu) * eq.v_star
    assert abs(eq.residual) < 1e-12


def test_no_equilibrium_is_reported_not_raised():
    eq = solve_equilibrium(NodeParams(), 5.0, (0.0, 1.5))
    assert not eq.found and eq.F_lo > 0 and eq.F_hi > 0


def test_solver_matches_grid_oracle():
    rng = np.random.default_rng(10)
    cell = 1.5 / (GRID_POINTS - 1)
    checked = 0
    while checked < 100:
        p = random_admissible(rng)
        I = float(rng.uniform(0.0, 0.3))
        eq = solve_equilibrium(p, I)
        if not eq.found or not local_jacobian(p, eq.v_star).stable:
            continue
        ref = grid_root(p, I, 0.0, 1.5)
        assert abs(eq.v_star - ref) <= cell
        checked += 1


def test_rule_check_zero_excitability_limit():
    assert uniqueness_and_rule_check(NodeParams(alpha=1e-9)).lemma_ok


def test_rule_check_defaults():
    r = uniqueness_and_rule_check(NodeParams())
    assert r.corollary_lhs == pytest.approx(0.18 + 0.05 + 1.1 / 1.2)
    assert r.corollary_rhs == pytest.approx(3 * math.sqrt(3) / 8 * 0.7 - 0.1)
    assert r.rule_margin_epsilon > 0 and r.lemma_ok


def test_rule_margin_grows_with_leak():
    eps = [uniqueness_and_rule_check(NodeParams(lam=l)).rule_margin_epsilon for l in np.linspace(0, 1, 11)]
    assert np.all(np.diff(eps) > 0)


def test_quadratic_zero_constant():
    p = NodeParams(gamma=0.0)
    qd = quadratic_diagnostics(p, 0.0)
    assert sorted(qd.roots) == pytest.approx(sorted([0.0, -p.L / p.alpha]))


def test_quadratic_no_real_root_flag():
    assert not quadratic_diagnostics(WORKED, 1.0).real_roots


def test_dc_gain_matches_finite_difference():
    p = NodeParams()
    I, h = 0.1, 1e-6
    v0 = solve_equilibrium(p, I).v_star
    fd = (solve_equilibrium(p, I + h).v_star - solve_equilibrium(p, I - h).v_star) / (2 * h)
    dc = quadratic_diagnostics(p, I, v_star=v0).dc_gain
    assert dc == pytest.approx(fd, rel=0.01)


def test_trace_without_excitability():
    p = NodeParams(beta=0.0)
    r = local_jacobian(p, 0.0)
    assert r.trace_T == pytest.approx(-p.lam - p.chi - (p.a + p.mu))
    assert r.trace_T < 0


@settings(max_examples=100, deadline=None)
@given(v=st.floats(0.05, 1.5), kappa=st.floats(0.5, 2.0))
def test_saturation_stabilises(v, kappa):
    h = 1e-6
    lo = local_jacobian(NodeParams(kappa=kappa - h), v)
    hi = local_jacobian(NodeParams(kappa=kappa + h), v)
    assert hi.trace_T < lo.trace_T
    assert hi.det_Delta > lo.det_Delta


def test_routh_hurwitz_matches_eigensolve():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = random_admissible(rng)
        v = float(rng.uniform(0, 1.5))
        r = local_jacobian(p, v)
        ev = np.linalg.eigvals(jacobian_2x2(p, v))
        assert r.stable == bool(np.all(ev.real < 0))
        assert sorted(np.round(ev, 9), key=lambda z: (z.real, z.imag)) == pytest.approx(
            sorted(np.round(np.array(r.eigenvalues), 9), key=lambda z: (z.real, z.imag)), abs=1e-10)
        if r.stable:
            assert r.tau_lin == pytest.approx(1.0 / np.min(-ev.real))


def test_network_zero_gain():
    p = NodeParams()
    g = normalise_to_rho(random_sparse(30, 0.2, 1), 1.0).with_gain(0.0)
    r = network_thresholds(p, 0.2, g)
    assert r.Delta_net == pytest.approx(r.Lambda)
    assert r.Lambda == pytest.approx(p.net_drain)


def test_network_threshold_increases_with_saturation():
    g = normalise_to_rho(random_sparse(30, 0.2, 1), 1.0)
    ks = [network_thresholds(NodeParams(kappa=k), 0.4, g).k_star for k in (0.5, 1.0, 1.5, 2.0)]
    assert np.all(np.diff(ks) > 0)


def test_zero_radius_infinite_headroom():
    g = CouplingGraph(np.triu(np.ones((4, 4)), 1), None)
    assert network_thresholds(NodeParams(), 0.2, g).g_star == math.inf


def test_margins_worked_example():
    assert operational_margin(WORKED, 0.10) == pytest.approx(0.19722, abs=1e-5)
    assert operational_margin(WORKED, 0.30) == pytest.approx(-0.00278, abs=1e-5)
    assert operational_margin_zero(WORKED) == pytest.approx(0.297, abs=0.005)
    assert operational_margin(WORKED.with_(chi=0.30), 0.30) == pytest.approx(1.820, abs=1e-3)
    m = existence_and_margins(WORKED, None, [0.0], 0.10)
    assert m.quad_bound_ok and m.sufic_ok and m.Delta_op == pytest.approx(0.19722, abs=1e-5)


def test_margin_affine_slope():
    xs = np.array([0.0, 0.17, 0.5])
    ys = np.array([operational_margin(WORKED, x) for x in xs])
    assert np.diff(ys) / np.diff(xs) == pytest.approx([-1.0, -1.0], abs=1e-12)


def test_gershgorin_empty_graph():
    p = NodeParams()
    b = gershgorin_bounds(p, 0.2, CouplingGraph(np.zeros((3, 3)), None))
    assert b.g_bound == math.inf
    assert b.bottom_block_ok == (abs(p.a * p.b) < p.a + p.mu)


def test_gershgorin_certificate_is_conservative():
    rng = np.random.default_rng(5)
    certified = 0
    for seed in range(10):
        p = NodeParams(lam=float(rng.uniform(1.5, 3.0)), b=0.5)
        g = random_sparse(20, 0.3, seed)
        b = gershgorin_bounds(p, 0.1, g)
        if b.g_bound <= 0:
            continue
        sw = eig_sweep_gstar(p, 0.1, g, np.linspace(0, 20 * b.g_bound + 5, 200))
        assert b.g_bound <= sw.g_star
        certified += 1
    assert certified > 0


def test_dc_formulas_agree():
    p = NodeParams()
    v = solve_equilibrium(p, 0.1).v_star
    lr = transfer_and_variance(p, v, DriveSpec())
    qd = quadratic_diagnostics(p, 0.1, v_star=v)
    assert lr.dc == pytest.approx(qd.dc_gain, rel=1e-9)
    assert abs(lr.H(0.0, p)) == pytest.approx(lr.dc, rel=1e-9)


def test_dc_blows_up_near_margin_loss():
    p = NodeParams()
    dcs = []
    for b in (2.0, 1.0, 0.5, 0.35, 0.31):
        q = p.with_(b=b)
        dcs.append(transfer_and_variance(q, 0.0, DriveSpec()).dc)
    assert np.all(np.diff(dcs) > 0)


def test_variance_vanishes_in_white_limit():
    p = NodeParams()
    out = []
    for tau in (0.02, 0.005, 0.001, 0.0002, 0.00004):
        d = DriveSpec(rate=50.0 * 0.01 / tau, amplitude=Amplitude("constant", 0.6), tau_s=tau)
        out.append(transfer_and_variance(p, 0.1, d).sigma_v2)
    assert np.all(np.diff(out) < 0)
    # linear in tau_s once tau_s is short against the node's response time
    assert out[-1] / out[-2] == pytest.approx(0.2, rel=0.05)


def test_variance_unstable_rejected():
    with pytest.raises(ValueError):
        transfer_and_variance(NodeParams(lam=0.0, chi=0.0, beta=2.0, b=0.1), 0.5, DriveSpec())


def test_variance_quadrature_matches_lyapunov():
    p = NodeParams()
    lr = transfer_and_variance(p, 0.1, DriveSpec())
    assert lr.sigma_v2 == pytest.approx(lr.sigma_v2_lyap, rel=1e-5)


def test_variance_matches_linear_monte_carlo():
    # Euler-Maruyama on the linearised node driven by a Gaussian process with
    # the shot-noise autocovariance
    p = NodeParams()
    v = 0.1
    d = DriveSpec(rate=50.0, amplitude=Amplitude("constant", 0.6), tau_s=0.01)
    lr = transfer_and_variance(p, v, d)
    J = jacobian_2x2(p, v)
    var = 50.0 * 0.36 * 0.01 / 2
    tau = 0.01 / 0.005
    rng = np.random.default_rng(3)
    chains, h, steps, burn = 4000, 0.02, 6000, 2000
    x = np.zeros(chains)
    y = np.zeros(chains)
    eta = rng.standard_normal(chains) * math.sqrt(var)
    acc = []
    for k in range(steps):
        dx = J[0, 0] * x + J[0, 1] * y + eta
        dy = J[1, 0] * x + J[1, 1] * y
        x, y = x + h * dx, y + h * dy
        eta = eta - h * eta / tau + math.sqrt(2 * var * h / tau) * rng.standard_normal(chains)
        if k >= burn and k % 50 == 0:
            acc.append(np.var(x))
    assert np.mean(acc) == pytest.approx(lr.sigma_v2, rel=0.1)


def test_quantised_margin():
    assert quantised_margin_check(0.1, 0, 0, 0, 0, 5, 0.2, 1, 1, 0.5)
    assert not quantised_margin_check(0.0, 0, 0, 0, 0, 5, 0.2, 1, 1, 0.5)
    # rhs = 1*1*0.4*(0.1+0.1+0.1) = 0.12 > 0.1
    assert not quantised_margin_check(0.1, 0.1, 0.1, 0.1, 0.0, 5, 0.2, 1, 1, 0.4)


@settings(max_examples=100, deadline=None)
@given(
    base=st.tuples(*[st.floats(0, 0.05)] * 4),
    bump=st.integers(0, 3),
    extra=st.floats(0, 0.2),
    dn=st.floats(-0.1, 0.3),
)
def test_quantised_margin_monotone(base, bump, extra, dn):
    args = list(base)
    before = quantised_margin_check(dn, *args[:3], args[3], 5, 0.2, 1, 1, 0.6)
    args[bump] += extra
    after = quantised_margin_check(dn, *args[:3], args[3], 5, 0.2, 1, 1, 0.6)
    assert not (after and not before)


def test_stability_report_row():
    row = stability_report(NodeParams(), normalise_to_rho(random_sparse(20, 0.3, 1)), 0.1)
    for key in ("v_star", "L", "trace_T", "k_star", "g_star", "Delta_net", "gershgorin_g_bound", "bottom_block_ok"):
        assert key in row
    assert row["g_star"] == pytest.approx(row["k_star"] / row["rho"])
    assert f_sat_prime(row["v_star"], 0.7, 1.0) >= 0
