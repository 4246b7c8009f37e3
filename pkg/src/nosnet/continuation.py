"""Equilibrium branches in the drive I, fold/Hopf onsets, and eigenvalue sweeps
of the network block Jacobian in the global gain g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .graph import CouplingGraph, spectral_stats
from .model import NodeParams, f_sat, f_sat_prime
from .stability import local_jacobian, network_thresholds, solve_equilibrium


@dataclass(frozen=True)
class BranchPoint:
    I: float
    v_star: float
    stable: bool
    T: float
    Delta: float


@dataclass(frozen=True)
class Continuation:
    branch: list
    sn: tuple | None
    hopf: tuple | None
    hopf_admissible: bool

    @property
    def I_sn(self) -> float:
        return self.sn[0] if self.sn else math.nan

    @property
    def I_hopf(self) -> float:
        return self.hopf[0] if self.hopf else math.nan


def drive_on_branch(v, p: NodeParams):
    """The drive I for which ``v`` is an equilibrium."""
    v = np.asarray(v, dtype=float)
    return -(f_sat(v, p.alpha, p.kappa) + p.L * v + p.gamma + p.chi * p.v_rest)


def _root_in_v(h, lo: float, hi: float, n: int = 4096, tol: float = 1e-10):
    """First sign change of ``h`` on [lo, hi], refined by bisection."""
    grid = np.linspace(lo, hi, n)
    vals = h(grid)
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if idx.size == 0:
        return None
    a, b = float(grid[idx[0]]), float(grid[idx[0] + 1])
    ha = float(h(a))
    for _ in range(200):
        m = 0.5 * (a + b)
        hm = float(h(m))
        if abs(hm) < tol or b - a < 1e-15:
            return m
        if (hm > 0) == (ha > 0):
            a, ha = m, hm
        else:
            b = m
    return 0.5 * (a + b)


def continue_and_classify(p: NodeParams, I_range=(0.0, 3.0), steps: int = 301, v_range=(0.0, 5.0)) -> Continuation:
    """Trace equilibria over a grid of I and locate the first fold and Hopf onset.

    Onsets are solved in v, where the branch is a graph ``I(v)``: the fold
    is the zero of ``dF/dv = f' + L`` and the Hopf point is the zero of the
    trace with positive determinant. Onsets outside ``I_range`` are dropped.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    lo, hi = I_range
    vlo, vhi = v_range
    branch = []
    for I in np.linspace(lo, hi, steps):
        eq = solve_equilibrium(p, float(I), (vlo, vhi))
        # every root, so both sides of a fold appear
        for v in eq.roots:
            rep = local_jacobian(p, v)
            branch.append(BranchPoint(float(I), float(v), rep.stable, rep.trace_T, rep.det_Delta))

    def slope(v):
        return f_sat_prime(v, p.alpha, p.kappa) + p.L

    def trace(v):
        return f_sat_prime(v, p.alpha, p.kappa) + p.beta - p.lam - p.chi - (p.a + p.mu)

    sn = hopf = None
    v_sn = _root_in_v(slope, vlo, vhi)
    if v_sn is not None:
        I_sn = float(drive_on_branch(v_sn, p))
        if lo <= I_sn <= hi:
            sn = (I_sn, v_sn)
    v_h = _root_in_v(trace, vlo, vhi)
    if v_h is not None and (v_sn is None or v_h <= v_sn):
        rep = local_jacobian(p, v_h)
        I_h = float(drive_on_branch(v_h, p))
        if rep.det_Delta > 0 and lo <= I_h <= hi:
            hopf = (I_h, v_h)
    admissible = p.a * p.b > (p.a + p.mu) ** 2
    return Continuation(branch, sn, hopf, admissible)


def block_jacobian(p: NodeParams, v_star_vec, Wg: CouplingGraph, g: float) -> np.ndarray:
    n = Wg.n
    v = np.broadcast_to(np.asarray(v_star_vec, dtype=float), (n,))
    D = f_sat_prime(v, p.alpha, p.kappa) + p.beta - p.lam - p.chi
    J = np.zeros((2 * n, 2 * n))
    J[:n, :n] = np.diag(D) + g * Wg.W
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = p.a * p.b * np.eye(n)
    J[n:, n:] = -(p.a + p.mu) * np.eye(n)
    return J


def leading_real_part(p: NodeParams, v_star_vec, Wg: CouplingGraph, g: float) -> float:
    J = block_jacobian(p, v_star_vec, Wg, g)
    return float(np.max(linalg.eigvals(J, overwrite_a=True, check_finite=False).real))


@dataclass(frozen=True)
class GSweep:
    g_star: float
    g_grid: np.ndarray
    leading_re: np.ndarray
    collapse_ratio: float
    k_star: float
    rho: float
    status: str


def eig_sweep_gstar(p: NodeParams, v_star_vec, Wg: CouplingGraph, g_grid, tol: float = 1e-8) -> GSweep:
    """First zero crossing of the leading eigenvalue real part along ``g_grid``."""
    if Wg.n > 2048:
        raise ValueError("dense sweep limited to n <= 2048")
    g_grid = np.asarray(g_grid, dtype=float)
    if np.any(np.diff(g_grid) <= 0):
        raise ValueError("g_grid must be increasing")
    re = np.array([leading_real_part(p, v_star_vec, Wg, g) for g in g_grid])
    th = network_thresholds(p, v_star_vec, Wg)
    idx = np.nonzero(re >= 0)[0]
    if idx.size == 0:
        return GSweep(math.inf, g_grid, re, math.nan, th.k_star, th.rho, "stable-throughout")
    if idx[0] == 0:
        return GSweep(float(g_grid[0]), g_grid, re, math.nan, th.k_star, th.rho, "unstable-throughout")
    a, b = float(g_grid[idx[0] - 1]), float(g_grid[idx[0]])
    gs = b
    for _ in range(100):
        m = 0.5 * (a + b)
        r = leading_real_part(p, v_star_vec, Wg, m)
        if abs(r) < tol:
            gs = m
            break
        if r < 0:
            a = m
        else:
            b = m
        gs = 0.5 * (a + b)
        if b - a < 1e-13:
            break
    ratio = th.rho * gs / th.k_star if th.k_star != 0 else math.nan
    return GSweep(gs, g_grid, re, ratio, th.k_star, th.rho, "crossing")
