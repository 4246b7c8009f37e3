"""Equilibria, local and network stability, margins and linear response.

Everything here works in bins (rates per bin). ``d_bar`` denotes the linear
self-slope ``f'(v*) + beta - lam - chi`` of the v-equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, linalg

from .drive import DriveSpec, analytic_shot_stats
from .graph import CouplingGraph, spectral_stats
from .model import NodeParams, f_sat, f_sat_prime, f_sat_slope_max

GRID_POINTS = 1024


def residual(v, p: NodeParams, I_star: float):
    """Scalar equilibrium map F(v); zeros are equilibria."""
    return f_sat(v, p.alpha, p.kappa) + p.L * np.asarray(v, dtype=float) + p.gamma + p.chi * p.v_rest + I_star


def d_bar(p: NodeParams, v_star):
    return f_sat_prime(v_star, p.alpha, p.kappa) + p.beta - p.lam - p.chi


@dataclass(frozen=True)
class EquilibriumReport:
    v_star: float | None
    u_star: float | None
    residual: float
    unique_on_interval: bool
    L: float
    C: float
    discriminant: float
    roots: tuple = ()
    F_lo: float = math.nan
    F_hi: float = math.nan

    @property
    def found(self) -> bool:
        return self.v_star is not None


def _bisect(F, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    flo = F(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if abs(fm) < tol or hi - lo < 1e-15:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_equilibrium(p: NodeParams, I_star: float = 0.0, interval=(0.0, 1.5)) -> EquilibriumReport:
    """Roots of F on ``interval`` by grid bracketing then bisection.

    ``v_star`` is the lowest root (the subthreshold branch). If F never
    changes sign the report has ``v_star=None`` and carries F at both ends.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    C = p.gamma + p.chi * p.v_rest + I_star
    D = p.L**2 - 4.0 * p.alpha * C
    lemma_ok = uniqueness_and_rule_check(p).lemma_ok

    def F(v):
        return float(residual(v, p, I_star))

    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = residual(grid, p, I_star)
    roots = []
    for k in range(GRID_POINTS - 1):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(grid[k]))
        elif a * b < 0:
            roots.append(_bisect(F, float(grid[k]), float(grid[k + 1])))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    if not roots:
        return EquilibriumReport(None, None, math.nan, lemma_ok, p.L, C, D, (), float(vals[0]), float(vals[-1]))
    if lemma_ok:
        roots = roots[:1]
    v = roots[0]
    return EquilibriumReport(
        v_star=v,
        u_star=p.recovery_ratio * v,
        residual=F(v),
        unique_on_interval=lemma_ok and len(roots) == 1,
        L=p.L,
        C=C,
        discriminant=D,
        roots=tuple(roots),
        F_lo=float(vals[0]),
        F_hi=float(vals[-1]),
    )


@dataclass(frozen=True)
class RuleCheck:
    lemma_ok: bool
    corollary_lhs: float
    corollary_rhs: float
    rule_margin_epsilon: float


def uniqueness_and_rule_check(p: NodeParams) -> RuleCheck:
    """Sufficient condition for F to be strictly monotone (single equilibrium)."""
    smax, _ = f_sat_slope_max(p.alpha, p.kappa)
    lhs = p.lam + p.chi + p.recovery_ratio
    rhs = smax - p.beta
    return RuleCheck(bool(lhs > rhs), lhs, rhs, lhs - rhs)


@dataclass(frozen=True)
class QuadraticDiagnostics:
    L: float
    C: float
    D: float
    roots: tuple
    real_roots: bool
    dc_gain: float
    curvature_cap: float


def quadratic_diagnostics(p: NodeParams, I_star: float = 0.0, v_star: float | None = None) -> QuadraticDiagnostics:
    """Quadratic-surrogate view ``alpha v^2 + L v + C = 0``.

    ``dc_gain`` is evaluated at ``v_star`` (defaults to the smaller real root).
    """
    L = p.L
    C = p.gamma + p.chi * p.v_rest + I_star
    D = L * L - 4.0 * p.alpha * C
    roots = ()
    if D >= 0:
        s = math.sqrt(D)
        roots = tuple(sorted(((-L - s) / (2 * p.alpha), (-L + s) / (2 * p.alpha))))
    if v_star is None and roots:
        v_star = roots[0]
    dc = math.nan
    if v_star is not None:
        dc = -1.0 / (float(f_sat_prime(v_star, p.alpha, p.kappa)) + L)
    return QuadraticDiagnostics(L, C, D, roots, D >= 0, dc, L * L / (4 * p.alpha))


@dataclass(frozen=True)
class StabilityReport:
    trace_T: float
    det_Delta: float
    stable: bool
    classification: str
    tau_lin: float
    dc_gain: float
    eigenvalues: tuple = ()
    Lambda: float = math.nan
    k_star: float = math.nan
    g_star: float = math.nan
    Delta_net: float = math.nan
    gershgorin_g_bound: float = math.nan
    gershgorin_norm_bound: float = math.nan
    bottom_block_ok: bool | None = None
    rho: float = math.nan
    d_bar: float = math.nan

    def as_row(self) -> dict:
        row = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "eigenvalues"}
        return row


def _classify(T: float, Delta: float, tol: float = 1e-12) -> str:
    if abs(Delta) <= tol or (Delta > 0 and abs(T) <= tol):
        return "marginal"
    if Delta < 0:
        return "saddle"
    return "spiral" if T * T - 4 * Delta < 0 else "node"


def jacobian(p: NodeParams, v_star: float) -> np.ndarray:
    return np.array([[float(d_bar(p, v_star)), -1.0], [p.a * p.b, -(p.a + p.mu)]])


def local_jacobian(p: NodeParams, v_star: float) -> StabilityReport:
    if not math.isfinite(v_star):
        raise ValueError("v_star must be finite")
    fp = float(f_sat_prime(v_star, p.alpha, p.kappa))
    db = fp + p.beta - p.lam - p.chi
    T = db - (p.a + p.mu)
    Delta = p.a * p.b - db * (p.a + p.mu)
    stable = bool(T < 0 and Delta > 0)
    disc = complex(T * T - 4 * Delta)
    eig = ((T + disc**0.5) / 2, (T - disc**0.5) / 2)
    tau = 1.0 / min(-eig[0].real, -eig[1].real) if stable else math.inf
    dc = (p.a + p.mu) / Delta if Delta != 0 else math.inf
    return StabilityReport(T, Delta, stable, _classify(T, Delta), tau, dc, eig, d_bar=db)


def _perron_dbar(p: NodeParams, v_star, phi: np.ndarray) -> tuple[float, float]:
    """Perron-weighted ``d_bar`` and ``f'`` for a node-wise equilibrium."""
    v = np.asarray(v_star, dtype=float)
    if v.ndim == 0 or np.ptp(v) <= 1e-9:
        v0 = float(v.ravel()[0]) if v.ndim else float(v)
        return float(d_bar(p, v0)), float(f_sat_prime(v0, p.alpha, p.kappa))
    w = phi**2 / np.sum(phi**2)
    fp = f_sat_prime(v, p.alpha, p.kappa)
    return float(w @ (fp + p.beta - p.lam - p.chi)), float(w @ fp)


def network_thresholds(p: NodeParams, v_star, Wg: CouplingGraph) -> StabilityReport:
    """Perron-mode critical coupling and net margin at gain ``Wg.g``."""
    ss = spectral_stats(Wg)
    v0 = float(np.mean(v_star))
    base = local_jacobian(p, v0)
    db, fp = _perron_dbar(p, v_star, ss.perron_vector)
    Lam = p.net_drain
    k_star = min((p.a + p.mu) - db, p.recovery_ratio - db)
    g_star = k_star / ss.rho if ss.rho > 0 else math.inf
    Delta_net = Lam - Wg.g * ss.rho * fp
    gb = gershgorin_bounds(p, v_star, Wg)
    return replace(
        base,
        Lambda=Lam,
        k_star=k_star,
        g_star=g_star,
        Delta_net=Delta_net,
        gershgorin_g_bound=gb.g_bound,
        gershgorin_norm_bound=gb.norm_bound,
        bottom_block_ok=gb.bottom_block_ok,
        rho=ss.rho,
        d_bar=db,
    )


@dataclass(frozen=True)
class Margins:
    sat_cap_ok: bool
    quad_bound_ok: bool
    sufic_ok: bool
    Delta_op: float
    L: float
    cap: float


def operational_margin(p: NodeParams, I_max: float) -> float:
    return p.L**2 / (4.0 * p.alpha) - (p.gamma + I_max)


def operational_margin_zero(p: NodeParams) -> float:
    """Largest drive for which the operational margin stays non-negative."""
    return p.L**2 / (4.0 * p.alpha) - p.gamma


def existence_and_margins(p: NodeParams, Wg: CouplingGraph | None, S_star, I_max: float) -> Margins:
    L = p.L
    cap = L * L / (4.0 * p.alpha)
    S = np.atleast_1d(np.asarray(S_star, dtype=float))
    norm_inf = 0.0 if Wg is None else float(np.abs(Wg.G).sum(axis=1).max())
    net_in = norm_inf * float(np.max(np.abs(S))) if S.size else 0.0
    C = p.gamma + p.chi * p.v_rest + I_max
    sat_ok = True if p.kappa == 0 else bool(C <= p.alpha / p.kappa and L <= 0)
    if p.kappa == 0:
        sat_ok = L <= 0
    return Margins(
        sat_cap_ok=sat_ok,
        quad_bound_ok=bool(C <= cap),
        sufic_ok=bool(p.gamma + p.chi * p.v_rest + net_in <= cap),
        Delta_op=cap - (p.gamma + I_max),
        L=L,
        cap=cap,
    )


@dataclass(frozen=True)
class GershgorinBounds:
    g_bound: float
    norm_bound: float
    bottom_block_ok: bool


def gershgorin_bounds(p: NodeParams, v_star_vec, Wg: CouplingGraph) -> GershgorinBounds:
    """Disc-containment certificates on ``|g|``; negative means no certificate."""
    n = Wg.n
    v = np.broadcast_to(np.asarray(v_star_vec, dtype=float), (n,))
    db = d_bar(p, v)
    A = np.abs(Wg.W)
    rows = A.sum(axis=1) - np.diag(A)
    mask = rows > 0
    g_bound = float(np.min((-db[mask] - 1.0) / rows[mask])) if mask.any() else math.inf
    ninf = float(A.sum(axis=1).max())
    norm_bound = (-float(np.max(db)) - 1.0) / ninf if ninf > 0 else math.inf
    return GershgorinBounds(g_bound, norm_bound, bool(abs(p.a * p.b) < p.a + p.mu))


@dataclass(frozen=True)
class LinearResponse:
    d_bar: float
    dc: float
    sigma_v2: float
    sigma_v2_lyap: float
    omega_max: float

    def H(self, s, p: NodeParams):
        s = np.asarray(s, dtype=complex)
        am = p.a + p.mu
        return (s + am) / ((s - self.d_bar) * (s + am) + p.a * p.b)


def transfer_function(p: NodeParams, d: float):
    am = p.a + p.mu

    def H(s):
        s = np.asarray(s, dtype=complex)
        return (s + am) / ((s - d) * (s + am) + p.a * p.b)

    return H


def transfer_and_variance(
    p: NodeParams,
    v_star: float,
    drive: DriveSpec,
    dt: float = 0.005,
    omega_factor: float = 1e3,
    rtol: float = 1e-6,
) -> LinearResponse:
    """DC gain and stationary Var(delta v) of the linearised node under shot noise.

    The drive enters through its autocovariance ``var e^{-|t|/tau_s}``, whose
    Fourier transform ``2 var tau_s / (1 + w^2 tau_s^2)`` is used in the
    integral. Time is in bins, so ``tau_s`` is converted with ``dt``.
    ``sigma_v2_lyap`` is the same quantity from a Lyapunov equation.
    """
    rep = local_jacobian(p, v_star)
    if not rep.stable:
        raise ValueError("linear variance is undefined for an unstable equilibrium")
    db = rep.d_bar
    st = analytic_shot_stats(drive)
    tau = drive.tau_s / dt
    var = st.variance
    am = p.a + p.mu
    dc = am / (p.a * p.b - am * db)
    if var == 0:
        return LinearResponse(db, dc, 0.0, 0.0, math.inf)
    if tau == 0:
        raise ValueError("tau_s = 0 has no finite-variance continuous limit")
    H = transfer_function(p, db)
    wmax = omega_factor / tau

    def integrand(w):
        return abs(H(1j * w)) ** 2 * 2.0 * var * tau / (1.0 + (w * tau) ** 2)

    # split at the corner frequencies so quad sees the peaks
    pts = sorted({min(wmax, x) for x in (1.0 / tau, math.sqrt(p.a * p.b), am)})
    total, _ = integrate.quad(integrand, 0.0, wmax, points=pts, limit=500, epsrel=rtol)
    sigma = total / math.pi

    A = np.array([[db, -1.0, 1.0], [p.a * p.b, -am, 0.0], [0.0, 0.0, -1.0 / tau]])
    Q = np.zeros((3, 3))
    Q[2, 2] = 2.0 * var / tau
    P = linalg.solve_continuous_lyapunov(A, -Q)
    return LinearResponse(db, dc, sigma, float(P[0, 0]), wmax)


def quantised_margin_check(
    Delta_net: float,
    delta_fprime: float,
    delta_W: float,
    delta_g: float,
    eps_LUT: float,
    r_reset: float,
    mean_abs_v_minus_c: float,
    g: float,
    rho: float,
    fprime: float,
) -> bool:
    """Robustness of the net margin to fixed-point and lookup-table error."""
    if min(delta_fprime, delta_W, delta_g, eps_LUT) < 0:
        raise ValueError("error bounds must be >= 0")
    rhs = g * rho * fprime * (delta_fprime + delta_W + delta_g) + eps_LUT * r_reset * mean_abs_v_minus_c
    return bool(Delta_net > rhs)


def stability_report(p: NodeParams, Wg: CouplingGraph, I_star: float = 0.0, interval=(0.0, 1.5)) -> dict:
    """Flat record used by the ``stability`` command."""
    eq = solve_equilibrium(p, I_star, interval)
    row = {"v_star": eq.v_star, "u_star": eq.u_star, "L": eq.L, "C": eq.C, "discriminant": eq.discriminant}
    if eq.found:
        row.update(network_thresholds(p, eq.v_star, Wg).as_row())
    return row
