"""Single NOS node: parameters, bounded excitability, drift, nullclines and resets.

All rates are per bin. A bin is ``BIN_SECONDS`` long unless a caller says
otherwise; multiply a per-bin rate by ``PER_BIN_TO_PER_SECOND`` to get s^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Literal

import numpy as np

BIN_SECONDS = 0.005
PER_BIN_TO_PER_SECOND = 1.0 / BIN_SECONDS

SLOPE_MAX_FACTOR = 3.0 * math.sqrt(3.0) / 8.0


def per_bin_to_per_second(rate: float, dt: float = BIN_SECONDS) -> float:
    return rate / dt


def per_second_to_per_bin(rate: float, dt: float = BIN_SECONDS) -> float:
    return rate * dt


@dataclass(frozen=True)
class NodeParams:
    """Per-node coefficients of the two-state unit.

    ``lam`` is the service leak (``lambda`` in config files). ``kappa=0`` is
    accepted and gives the pure quadratic drive ``alpha * v**2``.
    """

    alpha: float = 0.7
    kappa: float = 1.0
    beta: float = 0.1
    gamma: float = 0.08
    lam: float = 0.18
    chi: float = 0.05
    v_rest: float = 0.0
    a: float = 1.1
    b: float = 1.0
    mu: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not math.isfinite(val):
                raise ValueError(f"{f.name} must be finite, got {val!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        for name in ("lam", "chi", "b", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.a <= 0:
            raise ValueError("a must be > 0")
        if self.a + self.mu == 0:
            raise ValueError("degenerate parameters: a + mu == 0")

    @property
    def recovery_ratio(self) -> float:
        """Slope ab/(a+mu) of the u-nullcline."""
        return self.a * self.b / (self.a + self.mu)

    @property
    def L(self) -> float:
        """Net linear slope of the scalar equilibrium map."""
        return self.beta - self.lam - self.chi - self.recovery_ratio

    @property
    def net_drain(self) -> float:
        return self.lam + self.chi + self.recovery_ratio - self.beta

    def with_(self, **changes) -> "NodeParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ThresholdSpec:
    v_th_base: float = 0.60
    sigma: float = 0.0
    noise_kind: Literal["none", "clipped-gaussian", "uniform"] = "clipped-gaussian"
    seed_stream: int = 1

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.noise_kind not in ("none", "clipped-gaussian", "uniform"):
            raise ValueError(f"unknown noise_kind {self.noise_kind!r}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Realised thresholds; always inside ``v_th_base +- 3 sigma``."""
        base = np.full(size, self.v_th_base, dtype=float)
        if self.sigma == 0 or self.noise_kind == "none":
            return base
        if self.noise_kind == "clipped-gaussian":
            xi = np.clip(rng.standard_normal(size), -3.0, 3.0)
        else:
            # unit variance uniform
            xi = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        return base + self.sigma * xi


@dataclass(frozen=True)
class ResetSpec:
    kind: Literal["event-exponential", "continuous-pullback"] = "event-exponential"
    c: float = 0.10
    d: float = 0.25
    r_reset: float = 5.0
    k_reset: float = 14.0

    def __post_init__(self):
        if self.r_reset <= 0:
            raise ValueError("r_reset must be > 0")
        if self.kind not in ("event-exponential", "continuous-pullback"):
            raise ValueError(f"unknown reset kind {self.kind!r}")


@dataclass(frozen=True)
class ScalingRefs:
    V: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if not (self.V > 0 and self.T > 0):
            raise ValueError("scaling references V and T must be > 0")


def _check_finite(v):
    if not np.all(np.isfinite(v)):
        raise ValueError("state must be finite")


def f_sat(v, alpha: float, kappa: float):
    v2 = np.multiply(v, v)
    return alpha * v2 / (1.0 + kappa * v2)


def f_sat_prime(v, alpha: float, kappa: float):
    v = np.asarray(v, dtype=float)
    den = 1.0 + kappa * v * v
    return 2.0 * alpha * v / (den * den)


def f_sat_slope_max(alpha: float, kappa: float) -> tuple[float, float]:
    """Largest slope of f_sat and where it occurs. Unbounded when kappa == 0."""
    if kappa == 0:
        return math.inf, math.inf
    return SLOPE_MAX_FACTOR * alpha / math.sqrt(kappa), 1.0 / math.sqrt(3.0 * kappa)


@dataclass(frozen=True)
class FsatEval:
    value: float
    slope: float
    slope_max: float
    argmax: float


def f_sat_eval(v: float, p: NodeParams) -> FsatEval:
    _check_finite(v)
    slope_max, argmax = f_sat_slope_max(p.alpha, p.kappa)
    return FsatEval(
        value=float(f_sat(v, p.alpha, p.kappa)),
        slope=float(f_sat_prime(v, p.alpha, p.kappa)),
        slope_max=slope_max,
        argmax=argmax,
    )


def drift(v, u, I, p: NodeParams):
    """Right-hand side ``(dv/dt, du/dt)`` without threshold or reset."""
    _check_finite(v)
    _check_finite(u)
    _check_finite(I)
    dv = (
        f_sat(v, p.alpha, p.kappa)
        + p.beta * v
        + p.gamma
        - u
        + I
        - p.lam * v
        - p.chi * (np.subtract(v, p.v_rest))
    )
    du = p.a * p.b * np.asarray(v) - (p.a + p.mu) * np.asarray(u)
    return dv, du


def nullclines(p: NodeParams, v_grid):
    """u-values on the v- and u-nullclines of the input-free system."""
    v = np.asarray(v_grid, dtype=float)
    _check_finite(v)
    u_vnull = f_sat(v, p.alpha, p.kappa) + (p.beta - p.lam - p.chi) * v + p.gamma + p.chi * p.v_rest
    u_unull = p.recovery_ratio * v
    return u_vnull, u_unull


def sigmoid(x, k: float):
    # tanh form avoids overflow for large |k x|
    return 0.5 * (1.0 + np.tanh(0.5 * k * np.asarray(x, dtype=float)))


def pullback_term(v, v_th, spec: ResetSpec):
    """Smooth reset contribution added to dv/dt; engages above threshold."""
    return -spec.r_reset * sigmoid(np.subtract(v, v_th), spec.k_reset) * (np.subtract(v, spec.c))


def apply_reset(v, u, spec: ResetSpec, dt: float = 1.0):
    """Event-based exponential soft reset over ``dt`` bins."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    decay = math.exp(-spec.r_reset * dt)
    v_new = spec.c + (np.subtract(v, spec.c)) * decay
    return v_new, np.add(u, spec.d)


@dataclass(frozen=True)
class ScaledModel:
    params: NodeParams
    threshold: ThresholdSpec | None
    reset: ResetSpec | None
    input_scale: float
    delay_scale: float
    amplitude_scale: float
    tau_s_scale: float
    proxy_before: tuple[float, float] | None = None
    proxy_after: tuple[float, float] | None = None


def nondimensionalise(
    p: NodeParams,
    refs: ScalingRefs,
    threshold: ThresholdSpec | None = None,
    reset: ResetSpec | None = None,
    g_rho: float | None = None,
    v_star: float | None = None,
) -> ScaledModel:
    """Rescale state by ``V`` and time by ``T``.

    ``u`` enters dv/dt directly, so it carries v-units per time and ``b``
    carries 1/time; both are rescaled accordingly (``b~ = b T``,
    ``u~ = u T / V``). With that choice the stability proxy
    ``g rho f'(v*) < Lambda`` has both sides scaled by ``T``.

    When ``g_rho`` and ``v_star`` are given, ``proxy_before``/``proxy_after``
    hold ``(lhs, rhs)`` of the proxy in both unit systems.
    """
    V, T = refs.V, refs.T
    q = NodeParams(
        alpha=p.alpha * T * V,
        kappa=p.kappa * V * V,
        beta=p.beta * T,
        gamma=p.gamma * T / V,
        lam=p.lam * T,
        chi=p.chi * T,
        v_rest=p.v_rest / V,
        a=p.a * T,
        b=p.b * T,
        mu=p.mu * T,
    )
    th = None
    if threshold is not None:
        th = replace(threshold, v_th_base=threshold.v_th_base / V, sigma=threshold.sigma / V)
    rs = None
    if reset is not None:
        rs = replace(reset, c=reset.c / V, d=reset.d * T / V, r_reset=reset.r_reset * T, k_reset=reset.k_reset * V)
    before = after = None
    if g_rho is not None and v_star is not None:
        before = (g_rho * float(f_sat_prime(v_star, p.alpha, p.kappa)), p.net_drain)
        after = (g_rho * float(f_sat_prime(v_star / V, q.alpha, q.kappa)), q.net_drain)
    return ScaledModel(q, th, rs, T / V, 1.0 / T, T / V, 1.0 / T, before, after)


def quantise_state(v, m: int, n: int, V: float = 1.0):
    """Fixed-point Q(m.n) image of ``v / V`` with saturating clip."""
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    scale = 2.0**n
    codes = np.floor(np.asarray(v, dtype=float) / V * scale + 0.5)
    codes = np.clip(codes, 0, 2**m - 1)
    out = codes / scale
    return float(out) if np.ndim(out) == 0 else out
