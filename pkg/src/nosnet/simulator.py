"""Bin-synchronous network simulation with delayed spike delivery and soft resets.

Each bin runs, in order: delivery of spikes due this bin, exogenous input,
one forward-Euler step of (v, u) with clamping (all rates are per bin, so the
step is one bin), threshold test, spike scheduling and reset, and clearing
of the synaptic accumulator. A spike emitted in bin ``t`` over a link with
delay ``tau`` is delivered in bin ``t + max(tau, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .drive import DriveSpec, exogenous_input, sample_drive
from .graph import CouplingGraph, gate_and_link_queue_step
from .model import NodeParams, ResetSpec, ThresholdSpec, f_sat, pullback_term
from .rng import STREAM_THRESHOLD, stream


@dataclass(frozen=True)
class AdaptationSpec:
    """Activity-dependent recovery ``a(t) = a0 + kappa_a * rate`` and a bounded
    threshold band. ``rate`` is the trailing-window spike rate per bin."""

    kappa_a: float = 0.5
    window: int = 20
    sigma_band: float = 0.05

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("adaptation window must be >= 1 bin")
        if self.sigma_band < 0:
            raise ValueError("sigma_band must be >= 0")


@dataclass(frozen=True, eq=False)
class SimConfig:
    graph: CouplingGraph
    params: NodeParams | tuple = field(default_factory=NodeParams)
    drive: DriveSpec | tuple = field(default_factory=DriveSpec)
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    reset: ResetSpec = field(default_factory=ResetSpec)
    dt: float = 0.005
    horizon: int = 2000
    v_max: float = 1.5
    u_min: float = -2.0
    u_max: float = 2.0
    adaptation: AdaptationSpec | None = None
    record: frozenset = frozenset({"spikes"})
    substeps: int = 1
    v0: float | None = None
    u0: float | None = None
    init_noise: float = 0.01
    forced_spikes: dict | None = None
    exogenous: np.ndarray | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not self.u_min < self.u_max:
            raise ValueError("u clamp bounds must be ordered")
        n = self.graph.n
        for name in ("params", "drive"):
            val = getattr(self, name)
            if isinstance(val, (list, tuple)) and len(val) != n:
                raise ValueError(f"{name} list must have one entry per node")
        p0 = self.node_params(0)
        if not self.v_max > p0.v_rest:
            raise ValueError("v clamp bounds must be ordered")
        if self.exogenous is not None and np.shape(self.exogenous) != (self.horizon, n):
            raise ValueError("exogenous input must have shape (horizon, n)")

    def node_params(self, i: int) -> NodeParams:
        return self.params[i] if isinstance(self.params, (list, tuple)) else self.params

    def node_drive(self, i: int) -> DriveSpec:
        return self.drive[i] if isinstance(self.drive, (list, tuple)) else self.drive


@dataclass
class SimResult:
    spikes: list
    population_counts: np.ndarray
    seed: int
    v_trace: np.ndarray | None = None
    u_trace: np.ndarray | None = None
    I_trace: np.ndarray | None = None
    threshold_trace: np.ndarray | None = None
    spike_v: list | None = None

    @property
    def n(self) -> int:
        return len(self.spikes)

    @property
    def horizon(self) -> int:
        return len(self.population_counts)

    def raster(self) -> np.ndarray:
        R = np.zeros((self.horizon, self.n), dtype=np.int8)
        for i, s in enumerate(self.spikes):
            R[s, i] = 1
        return R


def _param_vectors(cfg: SimConfig):
    n = cfg.graph.n
    names = ("alpha", "kappa", "beta", "gamma", "lam", "chi", "v_rest", "a", "b", "mu")
    if isinstance(cfg.params, NodeParams):
        return {k: getattr(cfg.params, k) for k in names}
    return {k: np.array([getattr(cfg.node_params(i), k) for i in range(n)]) for k in names}


def exogenous_matrix(cfg: SimConfig, seed: int) -> np.ndarray:
    """``(horizon, n)`` exogenous input ``I0 + gain * eta`` per node."""
    if cfg.exogenous is not None:
        return np.asarray(cfg.exogenous, dtype=float)
    n = cfg.graph.n
    X = np.empty((cfg.horizon, n))
    for i in range(n):
        spec = cfg.node_drive(i)
        X[:, i] = exogenous_input(spec, sample_drive(spec, cfg.horizon, cfg.dt, seed, node=i))
    return X


def run_simulation(cfg: SimConfig, seed: int = 0) -> SimResult:
    n, H = cfg.graph.n, cfg.horizon
    P = _param_vectors(cfg)
    th, rs = cfg.threshold, cfg.reset
    rec = cfg.record
    v_rest = P["v_rest"]

    X = exogenous_matrix(cfg, seed)
    rng_th = stream(seed, STREAM_THRESHOLD, th.seed_stream)

    # edges grouped for delivery; zero delays deliver next bin
    ii, jj = np.nonzero(cfg.graph.W)
    ew = cfg.graph.g * cfg.graph.W[ii, jj]
    ed = np.maximum(cfg.graph.delays[ii, jj], 1)
    L = int(ed.max()) + 1 if ed.size else 2
    buf = np.zeros((L, n))
    gate = cfg.graph.gate
    q = np.zeros(ii.size)
    gval = np.ones(ii.size)

    rng_init = stream(seed, STREAM_THRESHOLD, 1000 + th.seed_stream)
    v = np.full(n, 0.0) + v_rest
    if cfg.v0 is not None:
        v = np.full(n, float(cfg.v0))
    else:
        v = v + cfg.init_noise * np.abs(rng_init.standard_normal(n))
    u = np.full(n, 0.0 if cfg.u0 is None else float(cfg.u0))

    a0 = P["a"]
    adapt = cfg.adaptation
    recent = np.zeros((adapt.window, n)) if adapt else None

    forced = {}
    if cfg.forced_spikes:
        for node, bins in cfg.forced_spikes.items():
            for t in bins:
                forced.setdefault(int(t), []).append(int(node))

    spikes = [[] for _ in range(n)]
    spike_v = [[] for _ in range(n)] if "spike_v" in rec else None
    pop = np.zeros(H, dtype=np.int64)
    keep_states = "states" in rec
    keep_inputs = "inputs" in rec
    vt = np.empty((H, n)) if keep_states else None
    ut = np.empty((H, n)) if keep_states else None
    It = np.empty((H, n)) if keep_inputs else None
    tht = np.empty((H, n)) if keep_states else None

    h = 1.0 / cfg.substeps
    decay = math.exp(-rs.r_reset)
    continuous = rs.kind == "continuous-pullback"
    prev_above = np.zeros(n, dtype=bool)

    for t in range(H):
        slot = t % L
        I_syn = buf[slot].copy()
        buf[slot] = 0.0
        I = I_syn + X[t]

        vth = th.sample(rng_th, n)
        if adapt is not None:
            vth = th.v_th_base + np.clip(vth - th.v_th_base, -adapt.sigma_band, adapt.sigma_band)
            a_t = a0 + adapt.kappa_a * recent.mean(axis=0)
        else:
            a_t = a0

        for _ in range(cfg.substeps):
            fs = f_sat(v, P["alpha"], P["kappa"])
            dv = fs + P["beta"] * v + P["gamma"] - u + I - P["lam"] * v - P["chi"] * (v - v_rest)
            if continuous:
                dv = dv + pullback_term(v, vth, rs)
            du = a_t * (P["b"] * v - u) - P["mu"] * u
            v = v + h * dv
            u = u + h * du
            v = np.clip(v, v_rest, cfg.v_max)
            u = np.clip(u, cfg.u_min, cfg.u_max)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(u))):
            raise FloatingPointError(f"non-finite state at bin {t}")

        above = v >= vth
        fired = (above & ~prev_above) if continuous else above.copy()
        prev_above = above
        if t in forced:
            fired[forced[t]] = True
        idx = np.flatnonzero(fired)
        if keep_states:
            vt[t], ut[t], tht[t] = v, u, vth
        if keep_inputs:
            It[t] = I

        if idx.size:
            for i in idx:
                spikes[i].append(t)
                if spike_v is not None:
                    spike_v[i].append(float(v[i]))
            pop[t] = idx.size
            m = fired[jj]
            if m.any():
                np.add.at(buf, ((t + ed[m]) % L, ii[m]), ew[m] * gval[m])
            if not continuous:
                v[idx] = rs.c + (v[idx] - rs.c) * decay
                u[idx] = np.minimum(u[idx] + rs.d, cfg.u_max)
        if gate is not None and ii.size:
            q, gval = gate_and_link_queue_step(q, fired[jj].astype(float), gate)
        if adapt is not None:
            recent[t % adapt.window] = fired

    return SimResult(
        spikes=[np.asarray(s, dtype=np.int64) for s in spikes],
        population_counts=pop,
        seed=seed,
        v_trace=vt,
        u_trace=ut,
        I_trace=It,
        threshold_trace=tht,
        spike_v=spike_v,
    )
