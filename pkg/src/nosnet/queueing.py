"""Queueing references for the NOS unit.

Analytic and simulated M/M/1(/K) occupancy, arrival-only light-load
calibration of a NOS unit against the M/M/1 mean, and a closed-loop marking
comparison in which three controllers feed different states through the same
logistic nonlinearity.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .continuation import drive_on_branch
from .graph import CouplingGraph
from .model import NodeParams, ResetSpec, ThresholdSpec, f_sat, pullback_term
from .rng import STREAM_QUEUE, stream
from .simulator import SimConfig, run_simulation
from .spikestats import ccdf


def mm1_mean(rho: float) -> float:
    if not 0 <= rho < 1:
        raise ValueError("analytic M/M/1 mean needs 0 <= rho < 1")
    return rho / (1.0 - rho)


def mm1k_pmf(rho: float, K: int) -> np.ndarray:
    """Stationary occupancy law of M/M/1/K."""
    k = np.arange(K + 1)
    if abs(rho - 1.0) < 1e-12:
        return np.full(K + 1, 1.0 / (K + 1))
    w = rho**k
    return w / w.sum()


def mm1k_mean(rho: float, K: int) -> float:
    return float(np.dot(np.arange(K + 1), mm1k_pmf(rho, K)))


@dataclass(frozen=True)
class MM1Result:
    rho: float
    analytic_mean: float
    sim_mean: float
    sim_se: float
    pmf: np.ndarray
    ccdf_x: np.ndarray
    ccdf_p: np.ndarray


def simulate_mm1k(lambda_rate: float, mu_rate: float, K: int, events: int, seed: int = 0, batches: int = 20):
    """Birth-death simulation of M/M/1/K; arrivals at a full buffer are lost.

    Returns the time-weighted occupancy pmf and a batch-means mean and
    standard error. The first 1% of events is discarded as warm-up.
    """
    if mu_rate <= 0 or lambda_rate < 0:
        raise ValueError("need mu_rate > 0 and lambda_rate >= 0")
    if K < 1 or events < batches:
        raise ValueError("need K >= 1 and events >= batches")
    rng = stream(seed, STREAM_QUEUE, 0)
    tot = lambda_rate + mu_rate
    hold_busy = rng.exponential(1.0 / tot, events)
    hold_idle = rng.exponential(1.0 / lambda_rate, events) if lambda_rate > 0 else np.full(events, math.inf)
    is_arrival = rng.random(events) < lambda_rate / tot
    warm = events // 100
    time_in = np.zeros(K + 1)
    per = (events - warm) // batches
    b_area = np.zeros(batches)
    b_time = np.zeros(batches)
    q = 0
    for e in range(events):
        if q == 0:
            h = hold_idle[e]
            nxt = 1
        else:
            h = hold_busy[e]
            nxt = q + 1 if is_arrival[e] else q - 1
            if nxt > K:
                nxt = K
        if e >= warm:
            if not math.isfinite(h):
                break
            time_in[q] += h
            bi = min((e - warm) // per, batches - 1)
            b_area[bi] += q * h
            b_time[bi] += h
        q = nxt
    if time_in.sum() == 0:
        pmf = np.zeros(K + 1)
        pmf[0] = 1.0
        return pmf, 0.0, 0.0
    pmf = time_in / time_in.sum()
    ok = b_time > 0
    bm = b_area[ok] / b_time[ok]
    se = float(bm.std(ddof=1) / math.sqrt(bm.size)) if bm.size > 1 else math.nan
    return pmf, float(np.dot(np.arange(K + 1), pmf)), se


def mm1_reference(lambda_rate: float, mu_rate: float, K: int | None = None, events: int = 200_000, seed: int = 0) -> MM1Result:
    """Analytic M/M/1 mean alongside a simulated M/M/1/K run.

    Without ``K`` the simulation uses a buffer large enough that blocking is
    negligible (``rho**K < 1e-12``), and requires ``rho < 1``.
    """
    if mu_rate <= 0:
        raise ValueError("mu_rate must be > 0")
    rho = lambda_rate / mu_rate
    if K is None:
        if rho >= 1:
            raise ValueError("rho >= 1 has no M/M/1 steady state; give a finite K")
        K = max(10, int(math.ceil(math.log(1e-12) / math.log(max(rho, 1e-12)))))
    analytic = mm1_mean(rho) if rho < 1 else math.nan
    pmf, m, se = simulate_mm1k(lambda_rate, mu_rate, K, events, seed)
    k = np.arange(K + 1, dtype=float)
    surv = 1.0 - np.concatenate(([0.0], np.cumsum(pmf)[:-1]))
    return MM1Result(rho, analytic, m, se, pmf, k, np.clip(surv, 0.0, 1.0))


def binned_queue(arrivals, mu_per_bin: float, K: int, seed: int = 0, q0: float = 0.0) -> np.ndarray:
    """Slotted queue ``q[t+1] = clip(q[t] + a[t] - s[t], 0, K)`` with Poisson service.

    ``arrivals`` may be ``(T,)`` or ``(T, n)``; the returned occupancy has the
    same shape and holds the queue after each bin.
    """
    a = np.asarray(arrivals, dtype=float)
    rng = stream(seed, STREAM_QUEUE, 1)
    s = rng.poisson(mu_per_bin, a.shape)
    out = np.empty_like(a)
    q = np.full(a.shape[1:], float(q0))
    for t in range(a.shape[0]):
        q = np.clip(q + a[t] - s[t], 0.0, K)
        out[t] = q
    return out


@dataclass(frozen=True)
class CalibrationResult:
    gain_I: float
    per_node_scale: np.ndarray
    reference_means: np.ndarray
    nos_means: np.ndarray
    iterations: int


def _isolated(n: int) -> CouplingGraph:
    return CouplingGraph(np.zeros((n, n)), np.zeros((n, n), dtype=np.int64))


def _nos_mean_v(p: NodeParams, counts: np.ndarray, gain: float, threshold: ThresholdSpec, reset: ResetSpec, seed: int) -> np.ndarray:
    T, n = counts.shape
    cfg = SimConfig(graph=_isolated(n), params=p, threshold=threshold, reset=reset, horizon=T,
                    record=frozenset({"spikes", "states"}), init_noise=0.0, exogenous=gain * counts)
    return run_simulation(cfg, seed).v_trace.mean(axis=0)


def nos_response(p: NodeParams, counts, gain: float, threshold: ThresholdSpec | None = None,
                 reset: ResetSpec | None = None, seed: int = 0) -> np.ndarray:
    """Subthreshold trace ``v`` of independent NOS units driven by ``gain * counts``."""
    c = np.asarray(counts, dtype=float)
    c2 = c[:, None] if c.ndim == 1 else c
    T, n = c2.shape
    cfg = SimConfig(graph=_isolated(n), params=p, threshold=threshold or ThresholdSpec(),
                    reset=reset or ResetSpec(), horizon=T, record=frozenset({"spikes", "states"}),
                    init_noise=0.0, exogenous=gain * c2)
    v = run_simulation(cfg, seed).v_trace
    return v[:, 0] if c.ndim == 1 else v


def calibrate_light_load(
    p: NodeParams,
    arrival_stats,
    mu_rate: float,
    K: int | None = None,
    dt: float = 0.005,
    v_target: float = 0.06,
    horizon: int = 20_000,
    seed: int = 0,
    threshold: ThresholdSpec | None = None,
    reset: ResetSpec | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> CalibrationResult:
    """Fit a global input gain and per-node output scales from arrivals alone.

    ``arrival_stats`` is either per-node arrival rates (1/s), from which
    Poisson counts are synthesised, or a ``(T, n)`` array of observed counts
    per bin. The gain is solved by secant iteration so that the mean NOS
    state across nodes equals ``v_target``; each node's scale then maps its
    mean state onto the M/M/1 (M/M/1/K when ``K`` is given) mean. The same
    random numbers are used at every gain, so the result is deterministic.
    """
    if mu_rate <= 0:
        raise ValueError("mu_rate must be > 0")
    threshold = threshold or ThresholdSpec()
    reset = reset or ResetSpec()
    stats = np.asarray(arrival_stats, dtype=float)
    if stats.ndim == 1:
        lam = stats
        if np.any(lam <= 0):
            raise ValueError("every node needs a positive arrival rate")
        counts = stream(seed, STREAM_QUEUE, 2).poisson(lam * dt, (horizon, lam.size)).astype(float)
    elif stats.ndim == 2:
        counts = stats
        lam = counts.mean(axis=0) / dt
        if np.any(lam <= 0):
            raise ValueError("every node needs at least one arrival")
    else:
        raise ValueError("arrival_stats must be rates (n,) or counts (T, n)")
    rho = lam / mu_rate
    if np.any(rho >= 0.9):
        raise ValueError("light-load calibration needs rho < 0.9 at every node")
    ref = np.array([mm1_mean(r) if K is None else mm1k_mean(r, K) for r in rho])

    def h(gain):
        return float(_nos_mean_v(p, counts, gain, threshold, reset, seed).mean() - v_target)

    if h(0.0) >= 0:
        raise ValueError("zero-input mean already at or above v_target")
    # secant with a kept bracket; the mean is monotone but only piecewise smooth
    lo, hlo = 0.0, h(0.0)
    x1 = v_target / max(np.mean(lam * dt), 1e-12) * max(-p.L, 1e-3)
    h1 = h(x1)
    while h1 < 0:
        lo, hlo = x1, h1
        x1 *= 2.0
        h1 = h(x1)
        if x1 > 1e6:
            raise RuntimeError("calibration gain diverged")
    hi, hhi = x1, h1
    x0, h0 = lo, hlo
    gain = x1
    for it in range(1, max_iter + 1):
        if h1 == h0:
            x2 = 0.5 * (lo + hi)
        else:
            x2 = x1 - h1 * (x1 - x0) / (h1 - h0)
            if not lo < x2 < hi:
                x2 = 0.5 * (lo + hi)
        h2 = h(x2)
        if h2 < 0:
            lo, hlo = x2, h2
        else:
            hi, hhi = x2, h2
        x0, h0, x1, h1 = x1, h1, x2, h2
        gain = x2
        if abs(h2) <= tol * v_target or hi - lo <= 1e-12 * max(hi, 1.0):
            break
    else:
        raise RuntimeError("calibration did not converge in max_iter secant steps")
    means = _nos_mean_v(p, counts, gain, threshold, reset, seed)
    if np.any(means <= 0):
        raise RuntimeError("a node has zero mean state; scale undefined")
    return CalibrationResult(float(gain), ref / means, ref, means, it)


# closed loop


@dataclass(frozen=True)
class MarkingSpec:
    """Shared logistic ``p = 1 / (1 + exp(-slope * (x - midpoint)))``."""

    slope: float = 20.0
    midpoint: float = 0.3

    def __call__(self, x):
        return 0.5 * (1.0 + np.tanh(0.5 * self.slope * (np.asarray(x, dtype=float) - self.midpoint)))


@dataclass(frozen=True)
class ClosedLoopSpec:
    """Plant and controller settings.

    The raw and low-passed queue states are ``q / q_ref``. The NOS unit
    observes the same ``q / q_ref`` as input ``I = nos_gain * q / q_ref`` and
    uses the continuous pullback reset, integrated with ``substeps`` Euler
    steps per bin. By default ``nos_gain`` makes the NOS equilibrium equal
    the marking midpoint when ``q / q_ref`` sits at the midpoint, so all
    three controllers share one static operating point.
    """

    mu_rate: float = 2000.0
    dt: float = 0.005
    K: int = 500
    q_ref: float = 40.0
    lp_pole: float = 0.05
    marking: MarkingSpec = field(default_factory=MarkingSpec)
    params: NodeParams = field(default_factory=lambda: NodeParams(gamma=0.0))
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    reset: ResetSpec = field(default_factory=lambda: ResetSpec(kind="continuous-pullback"))
    substeps: int = 4
    nos_gain: float | None = None

    def __post_init__(self):
        if not 0 < self.lp_pole <= 1:
            raise ValueError("lp_pole must be in (0, 1]")
        if self.q_ref <= 0 or self.K < 1:
            raise ValueError("q_ref and K must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def mu_per_bin(self) -> float:
        return self.mu_rate * self.dt

    def resolved_nos_gain(self) -> float:
        if self.nos_gain is not None:
            return self.nos_gain
        m = self.marking.midpoint
        if m <= 0:
            raise ValueError("default nos_gain needs a positive marking midpoint")
        return float(drive_on_branch(m, self.params)) / m


def step_load(horizon: int, low: float, high: float, at: int) -> np.ndarray:
    """Offered load in arrivals per bin with one step at bin ``at``."""
    x = np.full(horizon, float(low))
    x[at:] = high
    return x


def burst_load(horizon: int, base: float, peak: float, period: int, width: int, start: int = 0) -> np.ndarray:
    x = np.full(horizon, float(base))
    for s in range(start, horizon, period):
        x[s : s + width] = peak
    return x


def offered_arrivals(load_trace, seed: int) -> np.ndarray:
    """Poisson arrivals for a load trace; identical for every controller given ``seed``."""
    lam = np.asarray(load_trace, dtype=float)
    return stream(seed, STREAM_QUEUE, 3).poisson(lam).astype(np.int64)


def trace_hash(x) -> str:
    return hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()


@dataclass(frozen=True)
class ClosedLoopResult:
    controller: str
    p_trace: np.ndarray
    queue_trace: np.ndarray
    state_trace: np.ndarray
    arrivals_hash: str
    metrics: dict


def _settling(q, at: int, window: int, band: float, floor: float, hold: int = 100) -> tuple[int, float, float]:
    """Bins after ``at`` until the rolling mean enters the band around its
    final level and stays there for ``hold`` bins, plus the overshoot
    relative to that level. The band is never tighter than twice the
    steady-state spread of the rolling mean."""
    post = np.asarray(q[at:], dtype=float)
    if post.size < 2 * window + hold:
        return 0, 0.0, float(np.mean(post)) if post.size else 0.0
    rm = np.convolve(post, np.ones(window) / window, mode="valid")
    tail = rm[-max(window, rm.size // 5) :]
    final = float(np.mean(tail))
    tol = max(band * abs(final), 2.0 * float(np.std(tail)), floor)
    inside = np.abs(rm - final) <= tol
    # run length of consecutive in-band bins, counted backwards
    run = np.zeros(rm.size + 1, dtype=np.int64)
    for k in range(rm.size - 1, -1, -1):
        run[k] = run[k + 1] + 1 if inside[k] else 0
    ok = np.flatnonzero((run[:-1] >= hold) | (run[:-1] == rm.size - np.arange(rm.size)))
    settle = int(ok[0]) if ok.size else int(rm.size)
    over = max(0.0, float(rm.max() - final)) / max(abs(final), floor)
    return settle, over, final


CONTROLLERS = ("nos-state", "raw-queue", "lp-queue")


def closed_loop_run(
    controller: str,
    load_trace,
    spec: ClosedLoopSpec | None = None,
    seed: int = 0,
    step_at: int | None = None,
    settle_window: int = 20,
    settle_band: float = 0.1,
) -> ClosedLoopResult:
    """Run one marking controller on a load trace.

    Each bin: the controller state gives ``p``; arrivals are thinned with
    probability ``p``; the queue serves a Poisson number of packets; the
    state is updated from what was observed in the bin. Offered arrivals,
    thinning draws and service draws depend only on ``seed``.
    """
    if controller not in CONTROLLERS:
        raise ValueError(f"unknown controller {controller!r}")
    spec = spec or ClosedLoopSpec()
    load = np.asarray(load_trace, dtype=float)
    H = load.size
    arr = offered_arrivals(load, seed)
    rng = stream(seed, STREAM_QUEUE, 4)
    service = rng.poisson(spec.mu_per_bin, H)
    thin_u = stream(seed, STREAM_QUEUE, 5)
    P = spec.params
    rs = spec.reset
    gain = spec.resolved_nos_gain()
    decay = math.exp(-rs.r_reset)
    continuous = rs.kind == "continuous-pullback"
    h = 1.0 / spec.substeps
    vth_rng = stream(seed, STREAM_QUEUE, 6)

    q = 0.0
    lp = 0.0
    v, u = P.v_rest, 0.0
    ps = np.empty(H)
    qs = np.empty(H)
    xs = np.empty(H)
    for t in range(H):
        if controller == "nos-state":
            x = v
        elif controller == "raw-queue":
            x = q / spec.q_ref
        else:
            x = lp / spec.q_ref
        p = float(spec.marking(x))
        n_arr = int(arr[t])
        admitted = n_arr - int(np.count_nonzero(thin_u.random(n_arr) < p)) if n_arr else 0
        q = min(max(q + admitted - service[t], 0.0), float(spec.K))
        lp += spec.lp_pole * (q - lp)
        I = gain * q / spec.q_ref
        vth = float(spec.threshold.sample(vth_rng, 1)[0])
        for _ in range(spec.substeps):
            dv = f_sat(v, P.alpha, P.kappa) + P.beta * v + P.gamma - u + I - P.lam * v - P.chi * (v - P.v_rest)
            if continuous:
                dv += float(pullback_term(v, vth, rs))
            du = P.a * (P.b * v - u) - P.mu * u
            v = min(max(v + h * dv, P.v_rest), 1.5)
            u = min(max(u + h * du, -2.0), 2.0)
        if not continuous and v >= vth:
            v = rs.c + (v - rs.c) * decay
            u = min(u + rs.d, 2.0)
        ps[t], qs[t], xs[t] = p, q, x

    at = 0 if step_at is None else int(step_at)
    settle, over, final = _settling(qs, at, settle_window, settle_band, floor=1.0)
    tail = ps[at + settle :] if at + settle < H - 1 else ps[-2:]
    metrics = {
        "settling_bins": settle,
        "overshoot": over,
        "mark_jitter": float(np.std(np.diff(tail))),
        "mean_queue": float(qs[at:].mean()),
        "max_queue": float(qs[at:].max()),
        "final_queue": final,
    }
    return ClosedLoopResult(controller, ps, qs, xs, trace_hash(arr), metrics)


def ensemble_response(controller: str, load_trace, spec: ClosedLoopSpec | None = None, seeds=range(20),
                      step_at: int = 0, window: int = 5, band: float = 0.1, hold: int = 50) -> dict:
    """Seed-averaged queue and marking traces with metrics computed on the
    averages, so transients are not masked by Poisson noise."""
    runs = [closed_loop_run(controller, load_trace, spec, s, step_at) for s in seeds]
    Q = np.mean([r.queue_trace for r in runs], axis=0)
    P = np.mean([r.p_trace for r in runs], axis=0)
    settle, over, final = _settling(Q, step_at, window, band, floor=0.5, hold=hold)
    return {
        "queue": Q,
        "p": P,
        "settling_bins": settle,
        "overshoot": over,
        "max_queue": float(Q[step_at:].max()),
        "mark_jitter": float(np.mean([r.metrics["mark_jitter"] for r in runs])),
        "final_queue": final,
    }


def compare_controllers(load_trace, spec: ClosedLoopSpec | None = None, seed: int = 0, step_at: int | None = None) -> dict:
    out = {c: closed_loop_run(c, load_trace, spec, seed, step_at) for c in CONTROLLERS}
    hashes = {r.arrivals_hash for r in out.values()}
    if len(hashes) != 1:
        raise RuntimeError("controllers saw different load traces")
    return out


# open loop


def open_loop_means(p: NodeParams, calib: CalibrationResult, lambdas, mu_rate: float, K: int,
                    dt: float = 0.005, horizon: int = 20_000, seed: int = 1,
                    threshold: ThresholdSpec | None = None, reset: ResetSpec | None = None) -> list:
    """Mean occupancy versus arrival rate for M/M/1, slotted M/M/1/K and a
    calibrated NOS unit fed the same arrivals (node 0's scale)."""
    rows = []
    lam = np.asarray(lambdas, dtype=float)
    counts = stream(seed, STREAM_QUEUE, 7).poisson(lam * dt, (horizon, lam.size)).astype(float)
    qk = binned_queue(counts, mu_rate * dt, K, seed)
    v = nos_response(p, counts, calib.gain_I, threshold, reset, seed)
    scale = float(calib.per_node_scale[0])
    for j, l in enumerate(lam):
        rho = l / mu_rate
        rows.append({
            "lambda": float(l),
            "rho": float(rho),
            "mm1_analytic": mm1_mean(rho) if rho < 1 else math.nan,
            "mm1k_sim": float(qk[:, j].mean()),
            "nos": scale * float(v[:, j].mean()),
        })
    return rows


def burst_tail_comparison(p: NodeParams, calib: CalibrationResult, mmpp_counts, mu_rate: float, K: int,
                          dt: float = 0.005, seed: int = 1,
                          threshold: ThresholdSpec | None = None, reset: ResetSpec | None = None) -> dict:
    """Occupancy CCDFs of the slotted M/M/1/K queue and the calibrated NOS
    unit under one shared arrival sequence."""
    a = np.asarray(mmpp_counts, dtype=float)
    q = binned_queue(a, mu_rate * dt, K, seed)
    v = nos_response(p, a, calib.gain_I, threshold, reset, seed)
    occ = float(calib.per_node_scale[0]) * v
    return {"queue": ccdf(q), "nos": ccdf(occ)}
