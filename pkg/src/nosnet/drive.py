"""Exogenous drive: compound-Poisson shot noise, MMPP bursts and replayed traces.

Rates and time constants are in seconds; traces are returned per bin of
width ``dt``. Shot-noise events are placed at continuous times inside each
bin and the filtered process is read at bin ends, so binned traces carry the
exact stationary statistics of the continuous process. A warm-up of
``20 tau_s`` is simulated before bin 0 so traces start in steady state.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.signal import lfilter

from .rng import STREAM_DRIVE, STREAM_MMPP, stream


@dataclass(frozen=True)
class Amplitude:
    kind: Literal["constant", "uniform", "exponential"] = "constant"
    value: float = 0.6
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "exponential"):
            raise ValueError(f"unsupported amplitude distribution {self.kind!r}")
        if self.kind == "uniform" and self.hi < self.lo:
            raise ValueError("uniform amplitude needs lo <= hi")
        if self.kind == "exponential" and self.value <= 0:
            raise ValueError("exponential amplitude mean must be > 0")

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        return self.value

    @property
    def second_moment(self) -> float:
        if self.kind == "constant":
            return self.value**2
        if self.kind == "uniform":
            return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0
        return 2.0 * self.value**2

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.value)
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        return rng.exponential(self.value, size)


@dataclass(frozen=True)
class DriveSpec:
    """One node's arrival process.

    ``shot-noise`` uses ``rate`` (1/s), ``amplitude`` and ``tau_s`` (s).
    ``mmpp`` uses the dwell rates ``on_rate``/``off_rate`` (1/s, leaving OFF
    and ON respectively) and the per-state intensities (arrivals/s).
    ``trace`` replays a ``bin,node,count`` CSV.
    """

    kind: Literal["shot-noise", "mmpp", "trace", "none"] = "shot-noise"
    rate: float = 50.0
    amplitude: Amplitude = field(default_factory=Amplitude)
    tau_s: float = 0.010
    on_rate: float = 0.5
    off_rate: float = 2.0
    intensity_on: float = 40.0
    intensity_off: float = 5.0
    trace_file: str | None = None
    node: int = 0
    I0: float = 0.10
    gain: float = 1.0
    seed_stream: int = 0

    def __post_init__(self):
        if self.kind not in ("shot-noise", "mmpp", "trace", "none"):
            raise ValueError(f"unknown drive kind {self.kind!r}")
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if self.tau_s < 0:
            raise ValueError("tau_s must be >= 0")
        if min(self.intensity_on, self.intensity_off) < 0:
            raise ValueError("MMPP intensities must be >= 0")


def amplitude_scale_warning(spec: DriveSpec, v_th_base: float, v_rest: float = 0.0) -> str | None:
    """Warn when ``A tau_s / m`` falls outside ``[1e-3, 0.2]``; returns the message."""
    m = v_th_base - v_rest
    if spec.kind != "shot-noise" or m <= 0:
        return None
    x = spec.amplitude.mean * spec.tau_s / m
    if 1e-3 <= x <= 0.2:
        return None
    msg = f"shot amplitude scale A*tau_s/m = {x:.3g} outside [1e-3, 0.2]"
    warnings.warn(msg, stacklevel=2)
    return msg


def shot_kernel_trace(event_times, amplitudes, tau_s: float, horizon: int, dt: float) -> np.ndarray:
    """Deterministic filtered trace for explicit event times (seconds).

    The value in bin ``k`` is the process at time ``k*dt``; an event exactly at
    ``k*dt`` is included.
    """
    t = np.asarray(event_times, dtype=float)
    A = np.broadcast_to(np.asarray(amplitudes, dtype=float), t.shape)
    grid = np.arange(horizon) * dt
    out = np.zeros(horizon)
    if t.size == 0:
        return out
    if tau_s == 0:
        k = np.ceil(t / dt - 1e-12).astype(int)
        ok = (k >= 0) & (k < horizon)
        np.add.at(out, k[ok], A[ok])
        return out
    lag = grid[None, :] - t[:, None]
    w = np.where(lag >= -1e-12, np.exp(-np.clip(lag, 0, None) / tau_s), 0.0)
    return A @ w


def _shot_noise(spec: DriveSpec, horizon: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    warm = 0 if spec.tau_s == 0 else int(math.ceil(20.0 * spec.tau_s / dt))
    nb = horizon + warm
    counts = rng.poisson(spec.rate * dt, nb)
    if spec.tau_s == 0:
        x = np.zeros(nb)
        idx = np.repeat(np.arange(nb), counts)
        np.add.at(x, idx, spec.amplitude.draw(rng, idx.size))
        return x[warm:]
    total = int(counts.sum())
    idx = np.repeat(np.arange(nb), counts)
    # time until the end of the bin the event lands in
    back = rng.uniform(0.0, dt, total)
    amps = spec.amplitude.draw(rng, total)
    inj = np.zeros(nb)
    np.add.at(inj, idx, amps * np.exp(-back / spec.tau_s))
    decay = math.exp(-dt / spec.tau_s)
    x = lfilter([1.0], [1.0, -decay], inj)
    return x[warm:]


@dataclass(frozen=True)
class MMPPSample:
    counts: np.ndarray
    on: np.ndarray


def _mmpp_probs(spec: DriveSpec, dt: float) -> tuple[float, float]:
    if spec.on_rate <= 0 or spec.off_rate <= 0:
        raise ValueError("MMPP dwell rates must be > 0")
    return -math.expm1(-spec.on_rate * dt), -math.expm1(-spec.off_rate * dt)


def mmpp_stationary_mean(spec: DriveSpec, dt: float) -> float:
    """Long-run mean count per bin of the binned chain."""
    p01, p10 = _mmpp_probs(spec, dt)
    pi_on = p01 / (p01 + p10)
    return (pi_on * spec.intensity_on + (1 - pi_on) * spec.intensity_off) * dt


def mmpp_states(spec: DriveSpec, horizon: int, dt: float, seed: int) -> np.ndarray:
    """ON/OFF epochs; depends only on dwell rates, ``seed`` and ``seed_stream``."""
    p01, p10 = _mmpp_probs(spec, dt)
    rng = stream(seed, STREAM_MMPP, spec.seed_stream, 0)
    u = rng.random(horizon)
    pi_on = p01 / (p01 + p10)
    on = np.empty(horizon, dtype=bool)
    state = bool(rng.random() < pi_on)
    for k in range(horizon):
        if state:
            state = not (u[k] < p10)
        else:
            state = bool(u[k] < p01)
        on[k] = state
    return on


def sample_mmpp(spec: DriveSpec, horizon: int, seed: int, dt: float = 0.005, node: int = 0) -> MMPPSample:
    """Markov-modulated Poisson counts per bin.

    The ON/OFF path is shared by every node using the same ``(seed,
    seed_stream)``; the Poisson counts are drawn per ``node``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    on = mmpp_states(spec, horizon, dt, seed)
    lam = np.where(on, spec.intensity_on, spec.intensity_off) * dt
    rng = stream(seed, STREAM_MMPP, spec.seed_stream, 1 + node)
    return MMPPSample(rng.poisson(lam).astype(float), on)


def read_trace(path, node: int, horizon: int) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"trace file not found: {p}")
    out = np.zeros(horizon)
    with p.open(newline="") as fh:
        for row in csv.DictReader(fh):
            k, j = int(row["bin"]), int(row["node"])
            if j == node and 0 <= k < horizon:
                out[k] += float(row["count"])
    return out


def sample_drive(spec: DriveSpec, horizon: int, dt: float = 0.005, seed: int = 0, node: int | None = None) -> np.ndarray:
    """Raw arrival signal eta per bin (before ``I0 + gain * eta``)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    node = spec.node if node is None else node
    if spec.kind == "none":
        return np.zeros(horizon)
    if spec.kind == "trace":
        if spec.trace_file is None:
            raise ValueError("trace drive needs trace_file")
        return read_trace(spec.trace_file, node, horizon)
    if spec.kind == "mmpp":
        return sample_mmpp(spec, horizon, seed, dt, node).counts
    rng = stream(seed, STREAM_DRIVE, spec.seed_stream, node)
    return _shot_noise(spec, horizon, dt, rng)


def exogenous_input(spec: DriveSpec, eta) -> np.ndarray:
    return spec.I0 + spec.gain * np.asarray(eta, dtype=float)


@dataclass(frozen=True)
class ShotStats:
    mean: float
    variance: float
    rate: float
    second_moment: float
    tau_s: float

    def autocov(self, tau):
        tau = np.abs(np.asarray(tau, dtype=float))
        if self.tau_s == 0:
            return np.where(tau == 0, self.variance, 0.0)
        return self.variance * np.exp(-tau / self.tau_s)

    def psd(self, omega):
        w = np.asarray(omega, dtype=float)
        return 2.0 * self.rate * self.second_moment * self.tau_s / (1.0 + (w * self.tau_s) ** 2)


def analytic_shot_stats(spec: DriveSpec) -> ShotStats:
    if spec.kind != "shot-noise":
        raise ValueError("closed-form statistics exist only for shot noise")
    r, EA, EA2, ts = spec.rate, spec.amplitude.mean, spec.amplitude.second_moment, spec.tau_s
    return ShotStats(r * EA * ts, r * EA2 * ts / 2.0, r, EA2, ts)
