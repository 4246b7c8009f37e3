"""Spike-train statistics: rates, ISI CV with bootstrap intervals, avalanches with
power-law / log-normal tail fits, and a Kuramoto-style synchrony index."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .rng import STREAM_MISC, stream


@dataclass(frozen=True)
class SpikeStats:
    mean_rate: float
    isi_cv: float
    rate_ci: tuple
    cv_ci: tuple
    per_node_rate: np.ndarray
    per_node_cv: np.ndarray
    n_cv: int


def isi_cv(spike_bins) -> float:
    s = np.asarray(spike_bins, dtype=float)
    if s.size < 2:
        return math.nan
    isi = np.diff(s)
    m = isi.mean()
    return float(isi.std() / m) if m > 0 else math.nan


def _percentile_ci(samples, level=0.95):
    lo = 100 * (1 - level) / 2
    return float(np.nanpercentile(samples, lo)), float(np.nanpercentile(samples, 100 - lo))


def spike_statistics(spikes, horizon: int, dt: float = 0.005, B: int = 500, seed: int = 0, level: float = 0.95) -> SpikeStats:
    """Population mean rate (1/s) and mean ISI CV, with node-bootstrap CIs."""
    if B < 1:
        raise ValueError("B must be >= 1")
    rates = np.array([len(s) / (horizon * dt) for s in spikes], dtype=float)
    cvs = np.array([isi_cv(s) for s in spikes])
    ok = np.isfinite(cvs)
    rng = stream(seed, STREAM_MISC, 1)
    n = len(rates)
    idx = rng.integers(0, n, (B, n))
    boot_rate = rates[idx].mean(axis=1)
    cv_ok = cvs[ok]
    if cv_ok.size:
        jdx = rng.integers(0, cv_ok.size, (B, cv_ok.size))
        boot_cv = cv_ok[jdx].mean(axis=1)
        cv, cv_ci = float(cv_ok.mean()), _percentile_ci(boot_cv, level)
    else:
        cv, cv_ci = math.nan, (math.nan, math.nan)
    return SpikeStats(float(rates.mean()), cv, _percentile_ci(boot_rate, level), cv_ci, rates, cvs, int(ok.sum()))


def avalanche_sizes(population_counts) -> np.ndarray:
    """Sizes of maximal runs of nonzero bins."""
    c = np.asarray(population_counts)
    if np.any(c < 0):
        raise ValueError("counts must be >= 0")
    nz = np.concatenate(([False], c > 0, [False]))
    edges = np.diff(nz.astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    cs = np.concatenate(([0], np.cumsum(c)))
    return cs[ends] - cs[starts]


@dataclass(frozen=True)
class TailFitReport:
    x_min: float
    n_tail: int
    alpha_hat: float
    mu_hat: float
    sigma_hat: float
    ks_pl: float
    ks_ln: float
    ll_pl: float
    ll_ln: float
    aic_pl: float
    aic_ln: float
    preferred: str


def powerlaw_mle(x, x_min: float) -> float:
    x = np.asarray(x, dtype=float)
    x = x[x >= x_min]
    s = np.sum(np.log(x / x_min))
    if x.size < 1 or s <= 0:
        return math.nan
    return 1.0 + x.size / s


def powerlaw_loglik(x, x_min: float, alpha: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.size * math.log((alpha - 1) / x_min) - alpha * np.sum(np.log(x / x_min)))


def lognormal_loglik(x, x_min: float, mu: float, sigma: float) -> float:
    """Log-likelihood of a log-normal truncated below at ``x_min``."""
    x = np.asarray(x, dtype=float)
    lx = np.log(x)
    ll = -lx - math.log(sigma * math.sqrt(2 * math.pi)) - (lx - mu) ** 2 / (2 * sigma**2)
    tail = 1.0 - ndtr((math.log(x_min) - mu) / sigma)
    return float(np.sum(ll) - x.size * math.log(max(tail, 1e-300)))


def _ks(x_sorted, cdf) -> float:
    vals, counts = np.unique(x_sorted, return_counts=True)
    ecdf = np.cumsum(counts) / x_sorted.size
    return float(np.max(np.abs(ecdf - cdf(vals))))


def fit_tail(sizes, x_min: float | None = None) -> TailFitReport | None:
    """Power-law vs log-normal above ``x_min``; ``x_min`` minimises the
    power-law KS distance over the observed sizes when not given."""
    x = np.sort(np.asarray(sizes, dtype=float))
    x = x[x > 0]
    candidates = np.unique(x) if x_min is None else np.array([float(x_min)])
    best = None
    for xm in candidates:
        tail = x[x >= xm]
        if tail.size < 2:
            continue
        a = powerlaw_mle(tail, xm)
        if not math.isfinite(a):
            continue
        ks = _ks(tail, lambda v: 1.0 - (v / xm) ** (1.0 - a))
        if best is None or ks < best[0]:
            best = (ks, xm, tail, a)
    if best is None:
        return None
    ks_pl, xm, tail, a = best
    lt = np.log(tail)
    mu, sig = float(lt.mean()), float(lt.std())
    ll_pl = powerlaw_loglik(tail, xm, a)
    if sig > 0:
        ll_ln = lognormal_loglik(tail, xm, mu, sig)
        z0 = ndtr((math.log(xm) - mu) / sig)
        ks_ln = _ks(tail, lambda v: (ndtr((np.log(v) - mu) / sig) - z0) / max(1 - z0, 1e-300))
    else:
        ll_ln, ks_ln = -math.inf, math.nan
    aic_pl = 2 * 1 - 2 * ll_pl
    aic_ln = 2 * 2 - 2 * ll_ln
    return TailFitReport(
        x_min=float(xm),
        n_tail=int(tail.size),
        alpha_hat=a,
        mu_hat=mu,
        sigma_hat=sig,
        ks_pl=ks_pl,
        ks_ln=ks_ln,
        ll_pl=ll_pl,
        ll_ln=ll_ln,
        aic_pl=aic_pl,
        aic_ln=aic_ln,
        preferred="power-law" if aic_pl <= aic_ln else "log-normal",
    )


@dataclass(frozen=True)
class AvalancheAnalysis:
    sizes: np.ndarray
    fit: TailFitReport | None


def avalanche_analysis(population_counts, dt: float = 0.005, x_min: float | None = None) -> AvalancheAnalysis:
    sizes = avalanche_sizes(population_counts)
    return AvalancheAnalysis(sizes, fit_tail(sizes, x_min))


def ccdf(sizes):
    """``(x, P(S >= x))`` over unique sizes."""
    x = np.sort(np.asarray(sizes, dtype=float))
    vals, counts = np.unique(x, return_counts=True)
    surv = 1.0 - (np.cumsum(counts) - counts) / x.size
    return vals, surv


@dataclass(frozen=True)
class Synchrony:
    R_trace: np.ndarray
    R_mean: float
    n_included: int
    n_excluded: int


def synchrony_order(spikes, horizon: int) -> Synchrony | None:
    """Order parameter from phases interpolated linearly between spikes.

    A node contributes only between its first and last spike. ``R_trace`` is
    NaN in bins with fewer than two contributing nodes.
    """
    re = np.zeros(horizon)
    im = np.zeros(horizon)
    cnt = np.zeros(horizon)
    used = 0
    t = np.arange(horizon)
    for s in spikes:
        s = np.asarray(s, dtype=np.int64)
        if s.size < 2:
            continue
        used += 1
        lo, hi = int(s[0]), int(s[-1])
        tt = t[lo : hi + 1]
        k = np.searchsorted(s, tt, side="right") - 1
        k = np.minimum(k, s.size - 2)
        phi = 2 * np.pi * (tt - s[k]) / (s[k + 1] - s[k])
        re[lo : hi + 1] += np.cos(phi)
        im[lo : hi + 1] += np.sin(phi)
        cnt[lo : hi + 1] += 1
    if used == 0:
        return None
    R = np.full(horizon, np.nan)
    m = cnt >= 2
    R[m] = np.hypot(re[m], im[m]) / cnt[m]
    Rm = float(np.mean(R[m])) if m.any() else math.nan
    return Synchrony(R, Rm, used, len(spikes) - used)
