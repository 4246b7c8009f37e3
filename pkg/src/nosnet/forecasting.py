"""Label-free next-step queue forecasters, residual event detection and
forecast/detection metrics.

Forecasters see arrivals only. Each keeps its own running estimate of the
queue (it never observes the true occupancy), so the whole pipeline is free
of queue labels. The NOS forecaster is one NOS unit per node with an
arrival-only light-load calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .drive import DriveSpec, sample_mmpp
from .graph import CouplingGraph, barabasi_albert, chain, star
from .model import NodeParams, ResetSpec, ThresholdSpec
from .queueing import CalibrationResult, binned_queue, calibrate_light_load, nos_response
from .rng import STREAM_GRAPH, stream

METHODS = ("fluid", "moving-avg", "tgnn-smooth", "lif-leaky", "nos-calibrated")


def one_hop_operator(graph: CouplingGraph) -> np.ndarray:
    """Row-normalised ``I + A`` over the undirected support of ``W``."""
    A = ((graph.W > 0) | (graph.W.T > 0)).astype(float)
    A = A + np.eye(graph.n)
    return A / A.sum(axis=1, keepdims=True)


def zero_shot_forecast(method: str, window, state, mu_rate: float, dt: float, graph: CouplingGraph | None = None,
                       leak: float = 0.1, calib: CalibrationResult | None = None):
    """One next-step prediction from an arrival window.

    ``window`` holds the last ``W`` bins of arrivals, shape ``(W,)`` or
    ``(W, n)``, newest last. ``state`` is the forecaster's own previous
    estimate; for ``nos-calibrated`` it is the NOS state ``v`` already
    advanced by the newest bin, and the prediction is ``scale * v``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    a = np.asarray(window, dtype=float)
    if a.shape[0] < 1:
        raise ValueError("window must hold at least one bin")
    q = np.asarray(state, dtype=float)
    drain = mu_rate * dt
    if method == "fluid":
        return np.maximum(q + a[-1] - drain, 0.0)
    if method == "moving-avg":
        return np.maximum(q + a.mean(axis=0) - drain, 0.0)
    if method == "tgnn-smooth":
        if graph is None:
            raise ValueError("tgnn-smooth needs a graph")
        return np.maximum(q + one_hop_operator(graph) @ a[-1] - drain, 0.0)
    if method == "lif-leaky":
        return (1.0 - leak) * q + a[-1]
    if calib is None:
        raise ValueError("nos-calibrated needs a CalibrationResult")
    return np.asarray(calib.per_node_scale) * q


@dataclass(frozen=True)
class ForecastSetup:
    mu_rate: float = 200.0
    dt: float = 0.005
    window: int = 16
    leak: float = 0.1
    params: NodeParams = field(default_factory=lambda: NodeParams(gamma=0.0))
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    reset: ResetSpec = field(default_factory=ResetSpec)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 <= self.leak <= 1:
            raise ValueError("leak must be in [0, 1]")


def run_forecasters(arrivals, setup: ForecastSetup, graph: CouplingGraph | None = None, train_end: int | None = None,
                    methods=METHODS, seed: int = 0) -> dict:
    """Open-loop predictions for every bin.

    ``pred[t]`` forecasts the queue after bin ``t`` from arrivals up to and
    including bin ``t``. The NOS calibration uses arrivals before
    ``train_end`` only.
    """
    a = np.asarray(arrivals, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    T, n = a.shape
    drain = setup.mu_rate * setup.dt
    out = {}
    W = setup.window
    for m in methods:
        if m == "nos-calibrated":
            te = T if train_end is None else int(train_end)
            calib = calibrate_light_load(setup.params, a[:te], setup.mu_rate, dt=setup.dt, seed=seed,
                                         threshold=setup.threshold, reset=setup.reset)
            v = nos_response(setup.params, a, calib.gain_I, setup.threshold, setup.reset, seed)
            v = v[:, None] if v.ndim == 1 else v
            out[m] = v * calib.per_node_scale
            out["_calibration"] = calib
            continue
        if m == "moving-avg":
            cs = np.cumsum(np.vstack([np.zeros((1, n)), a]), axis=0)
            lo = np.maximum(np.arange(T) + 1 - W, 0)
            drive = (cs[1:] - cs[lo]) / (np.arange(T) + 1 - lo)[:, None]
        elif m == "tgnn-smooth":
            if graph is None:
                raise ValueError("tgnn-smooth needs a graph")
            drive = a @ one_hop_operator(graph).T
        else:
            drive = a
        P = np.empty((T, n))
        q = np.zeros(n)
        for t in range(T):
            if m == "lif-leaky":
                q = (1.0 - setup.leak) * q + drive[t]
            else:
                q = np.maximum(q + drive[t] - drain, 0.0)
            P[t] = q
        out[m] = P
    return out


# metrics


def auroc(scores, labels) -> float:
    """Mann-Whitney rank statistic with average ranks for ties."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    npos = int(y.sum())
    nneg = y.size - npos
    if npos == 0 or nneg == 0:
        return math.nan
    r = rankdata(s)
    return float((r[y].sum() - npos * (npos + 1) / 2.0) / (npos * nneg))


def auprc(scores, labels) -> float:
    """Average precision: precision integrated over recall steps, with tied
    scores entering as one step."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    npos = int(y.sum())
    if npos == 0:
        return math.nan
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    prec = tp / (tp + fp)
    rec = tp / npos
    return float(np.sum(np.diff(np.r_[0.0, rec]) * prec))


def burst_labels(truth, kind: str = "onset", top: float = 0.1) -> np.ndarray:
    """Top-``top`` bins of a truth series.

    ``onset`` ranks the one-step growth ``q[t] - q[t-1]`` (queue build-ups);
    ``level`` ranks the occupancy itself.
    """
    q = np.asarray(truth, dtype=float)
    if kind == "onset":
        x = np.diff(q, prepend=q[0])
    elif kind == "level":
        x = q
    else:
        raise ValueError(f"unknown label kind {kind!r}")
    cut = np.quantile(x, 1.0 - top)
    y = x >= cut
    # a constant series labels everything; treat as no positives
    return y if y.sum() < y.size else np.zeros_like(y)


@dataclass(frozen=True)
class EventProtocolConfig:
    split: tuple = (0.6, 0.2, 0.2)
    z_threshold: float = 3.0
    min_duration: int = 2
    match_window: int = 10
    dt: float = 0.005
    fp_budget: float = 5.0
    grid: tuple = tuple(np.round(np.arange(1.0, 8.01, 0.25), 2))

    def __post_init__(self):
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split must be three non-negative fractions summing to 1")
        if self.min_duration < 1:
            raise ValueError("min_duration must be >= 1")
        if self.match_window < 0:
            raise ValueError("match_window must be >= 0")

    def bounds(self, T: int) -> tuple[int, int]:
        a = int(round(self.split[0] * T))
        b = int(round((self.split[0] + self.split[1]) * T))
        return a, b


def episode_starts(z, threshold: float, min_duration: int) -> np.ndarray:
    """First bins of runs with ``z >= threshold`` lasting at least ``min_duration``."""
    above = np.concatenate(([False], np.asarray(z) >= threshold, [False]))
    d = np.diff(above.astype(np.int8))
    st = np.flatnonzero(d == 1)
    en = np.flatnonzero(d == -1)
    return st[(en - st) >= min_duration]


def match_starts(pred_starts, true_starts, window: int) -> list:
    """Greedy earliest-first one-to-one matching within ``+-window`` bins.

    Each truth start, in order, takes the earliest unused prediction inside
    its window. Returns ``(true_start, pred_start)`` pairs.
    """
    pred = sorted(int(p) for p in pred_starts)
    used = [False] * len(pred)
    out = []
    for t in sorted(int(x) for x in true_starts):
        for k, p in enumerate(pred):
            if used[k] or p < t - window:
                continue
            if p > t + window:
                break
            used[k] = True
            out.append((t, p))
            break
    return out


def _moments(x) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x))


def residual_event_detection(truth, predictions, cfg: EventProtocolConfig | None = None) -> dict:
    """Train-calibrated residual events on one series.

    Truth events are episodes of the truth z-scored with train moments.
    Predicted events are episodes of the signed residual ``truth - pred``
    z-scored with train moments; the residual threshold is the smallest grid
    value whose validation false starts stay within ``fp_budget`` per 1000
    bins. Only the test segment is scored; test moments are never used.
    """
    cfg = cfg or EventProtocolConfig()
    y = np.asarray(truth, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if y.shape != p.shape or y.ndim != 1:
        raise ValueError("truth and predictions must be aligned 1-D series")
    T = y.size
    a, b = cfg.bounds(T)
    my, sy = _moments(y[:a])
    if sy == 0:
        raise ValueError("truth has zero variance on the train split")
    r = y - p
    mr, sr = _moments(r[:a])
    zt = (y - my) / sy
    zr = (r - mr) / sr if sr > 0 else np.zeros(T)

    true_val = episode_starts(zt[a:b], cfg.z_threshold, cfg.min_duration)
    nval = max(b - a, 1)
    thr = cfg.grid[-1]
    for g in cfg.grid:
        pv = episode_starts(zr[a:b], g, cfg.min_duration)
        fp = len(pv) - len(match_starts(pv, true_val, cfg.match_window))
        if 1000.0 * fp / nval <= cfg.fp_budget:
            thr = g
            break
    ts = episode_starts(zt[b:], cfg.z_threshold, cfg.min_duration) + b
    ps = episode_starts(zr[b:], thr, cfg.min_duration) + b
    return {
        "event_starts_true": ts,
        "event_starts_pred": ps,
        "matches": match_starts(ps, ts, cfg.match_window),
        "residual_threshold": float(thr),
        "train_moments": (my, sy, mr, sr),
    }


def forecast_metrics(truth, predictions, events: dict | None = None, dt: float = 0.005,
                     label_kind: str = "onset", top: float = 0.1) -> dict:
    """Point error, burst skill and (given ``events``) detection scores.

    AUROC/AUPRC rank the predictions against top-decile burst labels of the
    truth; they are NaN when there are no positives.
    """
    y = np.asarray(truth, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if y.shape != p.shape:
        raise ValueError("truth and predictions must be aligned")
    e = p - y
    lab = burst_labels(y, label_kind, top)
    out = {
        "mae": float(np.mean(np.abs(e))),
        "rmse": float(np.sqrt(np.mean(e**2))),
        "auroc": auroc(p, lab),
        "auprc": auprc(p, lab),
    }
    if events is not None:
        nm = len(events["matches"])
        npred = len(events["event_starts_pred"])
        ntrue = len(events["event_starts_true"])
        prec = nm / npred if npred else math.nan
        rec = nm / ntrue if ntrue else math.nan
        f1 = 2 * prec * rec / (prec + rec) if nm else (0.0 if npred or ntrue else math.nan)
        lat = [(ps - ts) * dt * 1000.0 for ts, ps in events["matches"]]
        out.update(precision=prec, recall=rec, f1=f1,
                   median_start_latency_ms=float(np.median(lat)) if lat else math.nan)
    return out


# synthetic benchmark


@dataclass(frozen=True)
class SyntheticQueueSpec:
    """Bursty arrivals on a graph feeding per-node slotted queues.

    Each node has its own MMPP ON/OFF epochs; intensities are scaled per node
    by a factor drawn from ``load_spread``. Service is Poisson with mean
    ``mu_rate * dt`` per bin and buffers hold ``K`` packets.
    """

    n: int = 20
    topology: str = "scale-free"
    horizon: int = 20_000
    mu_rate: float = 200.0
    dt: float = 0.005
    K: int = 1000
    on_rate: float = 2.0
    off_rate: float = 10.0
    intensity_on: float = 300.0
    intensity_off: float = 40.0
    load_spread: tuple = (0.6, 1.4)

    def graph(self, seed: int) -> CouplingGraph:
        if self.topology == "scale-free":
            return barabasi_albert(self.n, 2, seed)
        if self.topology == "star":
            return star(self.n)
        if self.topology == "chain":
            return chain(self.n)
        raise ValueError(f"unknown topology {self.topology!r}")


def synthetic_queue(spec: SyntheticQueueSpec, seed: int = 0):
    """Returns ``(graph, arrivals, queue)``; arrays are ``(horizon, n)``."""
    g = spec.graph(seed)
    lo, hi = spec.load_spread
    scale = stream(seed, STREAM_GRAPH, 7).uniform(lo, hi, spec.n)
    arr = np.empty((spec.horizon, spec.n))
    for i in range(spec.n):
        d = DriveSpec(kind="mmpp", on_rate=spec.on_rate, off_rate=spec.off_rate,
                      intensity_on=spec.intensity_on * scale[i], intensity_off=spec.intensity_off * scale[i],
                      seed_stream=i)
        arr[:, i] = sample_mmpp(d, spec.horizon, seed, spec.dt, node=i).counts
    q = binned_queue(arr, spec.mu_rate * spec.dt, spec.K, seed)
    return g, arr, q


def evaluate_zero_shot(spec: SyntheticQueueSpec | None = None, setup: ForecastSetup | None = None, seed: int = 0,
                       cfg: EventProtocolConfig | None = None, label_kind: str = "onset") -> dict:
    """Per-method metrics on the test split, averaged over nodes."""
    spec = spec or SyntheticQueueSpec()
    setup = setup or ForecastSetup(mu_rate=spec.mu_rate, dt=spec.dt)
    cfg = cfg or EventProtocolConfig(dt=spec.dt)
    g, arr, q = synthetic_queue(spec, seed)
    a, b = cfg.bounds(spec.horizon)
    preds = run_forecasters(arr, setup, g, train_end=a, seed=seed)
    calib = preds.pop("_calibration")
    table = {}
    for m in METHODS:
        rows = []
        for i in range(spec.n):
            ev = residual_event_detection(q[:, i], preds[m][:, i], cfg)
            rows.append(forecast_metrics(q[b:, i], preds[m][b:, i], ev, spec.dt, label_kind))
        table[m] = {k: float(np.nanmean([r[k] for r in rows])) if any(np.isfinite(r[k]) for r in rows) else math.nan
                    for k in rows[0]}
    return {"metrics": table, "calibration": calib, "graph": g}
