"""Experiment configuration: YAML loading, canonical form, hashing and
validation against the admissible parameter region.

Schema (all sections optional; omitted keys take the defaults below)::

    model:            # per-bin coefficients; ``lambda`` is the service leak
      alpha: 0.7
      kappa: 1.0
      beta: 0.1
      gamma: 0.08
      lambda: 0.18
      chi: 0.05
      v_rest: 0.0
      a: 1.1
      b: 1.0
      mu: 0.1
      overrides: {}   # node index -> {key: value}
    graph:
      generator: random-sparse   # random-sparse | scale-free | chain | star | edge-list
      n: 64
      p: 0.1                     # random-sparse edge probability
      m: 2                       # scale-free attachment count
      path: null                 # edge-list CSV: src,dst,weight[,delay_ms]
      rho: 1.0                   # normalise rho(W) to this before applying gain
      gain: 0.5                  # g; k_net = g * rho
      max_delay_ms: 0.0          # uniform random delays in [0, max_delay_ms]
      seed: 1
      gate: null                 # {kind: power|logistic, p, k, theta, tau_q}
    drive:
      kind: shot-noise           # shot-noise | mmpp | trace | none
      rate: 50.0                 # events/s
      amplitude: {kind: constant, value: 0.6, lo: 0.0, hi: 1.0}
      tau_s_ms: 10.0
      on_rate: 0.5
      off_rate: 2.0
      intensity_on: 40.0
      intensity_off: 5.0
      trace_file: null
      I0: 0.1
      gain: 1.0
    threshold: {v_th: 0.6, sigma: 0.0, noise: clipped-gaussian}
    reset: {kind: event-exponential, c: 0.1, d: 0.25, r_reset: 5.0, k_reset: 14.0}
    run: {dt: 0.005, horizon: 2000, seeds: [0], record: [spikes]}
    strict_ranges: false
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .drive import Amplitude, DriveSpec
from .graph import (
    CouplingGraph,
    LinkGateSpec,
    barabasi_albert,
    chain,
    normalise_to_rho,
    random_delays,
    random_sparse,
    read_edge_list,
    spectral_radius,
    star,
)
from .model import NodeParams, ResetSpec, ThresholdSpec
from .simulator import SimConfig

DEFAULTS = {
    "model": {
        "alpha": 0.7, "kappa": 1.0, "beta": 0.1, "gamma": 0.08, "lambda": 0.18, "chi": 0.05,
        "v_rest": 0.0, "a": 1.1, "b": 1.0, "mu": 0.1, "overrides": {},
    },
    "graph": {
        "generator": "random-sparse", "n": 64, "p": 0.1, "m": 2, "path": None, "rho": 1.0,
        "gain": 0.5, "max_delay_ms": 0.0, "seed": 1, "gate": None,
    },
    "drive": {
        "kind": "shot-noise", "rate": 50.0,
        "amplitude": {"kind": "constant", "value": 0.6, "lo": 0.0, "hi": 1.0},
        "tau_s_ms": 10.0, "on_rate": 0.5, "off_rate": 2.0, "intensity_on": 40.0, "intensity_off": 5.0,
        "trace_file": None, "I0": 0.1, "gain": 1.0,
    },
    "threshold": {"v_th": 0.6, "sigma": 0.0, "noise": "clipped-gaussian"},
    "reset": {"kind": "event-exponential", "c": 0.1, "d": 0.25, "r_reset": 5.0, "k_reset": 14.0},
    "run": {"dt": 0.005, "horizon": 2000, "seeds": [0], "record": ["spikes"]},
    "strict_ranges": False,
}

GATE_DEFAULTS = {"kind": "power", "p": 2.0, "k": 8.0, "theta": 0.5, "tau_q": 10.0}

# admissible region: (section, key) -> (lo, hi)
RANGES = {
    ("model", "alpha"): (0.4, 1.0),
    ("model", "kappa"): (0.5, 2.0),
    ("model", "beta"): (-0.10, 0.40),
    ("model", "gamma"): (0.0, 0.15),
    ("model", "lambda"): (0.10, 0.30),
    ("model", "chi"): (0.0, 0.08),
    ("model", "a"): (0.6, 1.8),
    ("model", "b"): (0.6, 1.6),
    ("model", "mu"): (0.0, 0.35),
    ("threshold", "v_th"): (0.50, 0.68),
    ("reset", "k_reset"): (10.0, 20.0),
    ("reset", "r_reset"): (3.0, 8.0),
    ("reset", "c"): (0.0, 0.2),
    ("reset", "d"): (0.1, 0.4),
    ("drive", "I0"): (0.08, 0.16),
    ("drive", "gain"): (0.8, 1.2),
    ("drive", "tau_s_ms"): (0.0, 15.0),
}
K_NET_RANGE = (0.0, 1.8)
SHOT_RATE_RANGE = (10.0, 50.0)
AMPLITUDE_RANGE = (0.3, 0.9)
DELAY_MS_RANGE = (0.0, 25.0)


class ConfigError(ValueError):
    """Unparseable or structurally invalid configuration."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"unknown key {path}{k!r}")
        if isinstance(defaults[k], dict) and k != "overrides":
            if not isinstance(v, dict):
                raise ConfigError(f"{path}{k} must be a mapping")
            out[k] = _merge(defaults[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def _canonical(doc: dict) -> dict:
    """Fill defaults, coerce numeric types and sort override keys."""
    d = _merge(DEFAULTS, doc, "")
    for sec in ("model", "graph", "drive", "threshold", "reset"):
        for k, v in d[sec].items():
            if isinstance(DEFAULTS[sec].get(k), float) and isinstance(v, (int, float)) and not isinstance(v, bool):
                d[sec][k] = float(v)
    amp = d["drive"]["amplitude"]
    for k in ("value", "lo", "hi"):
        amp[k] = float(amp[k])
    ov = {}
    for node, vals in (d["model"]["overrides"] or {}).items():
        try:
            idx = int(node)
        except (TypeError, ValueError):
            raise ConfigError(f"model.overrides key {node!r} is not a node index") from None
        if not isinstance(vals, dict):
            raise ConfigError(f"model.overrides.{idx} must be a mapping")
        for k in vals:
            if k not in DEFAULTS["model"] or k == "overrides":
                raise ConfigError(f"unknown key model.overrides.{idx}.{k!r}")
        ov[idx] = {k: float(vals[k]) for k in sorted(vals)}
    d["model"]["overrides"] = dict(sorted(ov.items()))
    if d["graph"]["gate"] is not None:
        if not isinstance(d["graph"]["gate"], dict):
            raise ConfigError("graph.gate must be a mapping or null")
        d["graph"]["gate"] = _merge(GATE_DEFAULTS, d["graph"]["gate"], "graph.gate.")
    run = d["run"]
    seeds = run["seeds"]
    run["seeds"] = [int(s) for s in (seeds if isinstance(seeds, list) else [seeds])]
    run["record"] = sorted(set(run["record"]) | {"spikes"})
    run["horizon"] = int(run["horizon"])
    run["dt"] = float(run["dt"])
    d["graph"]["n"] = int(d["graph"]["n"])
    d["strict_ranges"] = bool(d["strict_ranges"])
    return d


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, doc: dict | None) -> "ExperimentConfig":
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigError("top level must be a mapping")
        return cls(_canonical(doc))

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            doc = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            msg = str(exc.problem or exc.context or exc)
            raise ConfigError(f"parse error: {msg}", mark.line + 1 if mark else None,
                              mark.column + 1 if mark else None) from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"parse error: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=False)

    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.hash() == other.hash()

    def __hash__(self):
        return hash(self.hash())

    # builders

    def node_params(self) -> NodeParams:
        m = {k: v for k, v in self.data["model"].items() if k != "overrides"}
        m["lam"] = m.pop("lambda")
        return NodeParams(**m)

    def params_for(self, n: int):
        base = self.node_params()
        ov = self.data["model"]["overrides"]
        if not ov:
            return base
        out = []
        for i in range(n):
            changes = dict(ov.get(i, {}))
            if "lambda" in changes:
                changes["lam"] = changes.pop("lambda")
            out.append(base.with_(**changes) if changes else base)
        return tuple(out)

    def drive_spec(self) -> DriveSpec:
        d = self.data["drive"]
        a = d["amplitude"]
        return DriveSpec(
            kind=d["kind"], rate=d["rate"], amplitude=Amplitude(a["kind"], a["value"], a["lo"], a["hi"]),
            tau_s=d["tau_s_ms"] / 1000.0, on_rate=d["on_rate"], off_rate=d["off_rate"],
            intensity_on=d["intensity_on"], intensity_off=d["intensity_off"], trace_file=d["trace_file"],
            I0=d["I0"], gain=d["gain"],
        )

    def threshold_spec(self) -> ThresholdSpec:
        t = self.data["threshold"]
        return ThresholdSpec(v_th_base=t["v_th"], sigma=t["sigma"], noise_kind=t["noise"])

    def reset_spec(self) -> ResetSpec:
        r = self.data["reset"]
        return ResetSpec(kind=r["kind"], c=r["c"], d=r["d"], r_reset=r["r_reset"], k_reset=r["k_reset"])

    def graph(self) -> CouplingGraph:
        """Coupling graph with ``rho(W)`` normalised and gain ``g`` applied."""
        g = self.data["graph"]
        dt = self.data["run"]["dt"]
        gen = g["generator"]
        if gen == "random-sparse":
            Wg = random_sparse(g["n"], g["p"], g["seed"])
        elif gen == "scale-free":
            Wg = barabasi_albert(g["n"], int(g["m"]), g["seed"])
        elif gen == "chain":
            Wg = chain(g["n"])
        elif gen == "star":
            Wg = star(g["n"])
        elif gen == "edge-list":
            if not g["path"]:
                raise ConfigError("graph.path is required for generator edge-list")
            Wg = read_edge_list(g["path"], T=dt)
        else:
            raise ConfigError(f"unknown graph generator {gen!r}")
        if g["rho"] > 0 and spectral_radius(Wg) > 0:
            Wg = normalise_to_rho(Wg, g["rho"])
        if g["max_delay_ms"] > 0:
            Wg = random_delays(Wg, g["max_delay_ms"], g["seed"] + 1, dt)
        gate = None
        if g["gate"] is not None:
            gs = g["gate"]
            gate = LinkGateSpec(kind=gs["kind"], p=gs["p"], k=gs["k"], theta=gs["theta"], tau_q=gs["tau_q"])
        return CouplingGraph(Wg.W, Wg.delays, g=g["gain"], gate=gate)

    def sim_config(self, graph: CouplingGraph | None = None) -> SimConfig:
        Wg = graph or self.graph()
        run = self.data["run"]
        return SimConfig(
            graph=Wg, params=self.params_for(Wg.n), drive=self.drive_spec(), threshold=self.threshold_spec(),
            reset=self.reset_spec(), dt=run["dt"], horizon=run["horizon"], record=frozenset(run["record"]),
        )


@dataclass(frozen=True)
class Violation:
    field: str
    value: float
    range: tuple


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: list


def _outside(x: float, rng: tuple) -> bool:
    return not (rng[0] - 1e-12 <= x <= rng[1] + 1e-12)


def validate_config(cfg: ExperimentConfig, graph: CouplingGraph | None = None) -> ValidationResult:
    """List every field outside the admissible region.

    Covers node coefficients (including per-node overrides), threshold and
    reset, drive mapping, shot-noise rate and mean amplitude, link delays and
    ``k_net = g * rho(W)``.
    """
    d = cfg.data
    out = []
    for (sec, key), rng in RANGES.items():
        x = d[sec][key]
        if _outside(x, rng):
            out.append(Violation(f"{sec}.{key}", x, rng))
    for node, vals in d["model"]["overrides"].items():
        for key, x in vals.items():
            rng = RANGES.get(("model", key))
            if rng and _outside(x, rng):
                out.append(Violation(f"model.overrides.{node}.{key}", x, rng))
    dr = d["drive"]
    if dr["kind"] == "shot-noise":
        if _outside(dr["rate"], SHOT_RATE_RANGE):
            out.append(Violation("drive.rate", dr["rate"], SHOT_RATE_RANGE))
        amp = cfg.drive_spec().amplitude.mean
        if _outside(amp, AMPLITUDE_RANGE):
            out.append(Violation("drive.amplitude", amp, AMPLITUDE_RANGE))
    g = d["graph"]
    if _outside(g["max_delay_ms"], DELAY_MS_RANGE):
        out.append(Violation("graph.max_delay_ms", g["max_delay_ms"], DELAY_MS_RANGE))
    if graph is None and g["generator"] != "edge-list":
        rho = g["rho"] if g["rho"] > 0 else None
    else:
        graph = graph or cfg.graph()
        rho = spectral_radius(graph.W)
        if graph.delays.size and graph.delays.max() > 0:
            dmax = float(graph.delays.max()) * d["run"]["dt"] * 1000.0
            if _outside(dmax, DELAY_MS_RANGE):
                out.append(Violation("graph.delays_ms", dmax, DELAY_MS_RANGE))
    if rho is None:
        rho = spectral_radius(cfg.graph().W)
    k_net = g["gain"] * rho
    if _outside(k_net, K_NET_RANGE) or not math.isfinite(k_net):
        out.append(Violation("graph.k_net", k_net, K_NET_RANGE))
    return ValidationResult(not out, out)
