"""Directed weighted coupling graph with per-link delays, link-queue gates and
spectral helpers.

Convention: ``W[i, j]`` is the weight of the link carrying spikes from node
``j`` into node ``i``. Edge files list ``src,dst,...`` and so map to
``W[dst, src]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

import numpy as np


@dataclass(frozen=True)
class LinkGateSpec:
    kind: Literal["power", "logistic"] = "power"
    p: float = 2.0
    k: float = 8.0
    theta: float = 0.5
    tau_q: float = 10.0
    sigma_s: Literal["clip01", "logistic"] = "clip01"

    def __post_init__(self):
        if self.kind not in ("power", "logistic"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "power" and not self.p > 1:
            raise ValueError("power gate needs p > 1")
        if self.tau_q <= 0:
            raise ValueError("tau_q must be > 0")
        if self.sigma_s not in ("clip01", "logistic"):
            raise ValueError(f"unknown drive encoding {self.sigma_s!r}")

    def encode(self, S):
        S = np.asarray(S, dtype=float)
        if self.sigma_s == "clip01":
            return np.clip(S, 0.0, 1.0)
        return 0.5 * (1.0 + np.tanh(0.5 * S))

    def gate(self, q):
        q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        if self.kind == "power":
            return (1.0 - q) ** self.p
        return 0.5 * (1.0 - np.tanh(0.5 * self.k * (q - self.theta)))


def gate_and_link_queue_step(q, S, spec: LinkGateSpec, dt: float = 1.0):
    """Advance link occupancies by one step; returns ``(q_new, gate_value)``."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("occupancy must lie in [0, 1]")
    q_new = np.clip(q + (dt / spec.tau_q) * (-q + spec.encode(S)), 0.0, 1.0)
    return q_new, spec.gate(q_new)


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    W: np.ndarray
    delays: np.ndarray
    g: float = 1.0
    gate: LinkGateSpec | None = None

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("W must be square")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValueError("weights must be finite and >= 0")
        if np.any(np.diag(W) != 0):
            raise ValueError("self-loops are not allowed")
        D = np.zeros(W.shape, dtype=np.int64) if self.delays is None else np.array(self.delays)
        if D.shape != W.shape:
            raise ValueError("delay matrix shape mismatch")
        if np.any(D < 0) or np.any(D != np.round(D)):
            raise ValueError("delays must be non-negative integer bins")
        D = D.astype(np.int64)
        D[W == 0] = 0
        W.setflags(write=False)
        D.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "delays", D)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def G(self) -> np.ndarray:
        return self.g * self.W

    def edges(self):
        """``(i, j, w, delay)`` tuples sorted by ``(i, j)``."""
        ii, jj = np.nonzero(self.W)
        return [(int(i), int(j), float(self.W[i, j]), int(self.delays[i, j])) for i, j in zip(ii, jj)]

    def with_gain(self, g: float) -> "CouplingGraph":
        return replace(self, g=float(g))

    def with_delays(self, delays) -> "CouplingGraph":
        return replace(self, delays=delays)


@dataclass(frozen=True)
class SpectralStats:
    rho: float
    norm_inf: float
    norm_2: float
    perron_vector: np.ndarray


def _power_iteration(A: np.ndarray, tol: float, max_iter: int):
    n = A.shape[0]
    x = np.full(n, 1.0 / math.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        y = A @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x, True
        y /= ny
        if abs(ny - lam) <= tol * max(ny, 1e-300) and np.linalg.norm(y - x) < 1e-6:
            return ny, y, True
        lam, x = ny, y
    return lam, x, False


def spectral_stats(Wg, tol: float = 1e-9, max_iter: int = 100_000) -> SpectralStats:
    W = Wg.W if isinstance(Wg, CouplingGraph) else np.asarray(Wg, dtype=float)
    n = W.shape[0]
    if n < 1:
        raise ValueError("graph has no nodes")
    A = np.abs(W)
    norm_inf = float(A.sum(axis=1).max())
    norm_2 = float(np.linalg.norm(W, 2))
    if norm_inf == 0.0:
        return SpectralStats(0.0, 0.0, norm_2, np.full(n, 1.0 / math.sqrt(n)))
    rho, vec, ok = _power_iteration(A, tol, max_iter)
    if not ok or rho > norm_inf * (1 + 1e-9):
        # periodic or reducible structure; go to the dense solver
        if n > 2048:
            raise RuntimeError("power iteration did not converge and n > 2048")
        vals, vecs = np.linalg.eig(A)
        k = int(np.argmax(np.abs(vals)))
        rho = float(abs(vals[k]))
        vec = np.abs(np.real(vecs[:, k]))
        nv = np.linalg.norm(vec)
        vec = vec / nv if nv > 0 else np.full(n, 1.0 / math.sqrt(n))
    if rho < 1e-12 * norm_inf:
        rho = 0.0
    return SpectralStats(float(min(rho, norm_inf)), norm_inf, norm_2, vec)


def spectral_radius(Wg) -> float:
    return spectral_stats(Wg).rho


def normalise_to_rho(Wg: CouplingGraph, target: float = 1.0) -> CouplingGraph:
    if target <= 0:
        raise ValueError("target spectral radius must be > 0")
    rho = spectral_radius(Wg)
    if rho == 0.0:
        raise ValueError("spectral radius is zero; cannot normalise")
    return replace(Wg, W=Wg.W * (target / rho))


def quantise_delays(tau_seconds, T: float):
    """Round delays to whole bins (halves round up)."""
    if T <= 0:
        raise ValueError("time base must be > 0")
    tau = np.asarray(tau_seconds, dtype=float)
    if np.any(tau < 0):
        raise ValueError("negative delay")
    # tiny epsilon keeps e.g. 0.0125/0.005 from rounding down via float error
    out = np.floor(tau / T + 0.5 + 1e-9).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BudgetResult:
    ok: bool
    worst_row: int
    load: float


def rate_budget_check(Wg: CouplingGraph, rates, R_max: float) -> BudgetResult:
    """Per-node fan-in event load against a fabric budget in events/s."""
    r = np.asarray(rates, dtype=float)
    if np.any(r < 0):
        raise ValueError("rates must be >= 0")
    loads = (Wg.W != 0).astype(float) @ r
    worst = int(np.argmax(loads))
    return BudgetResult(bool(np.all(loads <= R_max)), worst, float(loads[worst]))


# generators


def _graph(W, g=1.0, delays=None):
    return CouplingGraph(W=W, delays=delays, g=g)


def chain(n: int, weight: float = 1.0, bidirectional: bool = True) -> CouplingGraph:
    W = np.zeros((n, n))
    for k in range(n - 1):
        W[k + 1, k] = weight
        if bidirectional:
            W[k, k + 1] = weight
    return _graph(W)


def star(n: int, weight: float = 1.0, bidirectional: bool = True) -> CouplingGraph:
    """Hub is node 0."""
    W = np.zeros((n, n))
    W[0, 1:] = weight
    if bidirectional:
        W[1:, 0] = weight
    return _graph(W)


def barabasi_albert(n: int, m: int, seed: int, weights: str = "unit") -> CouplingGraph:
    """Undirected preferential-attachment graph stored as a symmetric W."""
    if not 1 <= m < n:
        raise ValueError("need 1 <= m < n")
    rng = np.random.default_rng(seed)
    W = np.zeros((n, n))
    # seed clique on m+1 nodes
    for i in range(m + 1):
        for j in range(i):
            W[i, j] = W[j, i] = 1.0
    targets_pool = [i for i in range(m + 1) for _ in range(m)]
    for new in range(m + 1, n):
        chosen = set()
        while len(chosen) < m:
            chosen.add(targets_pool[rng.integers(len(targets_pool))])
        for t in sorted(chosen):
            W[new, t] = W[t, new] = 1.0
            targets_pool.extend([new, t])
    if weights == "uniform":
        U = np.triu(rng.uniform(0.5, 1.5, (n, n)), 1)
        W = W * (U + U.T)
    elif weights != "unit":
        raise ValueError(f"unknown weight scheme {weights!r}")
    return _graph(W)


def random_sparse(n: int, p: float, seed: int) -> CouplingGraph:
    rng = np.random.default_rng(seed)
    W = (rng.random((n, n)) < p) * rng.uniform(0.1, 1.0, (n, n))
    np.fill_diagonal(W, 0.0)
    return _graph(W)


def random_delays(Wg: CouplingGraph, max_ms: float, seed: int, T: float = 0.005) -> CouplingGraph:
    rng = np.random.default_rng(seed)
    tau = rng.uniform(0.0, max_ms / 1000.0, Wg.W.shape)
    return Wg.with_delays(quantise_delays(tau, T))


def read_edge_list(path, n: int | None = None, T: float = 0.005) -> CouplingGraph:
    """Parse ``src,dst,weight[,delay_ms]`` lines; ``#`` starts a comment."""
    rows = []
    path = Path(path)
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip() == "src":
                continue
            if len(row) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(row)}")
            try:
                s, d = int(row[0]), int(row[1])
                w = float(row[2])
                dl = float(row[3]) if len(row) == 4 else 0.0
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            rows.append((s, d, w, dl))
    size = n if n is not None else (max(max(s, d) for s, d, _, _ in rows) + 1 if rows else 0)
    W = np.zeros((size, size))
    tau = np.zeros((size, size))
    for s, d, w, dl in rows:
        W[d, s] = w
        tau[d, s] = dl / 1000.0
    return CouplingGraph(W=W, delays=quantise_delays(tau, T))


def write_edge_list(Wg: CouplingGraph, path, T: float = 0.005) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "weight", "delay_ms"])
        for i, j, wt, d in Wg.edges():
            w.writerow([j, i, repr(wt), d * T * 1000.0])
