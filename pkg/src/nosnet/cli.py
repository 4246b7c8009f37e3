"""Command-line entry point: ``nosnet <command> [options]``.

Every command writes its CSV outputs plus ``manifest.json`` (config hash,
seeds, package version, arguments) into ``--out-dir``. Files are written to
a temporary name and renamed, so a partial file is never left behind.
Exit codes: 0 success, 2 invalid configuration, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, validate_config
from .continuation import continue_and_classify, eig_sweep_gstar
from .drive import analytic_shot_stats, mmpp_stationary_mean
from .forecasting import METHODS, SyntheticQueueSpec, evaluate_zero_shot
from .graph import spectral_radius
from .queueing import (
    CONTROLLERS,
    ClosedLoopSpec,
    burst_tail_comparison,
    burst_load,
    calibrate_light_load,
    closed_loop_run,
    mm1_reference,
    open_loop_means,
    step_load,
)
from .drive import DriveSpec, sample_mmpp
from .simulator import run_simulation
from .spikestats import avalanche_analysis, spike_statistics, synchrony_order
from .stability import solve_equilibrium, stability_report

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if x is None else str(x)


def write_csv(path: Path, columns: list, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    _atomic_write(path, buf.getvalue())
    return path


class Run:
    """Output directory plus the manifest collected for one invocation."""

    def __init__(self, args, cfg: ExperimentConfig, seeds):
        self.out = Path(args.out_dir)
        self.cfg = cfg
        self.seeds = list(seeds)
        self.args = args
        self.files = []

    def csv(self, name: str, columns: list, rows) -> None:
        self.files.append(write_csv(self.out / name, columns, rows).name)

    def finish(self) -> None:
        manifest = {
            "tool": "nosnet",
            "version": __version__,
            "command": self.args.command,
            "config_hash": self.cfg.hash(),
            "config": self.cfg.data,
            "seeds": self.seeds,
            "argv": self.args.argv,
            "outputs": sorted(self.files),
        }
        _atomic_write(self.out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _seeds(args, cfg: ExperimentConfig) -> list:
    return [args.seed] if args.seed is not None else cfg.data["run"]["seeds"]


def _mean_input(cfg: ExperimentConfig) -> float:
    d = cfg.drive_spec()
    if d.kind == "shot-noise":
        eta = analytic_shot_stats(d).mean
    elif d.kind == "mmpp":
        eta = mmpp_stationary_mean(d, cfg.data["run"]["dt"])
    else:
        eta = 0.0
    return d.I0 + d.gain * eta


# commands


def _simulate_one(payload):
    cfg_data, seed = payload
    cfg = ExperimentConfig.from_dict(cfg_data)
    return seed, run_simulation(cfg.sim_config(), seed)


def _run_seeds(cfg: ExperimentConfig, seeds, jobs: int):
    work = [(cfg.data, s) for s in seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_simulate_one, work))
    return [_simulate_one(w) for w in work]


def cmd_simulate(args, cfg, run: Run):
    spikes, pop, summary = [], [], []
    dt = cfg.data["run"]["dt"]
    for seed, res in _run_seeds(cfg, run.seeds, args.jobs):
        for i, s in enumerate(res.spikes):
            spikes.extend({"seed": seed, "node": i, "bin": int(b)} for b in s)
        pop.extend({"seed": seed, "bin": t, "count": int(c)} for t, c in enumerate(res.population_counts))
        total = int(res.population_counts.sum())
        summary.append({"seed": seed, "n": res.n, "horizon": res.horizon, "spikes": total,
                        "mean_rate_hz": total / (res.n * res.horizon * dt)})
    run.csv("spikes.csv", ["seed", "node", "bin"], spikes)
    run.csv("population.csv", ["seed", "bin", "count"], pop)
    run.csv("summary.csv", ["seed", "n", "horizon", "spikes", "mean_rate_hz"], summary)


def cmd_stats(args, cfg, run: Run):
    dt = cfg.data["run"]["dt"]
    rows, sizes, tails = [], [], []
    for seed, res in _run_seeds(cfg, run.seeds, args.jobs):
        st = spike_statistics(res.spikes, res.horizon, dt, B=args.bootstrap, seed=seed)
        sync = synchrony_order(res.spikes, res.horizon)
        av = avalanche_analysis(res.population_counts, dt)
        rows.append({
            "seed": seed, "mean_rate_hz": st.mean_rate, "rate_ci_lo": st.rate_ci[0], "rate_ci_hi": st.rate_ci[1],
            "isi_cv": st.isi_cv, "cv_ci_lo": st.cv_ci[0], "cv_ci_hi": st.cv_ci[1],
            "R_mean": sync.R_mean if sync else math.nan, "n_avalanches": int(av.sizes.size),
        })
        sizes.extend({"seed": seed, "size": int(s)} for s in av.sizes)
        f = av.fit
        tails.append({"seed": seed, **({} if f is None else {
            "x_min": f.x_min, "n_tail": f.n_tail, "alpha_hat": f.alpha_hat, "mu_hat": f.mu_hat,
            "sigma_hat": f.sigma_hat, "ks_pl": f.ks_pl, "ks_ln": f.ks_ln, "aic_pl": f.aic_pl,
            "aic_ln": f.aic_ln, "preferred": f.preferred})})
    run.csv("spike_stats.csv", ["seed", "mean_rate_hz", "rate_ci_lo", "rate_ci_hi", "isi_cv", "cv_ci_lo", "cv_ci_hi",
                                "R_mean", "n_avalanches"], rows)
    run.csv("avalanche_sizes.csv", ["seed", "size"], sizes)
    run.csv("tail_fit.csv", ["seed", "x_min", "n_tail", "alpha_hat", "mu_hat", "sigma_hat", "ks_pl", "ks_ln",
                             "aic_pl", "aic_ln", "preferred"], tails)


def cmd_stability(args, cfg, run: Run):
    p = cfg.node_params()
    Wg = cfg.graph()
    I_star = _mean_input(cfg) if args.I_star is None else args.I_star
    row = {"I_star": I_star, **stability_report(p, Wg, I_star, (0.0, args.v_max))}
    cols = ["I_star", "v_star", "u_star", "L", "C", "discriminant", "trace_T", "det_Delta", "stable",
            "classification", "tau_lin", "dc_gain", "Lambda", "k_star", "g_star", "Delta_net",
            "gershgorin_g_bound", "gershgorin_norm_bound", "bottom_block_ok", "rho", "d_bar"]
    run.csv("stability.csv", cols, [row])


def cmd_continuation(args, cfg, run: Run):
    p = cfg.node_params()
    c = continue_and_classify(p, (args.I_min, args.I_max), args.steps, (0.0, args.v_max))
    run.csv("branch.csv", ["I", "v_star", "stable", "T", "Delta"],
            [{"I": b.I, "v_star": b.v_star, "stable": b.stable, "T": b.T, "Delta": b.Delta} for b in c.branch])
    onsets = [{"kind": "saddle-node", "I": c.sn[0] if c.sn else math.nan, "v": c.sn[1] if c.sn else math.nan,
               "admissible": True},
              {"kind": "hopf", "I": c.hopf[0] if c.hopf else math.nan, "v": c.hopf[1] if c.hopf else math.nan,
               "admissible": c.hopf_admissible}]
    run.csv("onsets.csv", ["kind", "I", "v", "admissible"], onsets)


def cmd_gsweep(args, cfg, run: Run):
    p = cfg.node_params()
    Wg = cfg.graph()
    I_star = _mean_input(cfg) if args.I_star is None else args.I_star
    eq = solve_equilibrium(p, I_star, (0.0, args.v_max))
    if not eq.found:
        raise RuntimeError("no equilibrium at the requested drive")
    grid = np.linspace(0.0, args.g_max, args.points)
    sw = eig_sweep_gstar(p, eq.v_star, Wg.with_gain(1.0), grid)
    run.csv("gsweep.csv", ["g", "leading_re"], [{"g": g, "leading_re": r} for g, r in zip(sw.g_grid, sw.leading_re)])
    run.csv("gstar.csv", ["g_star", "k_star", "rho", "collapse_ratio", "status", "v_star"],
            [{"g_star": sw.g_star, "k_star": sw.k_star, "rho": sw.rho, "collapse_ratio": sw.collapse_ratio,
              "status": sw.status, "v_star": eq.v_star}])


def cmd_baselines(args, cfg, run: Run):
    p = cfg.node_params().with_(gamma=0.0)
    seed = run.seeds[0]
    mu, K, dt = args.mu_rate, args.K, cfg.data["run"]["dt"]
    lams = np.array([float(x) for x in args.rho_grid.split(",")]) * mu
    light = lams[lams / mu <= 0.3]
    calib = calibrate_light_load(p, light if light.size else lams[:1], mu, dt=dt, seed=seed)
    rows = open_loop_means(p, calib, lams, mu, K, dt, args.horizon, seed + 1)
    for r, lam in zip(rows, lams):
        if lam / mu < 1:
            ref = mm1_reference(lam, mu, K=K, events=args.events, seed=seed)
            r["mm1k_des"] = ref.sim_mean
            r["mm1k_des_se"] = ref.sim_se
    run.csv("mean_vs_lambda.csv", ["lambda", "rho", "mm1_analytic", "mm1k_des", "mm1k_des_se", "mm1k_sim", "nos"], rows)
    burst = DriveSpec(kind="mmpp", on_rate=2.0, off_rate=10.0, intensity_on=1.5 * mu, intensity_off=0.2 * mu)
    counts = sample_mmpp(burst, args.horizon, seed, dt).counts
    tails = burst_tail_comparison(p, calib, counts, mu, K, dt, seed)
    cc = []
    for model, (x, s) in tails.items():
        cc.extend({"model": model, "occupancy": float(a), "ccdf": float(b)} for a, b in zip(x, s))
    run.csv("ccdf.csv", ["model", "occupancy", "ccdf"], cc)
    spec = ClosedLoopSpec()
    H = 3000
    loads = {"step": (step_load(H, 0.5 * spec.mu_per_bin, 1.5 * spec.mu_per_bin, 1000), 1000),
             "burst": (burst_load(H, 0.5 * spec.mu_per_bin, 3.0 * spec.mu_per_bin, 100, 10, 1000), 1000)}
    metrics = []
    for name, (load, at) in loads.items():
        for c in CONTROLLERS:
            r = closed_loop_run(c, load, spec, seed, at)
            run.csv(f"closed_loop_{name}_{c}.csv", ["bin", "load", "p", "queue", "state"],
                    [{"bin": t, "load": load[t], "p": r.p_trace[t], "queue": r.queue_trace[t],
                      "state": r.state_trace[t]} for t in range(H)])
            metrics.append({"scenario": name, "controller": c, **r.metrics, "arrivals_sha256": r.arrivals_hash})
    run.csv("closed_loop_metrics.csv", ["scenario", "controller", "settling_bins", "overshoot", "mark_jitter",
                                        "mean_queue", "max_queue", "final_queue", "arrivals_sha256"], metrics)
    run.csv("calibration.csv", ["node", "gain_I", "scale", "reference_mean", "nos_mean"],
            [{"node": i, "gain_I": calib.gain_I, "scale": s, "reference_mean": m, "nos_mean": v}
             for i, (s, m, v) in enumerate(zip(calib.per_node_scale, calib.reference_means, calib.nos_means))])


def cmd_forecast(args, cfg, run: Run):
    rows = []
    for seed in run.seeds:
        spec = SyntheticQueueSpec(n=args.n, topology=args.topology, horizon=args.horizon)
        res = evaluate_zero_shot(spec, seed=seed, label_kind=args.labels)
        for m in METHODS:
            rows.append({"seed": seed, "topology": args.topology, "method": m, **res["metrics"][m]})
    run.csv("forecast_metrics.csv", ["seed", "topology", "method", "mae", "rmse", "auroc", "auprc", "f1", "precision",
                                     "recall", "median_start_latency_ms"], rows)


def cmd_validate(args, cfg, run: Run):
    res = validate_config(cfg)
    run.csv("violations.csv", ["field", "value", "lo", "hi"],
            [{"field": v.field, "value": v.value, "lo": v.range[0], "hi": v.range[1]} for v in res.violations])
    for v in res.violations:
        print(f"{v.field} = {v.value:g} outside [{v.range[0]:g}, {v.range[1]:g}]", file=sys.stderr)
    if res.ok:
        print("config ok")


COMMANDS = {
    "simulate": cmd_simulate,
    "stability": cmd_stability,
    "continuation": cmd_continuation,
    "gsweep": cmd_gsweep,
    "baselines": cmd_baselines,
    "forecast": cmd_forecast,
    "stats": cmd_stats,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nosnet", description="NOS spiking-unit experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (defaults when omitted)")
    common.add_argument("--seed", type=int, help="single seed overriding run.seeds")
    common.add_argument("--out-dir", default="nos-out")
    common.add_argument("--strict-ranges", action="store_true", help="fail on any out-of-range parameter")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for seed fan-out")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("stability", "gsweep"):
            sp.add_argument("--I-star", dest="I_star", type=float, help="operating drive (default: mean input)")
        if name in ("stability", "gsweep", "continuation"):
            sp.add_argument("--v-max", dest="v_max", type=float, default=1.5)
        if name == "continuation":
            sp.add_argument("--I-min", dest="I_min", type=float, default=0.0)
            sp.add_argument("--I-max", dest="I_max", type=float, default=3.0)
            sp.add_argument("--steps", type=int, default=301)
        if name == "gsweep":
            sp.add_argument("--g-max", dest="g_max", type=float, default=3.0)
            sp.add_argument("--points", type=int, default=31)
        if name == "stats":
            sp.add_argument("--bootstrap", type=int, default=500)
        if name == "baselines":
            sp.add_argument("--mu-rate", dest="mu_rate", type=float, default=200.0)
            sp.add_argument("--K", type=int, default=1000)
            sp.add_argument("--events", type=int, default=200_000)
            sp.add_argument("--horizon", type=int, default=20_000)
            sp.add_argument("--rho-grid", dest="rho_grid", default="0.1,0.2,0.3,0.5,0.7,0.9")
        if name == "forecast":
            sp.add_argument("--topology", choices=("scale-free", "star", "chain"), default="scale-free")
            sp.add_argument("--n", type=int, default=20)
            sp.add_argument("--horizon", type=int, default=20_000)
            sp.add_argument("--labels", choices=("onset", "level"), default="onset")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        if args.strict_ranges:
            cfg = ExperimentConfig.from_dict({**cfg.data, "strict_ranges": True})
        res = validate_config(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not res.ok:
        if cfg.data["strict_ranges"]:
            for v in res.violations:
                print(f"error: {v.field} = {v.value:g} outside [{v.range[0]:g}, {v.range[1]:g}]", file=sys.stderr)
            return EXIT_INVALID
        if args.command != "validate":
            for v in res.violations:
                warnings.warn(f"{v.field} = {v.value:g} outside [{v.range[0]:g}, {v.range[1]:g}]", stacklevel=1)
    run = Run(args, cfg, _seeds(args, cfg))
    try:
        COMMANDS[args.command](args, cfg, run)
        run.finish()
    except (ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
