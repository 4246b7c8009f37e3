"""Spiking network under shot-noise drive: rates, irregularity, avalanches and synchrony."""

from nosnet.drive import Amplitude, DriveSpec
from nosnet.graph import normalise_to_rho, random_sparse
from nosnet.model import NodeParams
from nosnet.simulator import SimConfig, run_simulation
from nosnet.spikestats import avalanche_analysis, spike_statistics, synchrony_order

W = normalise_to_rho(random_sparse(64, 0.5, 1), 1.0)
H = 6000
for k in (0.0, 0.5, 1.0, 2.0):
    for A in (0.3, 0.9):
        drive = DriveSpec(rate=50.0, amplitude=Amplitude("exponential", A), tau_s=0.01, I0=0.1, gain=0.12)
        r = run_simulation(SimConfig(graph=W.with_gain(k), params=NodeParams(), drive=drive, horizon=H), 1)
        s = spike_statistics(r.spikes, H, B=100)
        sync = synchrony_order(r.spikes, H)
        fit = avalanche_analysis(r.population_counts).fit
        tail = f"alpha={fit.alpha_hat:.2f} ({fit.preferred})" if fit else "no tail fit"
        R = f"{sync.R_mean:.3f}" if sync else "n/a"
        print(f"k={k:.1f} A={A:.1f}  rate={s.mean_rate:6.2f} Hz  CV={s.isi_cv:.3f}  R={R}  {tail}")
