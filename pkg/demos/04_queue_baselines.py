"""M/M/1 anchor, light-load calibration and closed-loop marking controllers."""

import numpy as np

from nosnet.model import NodeParams
from nosnet.queueing import CONTROLLERS, burst_load, calibrate_light_load, ensemble_response, mm1_reference

for rho in (0.3, 0.5, 0.7):
    r = mm1_reference(rho * 100, 100.0, K=1000, events=200_000, seed=1)
    print(f"rho={rho}  simulated {r.sim_mean:.3f} +- {r.sim_se:.3f}  analytic {r.analytic_mean:.3f}")

calib = calibrate_light_load(NodeParams(gamma=0.0), np.array([0.1, 0.2]) * 200.0, 200.0, horizon=20_000)
print(f"\ncalibrated input gain {calib.gain_I:.4f}, output scales {np.round(calib.per_node_scale, 3)}")

load = burst_load(1400, 5, 30, 100, 10, 1000)
for c in CONTROLLERS:
    m = ensemble_response(c, load, step_at=1000)
    print(f"{c:>10}: max queue {m['max_queue']:.1f}  settling {m['settling_bins']:.0f} bins  jitter {m['mark_jitter']:.4f}")
