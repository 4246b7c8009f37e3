"""Where the network loses stability: Perron prediction against an eigenvalue sweep."""

import numpy as np

from nosnet.continuation import eig_sweep_gstar
from nosnet.graph import normalise_to_rho, random_sparse
from nosnet.model import NodeParams
from nosnet.stability import network_thresholds, solve_equilibrium

p = NodeParams()
v = solve_equilibrium(p, 0.2).v_star
for rho in (0.5, 1.0, 2.0):
    W = normalise_to_rho(random_sparse(120, 0.1, 3), rho)
    th = network_thresholds(p, v, W)
    sw = eig_sweep_gstar(p, v, W, np.linspace(0, 4 / rho, 41))
    print(f"rho={rho:.1f}  predicted g*={th.k_star / rho:.4f}  swept g*={sw.g_star:.4f}  ratio={sw.collapse_ratio:.4f}")
