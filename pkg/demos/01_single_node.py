"""Single-node equilibrium, local stability and existence margins."""

from nosnet.continuation import continue_and_classify
from nosnet.model import NodeParams
from nosnet.stability import local_jacobian, operational_margin, operational_margin_zero, solve_equilibrium

p = NodeParams()
for I in (0.0, 0.1, 0.2, 0.4):
    eq = solve_equilibrium(p, I)
    jac = local_jacobian(p, eq.v_star)
    print(f"I={I:.2f}  v*={eq.v_star:.4f}  u*={eq.u_star:.4f}  stable={jac.stable}  tau_lin={jac.tau_lin:.2f} bins")

# quadratic surrogate: how much drive headroom before the fold
q = NodeParams(alpha=0.02, kappa=0.0, beta=0.5, gamma=0.05, lam=0.2, chi=0.05, a=0.05, b=0.5, mu=0.01)
print(f"\nsurrogate L={q.L:.5f}  margin at I_max=0.1: {operational_margin(q, 0.1):.5f}")
print(f"margin reaches zero at I_max={operational_margin_zero(q):.4f}")

# with weak saturation the branch folds; a Hopf onset appears once ab > (a+mu)^2
c = continue_and_classify(NodeParams(kappa=0.0, b=2.0), (0.0, 5.0), 101)
print(f"\nfold at I={c.I_sn:.3f}, Hopf at I={c.I_hopf:.3f}")
