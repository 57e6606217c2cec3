# %% [markdown]
# Monte Carlo drops against the analytic CDF
# ==========================================
#
# Each drop scatters D2D pairs in a hexagonal cell, then runs distributed
# power control until every link either meets its target or sits at the
# cap. Powers from links near the cell centre are pooled and compared with
# the capped analytic CDF.

# %%
import numpy as np

from d2dpower import ExperimentConfig, watt_to_dbm
from d2dpower import analytic as an
from d2dpower import harness
from d2dpower import simulator as sim

cfg = ExperimentConfig(drops=60)

# %%
params, moments, traces, samples, summary = harness.simulate_point(cfg, 3.0, -10.0, threads=4)
print(f"{summary.n_samples} pooled links from {cfg.drops} drops, "
      f"{summary.fraction_converged:.0%} of drops settled, {summary.fraction_capped:.1%} of links capped")
print(f"KS distance to the analysis: {summary.ks:.4f}")

# %% [markdown]
# Compare the two CDFs at a handful of powers below the cap.

# %%
grid = np.sort(samples[samples < params.p_max])[:: max(1, int(np.sum(samples < params.p_max) // 6))]
emp = sim.empirical_cdf(samples, grid)
for p, f_emp in zip(grid, emp):
    print(f"{float(watt_to_dbm(p)):7.2f} dBm  empirical {f_emp:.4f}  analytic "
          f"{an.cdf_constrained(params, moments, p):.4f}")

# %% [markdown]
# A larger path-loss exponent attenuates interference faster than it weakens
# the short desired links, so links need less power.

# %%
for alpha in (2.5, 3.0, 3.5, 4.0):
    p_a = cfg.network_params(alpha, -10.0)
    m_a = an.solve_equilibrium(p_a)
    print(f"alpha = {alpha}: P(P_D <= 0 dBm) = {an.cdf_constrained(p_a, m_a, 1e-3):.4f}")
