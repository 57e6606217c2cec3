# %% [markdown]
# SINR target, capping and the role of noise
# ==========================================
#
# Raising the SINR target pushes more links to the power cap. With the
# desired-link gain lowered to mu = 1e-4 the effect is easy to see.

# %%
from d2dpower import ExperimentConfig
from d2dpower import analytic as an

cfg = ExperimentConfig(mu=1e-4)
for beta_db in (-15.0, -10.0, -5.0):
    params = cfg.network_params(3.0, beta_db)
    moments = an.solve_equilibrium(params)
    capped = 1.0 - an.cdf_exact(params, moments, params.p_max * (1 - 1e-12))
    print(f"beta = {beta_db:+.0f} dB: E_D = {moments.e_d:.4f}, fraction at the cap = {capped:.4f}")

# %% [markdown]
# Noise only matters when it is comparable to the interference. Turning it
# up by 60 dB opens a visible gap between the exact and noise-free curves,
# while the bound stays above the exact value.

# %%
for noise_dbm in (-100.0, -40.0):
    params = ExperimentConfig(noise_dbm=noise_dbm).network_params(3.0, -10.0)
    moments = an.solve_equilibrium(params)
    p = 1e-2
    print(f"noise {noise_dbm:.0f} dBm at 10 dBm: exact {an.cdf_exact(params, moments, p):.4e}, "
          f"no-noise {an.cdf_interference_limited(params, moments, p):.4e}, "
          f"bound {an.cdf_upper_bound(params, moments, p):.4e}")
