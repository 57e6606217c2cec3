"""End-to-end acceptance checks at the stated tolerances.

Each test records one PASS/FAIL line, listed in the "acceptance criteria"
section at the end of the pytest run.
"""

import math
import time
from functools import lru_cache

import numpy as np

from conftest import record_criterion
from d2dpower import analytic as an
from d2dpower import harness, oracles
from d2dpower import simulator as sim
from d2dpower.config import ExperimentConfig

CFG = ExperimentConfig()
ALPHAS = (2.5, 3.0, 4.0, 5.0)
BETAS = (-15.0, -10.0, -5.0)
LOG_GRID = harness.log_grid(CFG, 50)


@lru_cache(maxsize=None)
def solved(alpha, beta_db, noise_free=False, mu=None):
    changes = {}
    if noise_free:
        changes["sigma2"] = 0.0
    if mu is not None:
        changes["mu"] = mu
    params = CFG.network_params(alpha, beta_db, **changes)
    return params, an.solve_equilibrium(params)


@lru_cache(maxsize=None)
def simulated(alpha, beta_db, mu=None):
    cfg = CFG if mu is None else CFG.with_overrides(mu=mu)
    return harness.simulate_point(cfg, alpha, beta_db, threads=4)


def test_criterion_1_noise_free_closed_form():
    models = {a: solved(a, -10.0, noise_free=True) for a in ALPHAS}
    t0 = time.perf_counter()
    worst = 0.0
    for params, moments in models.values():
        for p in LOG_GRID:
            worst = max(worst, abs(harness.cdf_by_quadrature(params, moments, p)
                                   - an.cdf_interference_limited(params, moments, p)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed <= 10.0
    record_criterion("1", ok, f"max |quadrature - closed form| = {worst:.2e} (tol 1e-10), {elapsed:.2f} s")
    assert worst <= 1e-10
    assert elapsed <= 10.0


def _alpha4_gaps():
    params, moments = solved(4.0, -10.0)
    exact_gap, approx_gap, n_arg = 0.0, 0.0, 0
    for p in LOG_GRID:
        closed = an.cdf_lossy(params, moments, p)
        exact_gap = max(exact_gap, abs(an.cdf_exact(params, moments, p) - closed))
        if an.lossy_erfc_argument(params, moments, p) >= 1.0:
            n_arg += 1
            approx_gap = max(approx_gap, abs(an.cdf_lossy(params, moments, p, use_approx=True) - closed))
    return exact_gap, approx_gap, n_arg


def test_criterion_2a_alpha4_exact_erfc_form():
    exact_gap, _, _ = _alpha4_gaps()
    record_criterion("2a", exact_gap <= 1e-8, f"max |integral - exact erfc form| = {exact_gap:.2e} (tol 1e-8)")
    assert exact_gap <= 1e-8


def test_criterion_2b_alpha4_approximate_erfc_branch():
    _, approx_gap, n_arg = _alpha4_gaps()
    ok = approx_gap <= 0.05
    record_criterion("2b", ok, f"max |approx - exact| where erfc argument >= 1 = {approx_gap:.3g} "
                               f"over {n_arg} points (tol 0.05)")
    assert n_arg > 0
    assert approx_gap <= 0.05


def test_criterion_3_bound_dominance():
    worst, max_gap = math.inf, 0.0
    for a in ALPHAS:
        for b in BETAS:
            params, moments = solved(a, b)
            for p in LOG_GRID:
                gap = an.cdf_upper_bound(params, moments, p) - an.cdf_exact(params, moments, p)
                worst, max_gap = min(worst, gap), max(max_gap, gap)
    ok = worst >= 0.0
    record_criterion("3", ok, f"min(bound - exact) = {worst:.2e}, max gap = {max_gap:.3e} "
                              f"over {len(ALPHAS) * len(BETAS) * len(LOG_GRID)} points")
    assert ok


def test_criterion_4_noise_negligible():
    grid = CFG.grid_watts()
    worst = 0.0
    for a in ALPHAS:
        for b in BETAS:
            params, moments = solved(a, b)
            for p in grid[grid < params.p_max]:
                worst = max(worst, abs(an.cdf_exact(params, moments, p)
                                       - an.cdf_interference_limited(params, moments, p)))
    ok = worst <= 0.05
    record_criterion("4", ok, f"max |exact - interference-limited| on the dBm grid = {worst:.2e} (tol 0.05)")
    assert ok


def test_criterion_5_equilibrium_consistency():
    params, moments = solved(3.0, -10.0)
    residual_ok = moments.residual <= 1e-8 * max(1.0, moments.e_d)
    # default oracle: 2000 log-q nodes x 4000 inner nodes, against 12 breakpoints of adaptive quadrature
    reference = oracles.picard_dense(params)
    rel = abs(reference - moments.e_d) / reference
    ok = residual_ok and rel <= 1e-5
    record_criterion("5", ok, f"residual = {moments.residual:.2e} (tol {1e-8 * max(1, moments.e_d):.1e}), "
                              f"e_d = {moments.e_d:.10g}, dense oracle rel. diff = {rel:.2e} (tol 1e-5)")
    assert residual_ok
    assert rel <= 1e-5


def _pointwise_ordered(lower, upper):
    return bool(np.all(np.asarray(lower) <= np.asarray(upper) + 1e-12))


def test_criterion_6_simulation_matches_analysis():
    t0 = time.perf_counter()
    _, _, _, samples, summary = simulated(3.0, -10.0)
    grid = CFG.grid_watts()

    def curves(alpha, beta_db, mu=None):
        params, moments, _, s, summ = simulated(alpha, beta_db, mu)
        exact = np.array([an.cdf_constrained(params, moments, p) for p in grid])
        return exact, sim.empirical_cdf(s, grid), summ

    alpha_curves = [curves(a, -10.0) for a in (2.5, 3.0, 3.5, 4.0)]
    beta_curves = [curves(3.0, b, mu=1e-4) for b in BETAS]
    elapsed = time.perf_counter() - t0

    alpha_ok = all(_pointwise_ordered(lo[k], hi[k]) for lo, hi in zip(alpha_curves, alpha_curves[1:])
                   for k in (0, 1))
    beta_ok = all(_pointwise_ordered(hi[k], lo[k]) for lo, hi in zip(beta_curves, beta_curves[1:])
                  for k in (0, 1))
    capped = [c[2].fraction_capped for c in beta_curves]
    capped_ok = all(a <= b for a, b in zip(capped, capped[1:]))
    ok = (summary.ks <= 0.05 and summary.n_samples >= 10_000 and alpha_ok and beta_ok and capped_ok
          and elapsed <= 300)
    record_criterion("6", ok, f"KS = {summary.ks:.4f} (tol 0.05) over {summary.n_samples} links; "
                              f"alpha ordering {'holds' if alpha_ok else 'BROKEN'}, beta ordering "
                              f"{'holds' if beta_ok else 'BROKEN'}, capped fraction "
                              f"{', '.join(f'{c:.3f}' for c in capped)}; {elapsed:.0f} s")
    assert summary.n_samples >= 10_000
    assert summary.ks <= 0.05
    assert alpha_ok and beta_ok and capped_ok
    assert elapsed <= 300


def _cap_free_drops(cfg, drops=200):
    """Iteration counts of drops whose targets are reachable without touching the cap."""
    params = cfg.network_params(3.0, -10.0)
    settings = cfg.settings()
    counts = []
    for trial in range(drops):
        real, trace = sim.simulate_drop(params, settings, cfg.master_seed, trial)
        target = sim.uncapped_fixed_point(real, params)
        if target is not None and np.all(target > 0) and target.max() <= params.p_max:
            counts.append(trace.iterations_used if trace.converged else math.inf)
    return np.array(counts)


def test_criterion_7_power_control_convergence():
    _, _, _, _, summary = simulated(3.0, -10.0)
    within = summary.fraction_within_100
    # reported, not asserted: the default profile has no cap-free drops, so
    # count them in a sparse, strong-link profile where they are common
    default_free = _cap_free_drops(CFG, drops=50)
    free = _cap_free_drops(CFG.with_overrides(mu=1.0, lambda_d=1e-4, max_iter=400))
    status, two_link = harness.check_two_link(CFG)
    ok = within >= 0.95 and status == "pass"
    record_criterion("7", ok, f"{within:.1%} of default drops settle within 100 iterations (need 95%); "
                              f"two-link rel. diff = {two_link['rel_diff']:.1e} (tol 1e-6); "
                              f"[info] cap-free drops: {len(default_free)}/50 at defaults, "
                              f"{len(free)}/200 at mu=1, lambda_d=1e-4 of which "
                              f"{np.mean(free <= 100) if len(free) else math.nan:.0%} settle within 100 "
                              f"(median {np.median(free) if len(free) else math.nan:.0f})")
    assert within >= 0.95
    assert two_link["rel_diff"] <= 1e-6


def test_criterion_8_stochastic_oracles():
    ks_status, ks = harness.check_distance_law(CFG, n=100_000)
    lap_status, lap = harness.check_laplace(CFG)
    ok = ks_status == "pass" and lap_status == "pass"
    record_criterion("8", ok, f"link distance KS p = {ks['pvalue']:.3f} (need >= 0.01); Laplace z-scores "
                              + ", ".join(f"s={s:g}: {z:+.2f}" for s, z in zip(lap["s"], lap["z"]))
                              + " (need |z| <= 3)")
    assert ks["pvalue"] >= 0.01
    assert all(abs(z) <= 3 for z in lap["z"])
