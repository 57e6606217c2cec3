"""Experiment orchestration behind the ``analytic``, ``simulate`` and ``validate`` commands."""

from __future__ import annotations

import json
import logging
import math
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analytic as an
from . import oracles
from . import simulator as sim
from .config import ExperimentConfig
from .core import ConstantPower, NetworkParams, dbm_to_watt, integrate_semiinfinite

log = logging.getLogger(__name__)

CSV_HEADER = ("p_dBm", "cdf_exact", "cdf_il", "cdf_bound")
CSV_HEADER_SIM = CSV_HEADER + ("cdf_empirical",)


def point_name(alpha: float, beta_db: float) -> str:
    return f"alpha{alpha:g}_beta{beta_db:+g}dB"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# analytic columns

def analytic_columns(params: NetworkParams, moments: an.EquilibriumMoments, grid) -> dict:
    """Exact, interference-limited and bound CDFs of the capped power.

    The cap rule (value 1 at and above ``p_max``) is applied to all three.
    Without noise the bound degenerates; its ``k2 -> 0`` limit is the
    interference-limited curve and that is what gets written.
    """
    exact, il, bound = [], [], []
    for p in grid:
        if p >= params.p_max:
            exact.append(1.0), il.append(1.0), bound.append(1.0)
            continue
        exact.append(an.cdf_exact(params, moments, p))
        il.append(an.cdf_interference_limited(params, moments, p))
        try:
            bound.append(min(1.0, an.cdf_upper_bound(params, moments, p)))
        except an.DegenerateBoundError:
            bound.append(il[-1])
    return {"cdf_exact": np.array(exact), "cdf_il": np.array(il), "cdf_bound": np.array(bound)}


def _metadata(cfg: ExperimentConfig, alpha, beta_db, params, moments, **extra) -> dict:
    meta = {
        "alpha": alpha,
        "beta_db": beta_db,
        "e_c": moments.e_c,
        "e_d": moments.e_d,
        "residual": moments.residual,
        "iterations": moments.iterations,
        "seed": cfg.master_seed,
        "config_hash": cfg.digest(),
        "noise_degenerate": params.noise_at_unit_gain == 0.0,
    }
    meta.update(extra)
    return meta


def cmd_analytic(cfg: ExperimentConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid_dbm = cfg.grid_dbm()
    grid = dbm_to_watt(grid_dbm)
    written = []
    for alpha, beta_db in cfg.sweep_points():
        params = cfg.network_params(alpha, beta_db)
        moments = an.solve_equilibrium(params)
        cols = analytic_columns(params, moments, grid)
        name = point_name(alpha, beta_db)
        path = out / f"{name}.csv"
        write_csv(path, CSV_HEADER, zip(grid_dbm, cols["cdf_exact"], cols["cdf_il"], cols["cdf_bound"]))
        _write_json(out / f"{name}.json", _metadata(cfg, alpha, beta_db, params, moments))
        written.append(path)
        log.info("wrote %s (e_d=%.6g)", path, moments.e_d)
    return written


# ---------------------------------------------------------------------------
# simulation vs analysis

def ks_distance_constrained(samples, params: NetworkParams, moments: an.EquilibriumMoments) -> float:
    """Sup-distance between the empirical CDF of ``samples`` and the capped analytic CDF.

    Both curves are right-continuous step/continuous functions; the supremum
    is attained at a sample value or at the cap, from the left or the right.
    """
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    pts = np.unique(np.append(xs, params.p_max))
    right = np.searchsorted(xs, pts, side="right") / n
    left = np.searchsorted(xs, pts, side="left") / n
    d = 0.0
    for v, fr, fl in zip(pts, right, left):
        if v >= params.p_max:
            f_right = 1.0
            f_left = 1.0 if v > params.p_max else an.cdf_exact(params, moments, v)
        else:
            f_right = f_left = an.cdf_exact(params, moments, v)
        d = max(d, abs(fr - f_right), abs(fl - f_left))
    return d


@dataclass
class PointComparison:
    alpha: float
    beta_db: float
    ks: float
    n_samples: int
    max_bound_gap: float
    runtime_s: float
    fraction_converged: float
    mean_iterations: float
    fraction_within_100: float
    fraction_capped: float
    e_d: float


@dataclass
class ComparisonReport:
    points: list[PointComparison] = field(default_factory=list)
    status: str = "ok"
    ks_threshold: float = 0.05
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"status": self.status, "ks_threshold": self.ks_threshold, "notes": self.notes,
                "points": [asdict(p) for p in self.points]}


def simulate_point(cfg: ExperimentConfig, alpha: float, beta_db: float, threads: int = 1):
    """Solve the analysis and run the Monte Carlo drops for one sweep point."""
    params = cfg.network_params(alpha, beta_db)
    t0 = time.perf_counter()
    moments = an.solve_equilibrium(params)
    traces = sim.simulate_drops(params, cfg.settings(), cfg.drops, cfg.master_seed, threads)
    samples = sim.pooled_powers(traces)
    converged = [t for t in traces if t.converged]
    if not converged:
        raise sim.SimulationError(f"no drop converged at alpha={alpha}, beta={beta_db} dB")
    grid = cfg.grid_watts()
    below = grid[grid < params.p_max]
    gaps = []
    if params.noise_at_unit_gain > 0:
        gaps = [an.cdf_upper_bound(params, moments, p) - an.cdf_exact(params, moments, p) for p in below]
    ks = ks_distance_constrained(samples, params, moments) if samples.size else math.nan
    iters = np.array([t.iterations_used for t in traces])
    summary = PointComparison(
        alpha=alpha,
        beta_db=beta_db,
        ks=float(ks),
        n_samples=int(samples.size),
        max_bound_gap=float(max(gaps)) if gaps else math.nan,
        runtime_s=time.perf_counter() - t0,
        fraction_converged=len(converged) / len(traces),
        mean_iterations=float(iters.mean()),
        fraction_within_100=float(np.mean([t.converged and t.iterations_used <= 100 for t in traces])),
        fraction_capped=float(np.mean(samples >= params.p_max)) if samples.size else math.nan,
        e_d=moments.e_d,
    )
    return params, moments, traces, samples, summary


def cmd_simulate(cfg: ExperimentConfig, out_dir, threads: int | None = None) -> ComparisonReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or cfg.threads
    report = ComparisonReport(ks_threshold=cfg.ks_threshold)
    grid_dbm = cfg.grid_dbm()
    grid = dbm_to_watt(grid_dbm)
    for alpha, beta_db in cfg.sweep_points():
        params, moments, traces, samples, summary = simulate_point(cfg, alpha, beta_db, threads)
        report.points.append(summary)
        cols = analytic_columns(params, moments, grid)
        emp = sim.empirical_cdf(samples, grid) if samples.size else np.full(grid.size, math.nan)
        name = point_name(alpha, beta_db)
        write_csv(out / f"{name}.csv", CSV_HEADER_SIM,
                  zip(grid_dbm, cols["cdf_exact"], cols["cdf_il"], cols["cdf_bound"], emp))
        _write_json(out / f"{name}.json", _metadata(cfg, alpha, beta_db, params, moments,
                                                    drops=cfg.drops, n_samples=summary.n_samples))
        if summary.fraction_converged < 0.5:
            report.status = "warning"
            report.notes.append(f"{name}: only {summary.fraction_converged:.0%} of drops converged")
        log.info("%s: KS=%.4f over %d links", name, summary.ks, summary.n_samples)
    _write_json(out / "report.json", report.to_dict())
    return report


# ---------------------------------------------------------------------------
# validation suite

@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "skipped-degenerate"
    measured: dict
    message: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "fail"


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(c.failed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.failed]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [asdict(c) for c in self.checks]}


def _check(name, fn) -> CheckResult:
    try:
        status, measured = fn()
        return CheckResult(name, status, measured)
    except Exception as exc:  # a crashing check is a failing check
        return CheckResult(name, "fail", {}, f"{type(exc).__name__}: {exc}")


def log_grid(cfg: ExperimentConfig, points: int = 50) -> np.ndarray:
    """``points`` log-spaced powers strictly below the cap."""
    hi = min(cfg.grid_max_dbm, cfg.p_max_dbm) - 1e-6
    return dbm_to_watt(np.linspace(cfg.grid_min_dbm, hi, points))


def cdf_by_quadrature(params, moments, p) -> float:
    """The CDF integral evaluated numerically even when k2 = 0."""
    k1, k2 = an.k_constants(params, moments, p)
    half = params.alpha / 2
    return integrate_semiinfinite(lambda r: math.exp(-k1 * r - k2 * r ** half), scale=1.0 / k1)


def check_noise_free_closed_form(cfg, alphas=(2.5, 3.0, 4.0, 5.0), tol=1e-10):
    grid = log_grid(cfg)
    worst = 0.0
    for alpha in alphas:
        for beta_db in cfg.betas_db:
            params = cfg.network_params(alpha, beta_db, sigma2=0.0)
            moments = an.solve_equilibrium(params)
            for p in grid:
                worst = max(worst, abs(cdf_by_quadrature(params, moments, p)
                                       - an.cdf_interference_limited(params, moments, p)))
    return ("pass" if worst <= tol else "fail"), {"max_abs_diff": worst, "tol": tol}


def check_alpha4_closed_form(cfg, beta_dbs=None, tol_exact=1e-8, tol_approx=0.05):
    """CDF integral vs the erfc closed form at alpha = 4.

    Returns the statuses of the exact and approximate branches separately.
    """
    grid = log_grid(cfg)
    worst_exact, worst_approx, n_approx = 0.0, 0.0, 0
    for beta_db in beta_dbs or cfg.betas_db:
        params = cfg.network_params(4.0, beta_db)
        if params.noise_at_unit_gain == 0:
            return None
        moments = an.solve_equilibrium(params)
        for p in grid:
            exact = an.cdf_exact(params, moments, p)
            closed = an.cdf_lossy(params, moments, p)
            worst_exact = max(worst_exact, abs(exact - closed))
            if an.lossy_erfc_argument(params, moments, p) >= 1.0:
                n_approx += 1
                worst_approx = max(worst_approx, abs(an.cdf_lossy(params, moments, p, True) - closed))
    return (
        ("pass" if worst_exact <= tol_exact else "fail", {"max_abs_diff": worst_exact, "tol": tol_exact}),
        ("pass" if worst_approx <= tol_approx else "fail",
         {"max_abs_diff": worst_approx, "tol": tol_approx, "points_with_arg_ge_1": n_approx}),
    )


def check_bound_dominance(cfg, alphas=(2.5, 3.0, 4.0, 5.0), beta_dbs=(-15.0, -10.0, -5.0)):
    grid = log_grid(cfg)
    worst_violation, max_gap = 0.0, 0.0
    for alpha in alphas:
        for beta_db in beta_dbs:
            params = cfg.network_params(alpha, beta_db)
            if params.noise_at_unit_gain == 0:
                return "skipped-degenerate", {"reason": "zero noise: bound undefined"}
            moments = an.solve_equilibrium(params)
            for p in grid:
                gap = an.cdf_upper_bound(params, moments, p) - an.cdf_exact(params, moments, p)
                worst_violation = min(worst_violation, gap)
                max_gap = max(max_gap, gap)
    status = "pass" if worst_violation >= -1e-12 else "fail"
    return status, {"max_gap": max_gap, "worst_violation": worst_violation}


def check_noise_negligible(cfg, tol=0.05):
    grid = cfg.grid_watts()
    worst = 0.0
    for alpha, beta_db in cfg.sweep_points():
        params = cfg.network_params(alpha, beta_db)
        moments = an.solve_equilibrium(params)
        for p in grid[grid < params.p_max]:
            worst = max(worst, abs(an.cdf_exact(params, moments, p)
                                   - an.cdf_interference_limited(params, moments, p)))
    return ("pass" if worst <= tol else "fail"), {"max_abs_diff": worst, "tol": tol}


def check_equilibrium(cfg, oracle_tol=1e-5, roundtrip_tol=1e-6):
    alpha, beta_db = cfg.sweep_points()[0]
    params = cfg.network_params(alpha, beta_db)
    moments = an.solve_equilibrium(params)
    residual_ok = moments.residual <= 1e-8 * max(1.0, moments.e_d)
    reference = oracles.picard_dense(params)
    rel = abs(reference - moments.e_d) / max(reference, 1e-300)
    again = an.capped_moment(params, moments)
    roundtrip = abs(again - moments.e_d) / max(moments.e_d, 1e-300)
    ok = residual_ok and rel <= oracle_tol and roundtrip <= roundtrip_tol
    return ("pass" if ok else "fail"), {
        "e_d": moments.e_d, "residual": moments.residual, "iterations": moments.iterations,
        "oracle_e_d": reference, "oracle_rel_diff": rel, "roundtrip_rel_diff": roundtrip}


LAPLACE_SCENARIO = dict(lambda_c=0.02, lambda_d=0.02, alpha=4.0, power=1.0, isd=200.0)


def check_laplace(cfg, drops=300, s_values=(0.1, 1.0, 10.0), z_max=3.0):
    sc = LAPLACE_SCENARIO
    params = NetworkParams(lambda_c=sc["lambda_c"], lambda_d=sc["lambda_d"], alpha=sc["alpha"], mu=1.0,
                           beta_d=1.0, sigma2=0.0, p_max=sc["power"],
                           cellular_power_law=ConstantPower(sc["power"]))
    cell = sim.Hexagon(sc["isd"])
    reals = [sim.drop_realization(params, cell, sim.trial_rng(cfg.master_seed, 10_000 + k))
             for k in range(drops)]
    mean, se = sim.measure_interference_laplace(reals, params, s_values, sc["power"])
    moments = an.EquilibriumMoments(sc["power"] ** params.delta, sc["power"] ** params.delta)
    theory = [an.laplace_interference_total(params, moments, s) for s in s_values]
    z = [(m - t) / e for m, t, e in zip(mean, theory, se)]
    ok = all(abs(v) <= z_max for v in z)
    return ("pass" if ok else "fail"), {"s": list(s_values), "mc": mean.tolist(), "se": se.tolist(),
                                        "theory": theory, "z": z}


def check_distance_law(cfg, n=100_000, alpha_level=0.01):
    rng = sim.trial_rng(cfg.master_seed, 20_000)
    x = sim.sample_link_distance(cfg.lambda_d, rng, n)
    stat, pvalue = oracles.ks_against_cdf(x, lambda v: sim.link_distance_cdf(v, cfg.lambda_d))
    return ("pass" if pvalue >= alpha_level else "fail"), {"ks": stat, "pvalue": pvalue, "n": n}


def two_link_realization(params: NetworkParams, gains, spacing=10.0) -> sim.Realization:
    """Two-link realization whose path gains equal ``gains`` (receiver x transmitter)."""
    gains = np.asarray(gains, dtype=float)
    tx = np.array([[0.0, 0.0], [spacing, 0.0]])
    rx = np.array([[0.0, 1.0], [spacing, 1.0]])
    dd = sim.cdist(rx, tx)
    loss = 10 ** (-params.pathloss_offset_db / 10)
    fading = gains / (dd ** -params.alpha * loss)
    return sim.Realization(sim.Hexagon(1e6), np.empty((0, 2)), np.empty(0), tx, rx, fading,
                           np.empty((2, 0)), np.ones(2, bool))


def check_two_link(cfg, tol=1e-6):
    params = NetworkParams(lambda_c=0.0, lambda_d=1e-4, alpha=3.0, mu=1.0, beta_d=0.5, sigma2=1e-3,
                           p_max=10.0)
    gains = [[1.0, 0.2], [0.3, 0.8]]
    real = two_link_realization(params, gains)
    expected = oracles.two_link_fixed_point(gains, [params.sigma2] * 2, params.beta_d)
    trace = sim.run_power_control(real, params, gamma=cfg.gamma, max_iter=5000, tol=1e-10,
                                  p_init=1e-6)
    rel = float(np.max(np.abs(trace.final_powers - expected) / expected))
    return ("pass" if rel <= tol else "fail"), {"expected": expected.tolist(),
                                               "reached": trace.final_powers.tolist(),
                                               "rel_diff": rel, "iterations": trace.iterations_used}


def cmd_validate(cfg: ExperimentConfig, fault: str | None = None) -> ValidationReport:
    """Run the oracle suite. ``fault="k1_sign_flip"`` is a self-test hook."""
    report = ValidationReport()
    ctx = an.injected_k1_sign_flip() if fault == "k1_sign_flip" else nullcontext()
    if fault not in (None, "k1_sign_flip"):
        raise ValueError(f"unknown fault {fault!r}")
    with ctx:
        report.checks.append(_check("noise_free_closed_form", lambda: check_noise_free_closed_form(cfg)))
        try:
            erfc_checks = check_alpha4_closed_form(cfg)
        except Exception as exc:
            failed = ("fail", {})
            erfc_checks = (failed, failed)
            message = f"{type(exc).__name__}: {exc}"
        else:
            message = ""
            if erfc_checks is None:
                skipped = ("skipped-degenerate", {"reason": "zero noise: erfc form degenerate"})
                erfc_checks = (skipped, skipped)
        for name, (status, measured) in zip(("alpha4_erfc_exact", "alpha4_erfc_approx"), erfc_checks):
            report.checks.append(CheckResult(name, status, measured, message))
        report.checks.append(_check("bound_dominance", lambda: check_bound_dominance(cfg)))
        report.checks.append(_check("noise_negligible", lambda: check_noise_negligible(cfg)))
        report.checks.append(_check("equilibrium", lambda: check_equilibrium(cfg)))
        report.checks.append(_check("laplace_monte_carlo", lambda: check_laplace(cfg)))
        report.checks.append(_check("link_distance_ks", lambda: check_distance_law(cfg)))
        report.checks.append(_check("two_link_power_control", lambda: check_two_link(cfg)))
    return report


def write_validation(report: ValidationReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "validation.json"
    _write_json(path, report.to_dict())
    return path


__all__ = [
    "CSV_HEADER", "CSV_HEADER_SIM", "ComparisonReport", "PointComparison", "ValidationReport",
    "CheckResult", "cmd_analytic", "cmd_simulate", "cmd_validate", "ks_distance_constrained",
    "analytic_columns", "point_name",
]
