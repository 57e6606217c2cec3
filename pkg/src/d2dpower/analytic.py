"""Equilibrium transmit-power distribution of underlaid D2D links.

The typical link needs power ``P = beta * d**alpha * (I + noise) / h`` to meet
its SINR target. Averaging over the Rayleigh fade, the Poisson interference
field and the nearest-neighbour link distance gives the CDF

    F(p) = int_0^inf exp(-k1 r - k2 r**(alpha/2)) dr

whose ``k1`` depends on the fractional moment ``E_D = E[P**(2/alpha)]`` of
the very distribution being computed. :func:`solve_equilibrium` closes that
loop under the power cap.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .core import (
    DEFAULT_REL_TOL,
    NetworkParams,
    ParameterError,
    find_root_increasing,
    gamma_fn,
    erfc_exact,
    integrate_semiinfinite,
    normalized_sinc,
)

CDF_KINDS = (
    "analytic",
    "analytic-constrained",
    "interference-limited",
    "lossy-erfc",
    "lossy-erfc-approx",
    "upper-bound",
    "empirical",
)


class DegenerateBoundError(ParameterError):
    """The Hölder bound needs a positive noise term (k2 > 0)."""


class UnsupportedConfigurationError(ParameterError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate: float, residuals: list[float]):
        super().__init__(f"{message}; last iterate {last_iterate!r}, "
                         f"final residual {residuals[-1] if residuals else math.nan!r}")
        self.last_iterate = last_iterate
        self.residuals = residuals


@dataclass(frozen=True)
class EquilibriumMoments:
    """Fractional moments E[P_C^(2/alpha)] and E[P_D^(2/alpha)]."""

    e_c: float
    e_d: float
    residual: float = 0.0
    iterations: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not self.e_c >= 0:
            raise ParameterError("e_c must be non-negative")
        if not self.e_d >= 0:
            raise ParameterError("e_d must be non-negative")


@dataclass(frozen=True)
class CdfCurve:
    grid: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if self.kind not in CDF_KINDS:
            raise ParameterError(f"unknown curve kind {self.kind!r}")
        if grid.shape != values.shape or grid.ndim != 1:
            raise ParameterError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("grid must be strictly increasing")
        if np.any((values < 0) | (values > 1)):
            raise ParameterError("CDF values must lie in [0, 1]")
        if np.any(np.diff(values) < -1e-12):
            raise ParameterError("CDF values must be non-decreasing")


@dataclass(frozen=True)
class HolderExponents:
    u: float
    v: float
    # u - 1 and its log, kept separately because u (or v) rounds to 1.0 at
    # the extremes and u - 1 itself can under- or overflow
    excess: float
    log_excess: float = math.nan

    def __post_init__(self):
        if not (self.u >= 1 and self.v >= 1 and self.excess >= 0):
            raise ParameterError("Hölder exponents must exceed 1")


# test-only fault injection: flips the sign of the interference term in k1
_k1_sign = 1.0


@contextmanager
def injected_k1_sign_flip():
    global _k1_sign
    _k1_sign = -1.0
    try:
        yield
    finally:
        _k1_sign = 1.0


def _check_power(p: float) -> None:
    if not p > 0:
        raise ParameterError(f"power must be positive, got {p}")


def _interference_load(params: NetworkParams, moments: EquilibriumMoments) -> float:
    return moments.e_d + params.lambda_c / params.lambda_d * moments.e_c


def k_constants(params: NetworkParams, moments: EquilibriumMoments, p: float) -> tuple[float, float]:
    _check_power(p)
    d = params.delta
    ratio = params.beta_d / (params.mu * p)
    k1 = 1.0 + _k1_sign * ratio ** d * _interference_load(params, moments) / normalized_sinc(d)
    k2 = ratio * params.noise_at_unit_gain / (math.pi * params.lambda_d) ** (params.alpha / 2)
    return k1, k2


def _cdf_integral(k1: float, k2: float, alpha: float, rel_tol: float) -> float:
    if k2 == 0.0:
        return 1.0 / k1
    half = alpha / 2
    scale = min(1.0 / k1, k2 ** (-1.0 / half)) if k1 > 0 else k2 ** (-1.0 / half)
    return integrate_semiinfinite(lambda r: math.exp(-k1 * r - k2 * r ** half), rel_tol, scale=scale)


def cdf_exact(params: NetworkParams, moments: EquilibriumMoments, p: float,
              rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Unconstrained equilibrium CDF P{P_D <= p}."""
    k1, k2 = k_constants(params, moments, p)
    return _cdf_integral(k1, k2, params.alpha, rel_tol)


def cdf_constrained(params: NetworkParams, moments: EquilibriumMoments, p: float,
                    rel_tol: float = DEFAULT_REL_TOL) -> float:
    """CDF of min(P_D, p_max): the unconstrained CDF below the cap, 1 at and above it."""
    _check_power(p)
    if p >= params.p_max:
        return 1.0
    return cdf_exact(params, moments, p, rel_tol)


def cdf_interference_limited(params: NetworkParams, moments: EquilibriumMoments, p: float) -> float:
    _check_power(p)
    d = params.delta
    ratio = params.beta_d / (params.mu * p)
    return 1.0 / (1.0 + ratio ** d * _interference_load(params, moments) / normalized_sinc(d))


def lossy_constants(params: NetworkParams, moments: EquilibriumMoments, p: float) -> tuple[float, float]:
    """k1', k2' of the alpha = 4 closed form."""
    _check_power(p)
    if not math.isclose(params.alpha, 4.0, rel_tol=0, abs_tol=1e-12):
        raise UnsupportedConfigurationError(f"the erfc form needs alpha = 4, got {params.alpha}")
    ratio = params.beta_d / (params.mu * p)
    k1 = 1.0 + math.pi / 2 * math.sqrt(ratio) * _interference_load(params, moments)
    k2 = ratio * params.noise_at_unit_gain / (math.pi * params.lambda_d) ** 2
    return k1, k2


def lossy_closed_form(k1: float, k2: float, use_approx: bool = False) -> float:
    """int_0^inf exp(-k1 r - k2 r^2) dr in terms of erfc."""
    if not k2 > 0:
        raise DegenerateBoundError("k2' = 0: use the interference-limited closed form")
    if use_approx:
        return math.sqrt(math.pi / k2) / 12.0 * (1.0 + 3.0 * math.exp(-k1 * k1 / (12.0 * k2)))
    a = k1 / (2.0 * math.sqrt(k2))
    # exp(a^2) overflows before erfc(a) underflows; switch to the scaled form
    scaled = math.exp(a * a) * erfc_exact(a) if a < 25.0 else float(special.erfcx(a))
    return 0.5 * math.sqrt(math.pi / k2) * scaled


def cdf_lossy(params: NetworkParams, moments: EquilibriumMoments, p: float,
              use_approx: bool = False) -> float:
    k1, k2 = lossy_constants(params, moments, p)
    if k2 == 0.0:
        raise DegenerateBoundError("noise is zero: use cdf_interference_limited")
    return lossy_closed_form(k1, k2, use_approx)


def lossy_erfc_argument(params: NetworkParams, moments: EquilibriumMoments, p: float) -> float:
    k1, k2 = lossy_constants(params, moments, p)
    return k1 / (2.0 * math.sqrt(k2))


# ---------------------------------------------------------------------------
# Hölder upper bound

def solve_holder_condition(rhs: float, alpha: float, *, log_rhs: float | None = None) -> HolderExponents:
    """Solve u^alpha - 2u^(alpha-1) + u^(alpha-2) = rhs for u > 1.

    The left side is u^(alpha-2) (u-1)^2. Writing u = 1 + exp(t) turns it
    into a strictly increasing function of t on the whole real line, which
    keeps the solve well conditioned when rhs is tiny or huge.
    """
    if not 2.0 < alpha < 6.0:
        raise ParameterError(f"alpha must lie in (2, 6), got {alpha}")
    if log_rhs is None:
        if not rhs > 0:
            raise DegenerateBoundError("Hölder condition needs a positive right-hand side")
        log_rhs = math.log(rhs)

    def log_lhs(t):
        return (alpha - 2.0) * math.log1p(math.exp(t)) + 2.0 * t if t < 700 else alpha * t

    lo = 0.5 * log_rhs - 1.0
    while log_lhs(lo) > log_rhs:
        lo -= abs(lo) + 1.0
    t = find_root_increasing(log_lhs, log_rhs, lo)
    w = math.exp(t) if t < 709.0 else math.inf
    return HolderExponents(u=1.0 + w, v=1.0 + math.exp(-t) if t > -709.0 else math.inf,
                           excess=w, log_excess=t)


def holder_exponents(k1: float, k2: float, alpha: float) -> HolderExponents:
    if not k2 > 0:
        raise DegenerateBoundError("k2 = 0: the bound is undefined; use the interference-limited CDF")
    if not k1 >= 1:
        raise ParameterError(f"k1 must be at least 1, got {k1}")
    g = gamma_fn(2.0 / alpha + 1.0)
    log_rhs = 2.0 * (math.log(k2) - 1.0) - alpha * (math.log(k1) - 1.0 + math.log(g))
    return solve_holder_condition(math.nan, alpha, log_rhs=log_rhs)


def holder_bound_value(k1: float, k2: float, alpha: float) -> float:
    t = holder_exponents(k1, k2, alpha).log_excess
    d = 2.0 / alpha
    # with w = e^t: 1/u = 1/(1+w), 1/v = w/(1+w), log u = log(1+w), log v = log(1+1/w)
    inv_u = 1.0 / (1.0 + math.exp(t)) if t < 709.0 else 0.0
    inv_v = 1.0 / (1.0 + math.exp(-t)) if t > -709.0 else 0.0
    log_u = float(np.logaddexp(0.0, t))
    log_v = float(np.logaddexp(0.0, -t))
    log_bound = (-inv_u * (log_u + math.log(k1))
                 + inv_v * (math.lgamma(d + 1.0) - d * (log_v + math.log(k2))))
    return math.exp(log_bound)


def cdf_upper_bound(params: NetworkParams, moments: EquilibriumMoments, p: float) -> float:
    """Hölder upper bound on the unconstrained CDF. Not clipped to 1."""
    k1, k2 = k_constants(params, moments, p)
    return holder_bound_value(k1, k2, params.alpha)


# ---------------------------------------------------------------------------
# interference Laplace transforms (unit-mean Rayleigh fading at interferers)

def _laplace(density: float, moment: float, s: float, alpha: float) -> float:
    if s < 0:
        raise ParameterError("Laplace variable must be non-negative")
    d = 2.0 / alpha
    return math.exp(-math.pi * density * s ** d * moment / normalized_sinc(d))


def laplace_interference_cellular(params: NetworkParams, moments: EquilibriumMoments, s: float) -> float:
    return _laplace(params.lambda_c, moments.e_c, s, params.alpha)


def laplace_interference_d2d(params: NetworkParams, moments: EquilibriumMoments, s: float) -> float:
    """D2D part, integrating over the whole plane (the exclusion disc is ignored)."""
    return _laplace(params.lambda_d, moments.e_d, s, params.alpha)


def laplace_interference_total(params: NetworkParams, moments: EquilibriumMoments, s: float) -> float:
    return (laplace_interference_cellular(params, moments, s)
            * laplace_interference_d2d(params, moments, s))


# ---------------------------------------------------------------------------
# equilibrium

def capped_moment(params: NetworkParams, moments: EquilibriumMoments,
                  rel_tol: float = DEFAULT_REL_TOL) -> float:
    """E[min(P, p_max)^(2/alpha)] when P follows the CDF built from ``moments``.

    Uses E[X^d] = int_0^pmax d p^(d-1) (1 - F(p)) dp with q = p^d, so the
    integrand is 1 - F(q^(1/d)) on [0, p_max^d].
    """
    d = params.delta
    top = params.p_max ** d

    def tail(q):
        if q <= 0.0:
            return 1.0
        return 1.0 - cdf_exact(params, moments, q ** (1.0 / d), rel_tol)

    breaks = top * np.logspace(-12, -1, 12)
    value, abserr = integrate.quad(tail, 0.0, top, points=breaks, epsabs=rel_tol * top * 1e-3,
                                   epsrel=rel_tol, limit=500)
    return value


def solve_equilibrium(params: NetworkParams, *, omega: float = 0.5, max_iter: int = 200,
                      tol: float = 1e-8, rel_tol: float = DEFAULT_REL_TOL,
                      start: float | None = None) -> EquilibriumMoments:
    """Damped Picard iteration for the capped D2D moment E_D.

    ``e <- (1 - omega) e + omega T(e)`` where ``T`` maps a trial moment to the
    capped moment of the CDF it induces. ``T`` is increasing and bounded by
    ``p_max^(2/alpha)``. Iteration starts from 0 unless ``T(0) = 0`` (no noise
    and no cellular load), where 0 is a spurious fixed point; it then starts
    from the cap.
    """
    if not 0 < omega <= 1:
        raise ParameterError("omega must lie in (0, 1]")
    e_c = params.e_c

    def T(e):
        return capped_moment(params, EquilibriumMoments(e_c, e), rel_tol)

    e = 0.0 if start is None else float(start)
    t = T(e)
    if start is None and t == 0.0:
        e = params.p_max ** params.delta
        t = T(e)
    history = []
    for it in range(1, max_iter + 1):
        residual = abs(t - e)
        history.append(residual)
        if residual <= tol * max(1.0, e):
            return EquilibriumMoments(e_c, e, residual, it, tuple(history))
        e = (1.0 - omega) * e + omega * t
        t = T(e)
    raise ConvergenceError(f"E_D iteration did not converge in {max_iter} iterations", e, history)


def uncapped_moment_constants(params: NetworkParams, e_c: float) -> tuple[float, float, float]:
    """A1, A2, A3 of the uncapped self-consistency integral."""
    d = params.delta
    a1 = (params.beta_d / params.mu) ** d * d / normalized_sinc(d)
    a2 = params.lambda_c / params.lambda_d * e_c
    a3 = params.beta_d * params.noise_at_unit_gain / (params.mu * (math.pi * params.lambda_d) ** d)
    return a1, a2, a3


def uncapped_moment_integral(params: NetworkParams, moments: EquilibriumMoments, x_min: float) -> float:
    """The uncapped self-consistency integral, truncated below at ``x_min``.

    Its integrand behaves like 1/x near zero, so the value grows without
    bound as ``x_min -> 0``. Exposed for study only; the solver uses
    :func:`capped_moment`.
    """
    if not x_min > 0:
        raise ParameterError("x_min must be positive: the integral diverges at 0")
    a1, a2, a3 = uncapped_moment_constants(params, moments.e_c)
    d = params.delta
    b = a1 * (a2 + moments.e_d)

    def f(x):
        return (b / x + a3 * x ** (-d)) * math.exp(-b / d * x ** d - a3 * x)

    value, _ = integrate.quad(f, x_min, np.inf, epsabs=0.0, epsrel=1e-10, limit=500)
    return value


# ---------------------------------------------------------------------------
# curves

def cdf_curve(params: NetworkParams, moments: EquilibriumMoments, grid, kind: str = "analytic") -> CdfCurve:
    grid = np.asarray(grid, dtype=float)
    if kind == "analytic":
        vals = [cdf_exact(params, moments, p) for p in grid]
    elif kind == "analytic-constrained":
        vals = [cdf_constrained(params, moments, p) for p in grid]
    elif kind == "interference-limited":
        vals = [cdf_interference_limited(params, moments, p) for p in grid]
    elif kind == "lossy-erfc":
        vals = [cdf_lossy(params, moments, p) for p in grid]
    elif kind == "lossy-erfc-approx":
        vals = [cdf_lossy(params, moments, p, use_approx=True) for p in grid]
    elif kind == "upper-bound":
        vals = [cdf_upper_bound(params, moments, p) for p in grid]
    else:
        raise ParameterError(f"cannot build an analytic curve of kind {kind!r}")
    return CdfCurve(grid, np.clip(vals, 0.0, 1.0), kind)
