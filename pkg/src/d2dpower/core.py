"""Shared numerics: scenario parameters, unit conversions, special functions,
semi-infinite quadrature and a monotone root finder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate, optimize


class ParameterError(ValueError):
    """Raised for out-of-domain inputs and invalid scenario parameters."""


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float, abserr: float):
        super().__init__(f"{message} (estimate={estimate!r}, abserr={abserr!r})")
        self.estimate = estimate
        self.abserr = abserr


class RootFindingError(ParameterError):
    pass


# ---------------------------------------------------------------------------
# units

def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    watt = np.asarray(watt, dtype=float)
    if np.any(watt <= 0):
        raise ParameterError("power must be positive to express in dBm")
    return 10.0 * np.log10(watt) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# cellular transmit-power laws

@dataclass(frozen=True)
class ConstantPower:
    """Every cellular UE transmits at ``watts``."""

    watts: float

    def __post_init__(self):
        if not self.watts > 0:
            raise ParameterError(f"cellular power must be positive, got {self.watts}")

    def fractional_moment(self, order: float) -> float:
        return self.watts ** order

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.watts)


@dataclass(frozen=True)
class UniformDbmPower:
    """Cellular power uniform in dBm on ``[low_dbm, high_dbm]``."""

    low_dbm: float
    high_dbm: float

    def __post_init__(self):
        if not self.high_dbm > self.low_dbm:
            raise ParameterError("uniform dBm law needs high_dbm > low_dbm")

    def fractional_moment(self, order: float) -> float:
        width = self.high_dbm - self.low_dbm
        value, abserr = integrate.quad(
            lambda x: dbm_to_watt(x) ** order / width, self.low_dbm, self.high_dbm,
            epsabs=0.0, epsrel=1e-12,
        )
        return value

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return dbm_to_watt(rng.uniform(self.low_dbm, self.high_dbm, size))


# ---------------------------------------------------------------------------
# scenario parameters

@dataclass(frozen=True)
class NetworkParams:
    """Scenario constants in linear units (watts, metres, linear SINR).

    ``pathloss_offset_db`` is a distance-independent loss applied to every
    link by the simulator. Dividing all gains by the same constant is
    equivalent to multiplying the noise by it, which is how the analytic
    formulas see it (:attr:`noise_at_unit_gain`).
    """

    lambda_c: float
    lambda_d: float
    alpha: float
    mu: float
    beta_d: float
    sigma2: float
    p_max: float
    cellular_power_law: ConstantPower | UniformDbmPower = field(
        default_factory=lambda: ConstantPower(0.2))
    pathloss_offset_db: float = 0.0

    def __post_init__(self):
        if not 2.0 < self.alpha < 6.0:
            raise ParameterError(f"path-loss exponent must lie in (2, 6), got {self.alpha}")
        if self.lambda_c < 0:
            raise ParameterError("lambda_c must be non-negative")
        for name in ("lambda_d", "mu", "beta_d", "p_max"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sigma2 < 0:
            raise ParameterError("sigma2 must be non-negative")

    @property
    def delta(self) -> float:
        """The fractional-moment order 2/alpha."""
        return 2.0 / self.alpha

    @property
    def noise_at_unit_gain(self) -> float:
        return self.sigma2 * float(db_to_linear(self.pathloss_offset_db))

    @property
    def e_c(self) -> float:
        return self.cellular_power_law.fractional_moment(self.delta)

    def replace(self, **changes) -> "NetworkParams":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# special functions

def normalized_sinc(x: float) -> float:
    if not 0.0 < x < 1.0:
        raise ParameterError(f"sinc argument must lie in (0, 1), got {x}")
    px = math.pi * x
    return math.sin(px) / px


def gamma_fn(t: float) -> float:
    if not t > 0:
        raise ParameterError(f"gamma_fn needs t > 0, got {t}")
    return math.gamma(t)


def erfc_exact(x: float) -> float:
    return math.erfc(x)


def erfc_approx(x: float) -> float:
    """Two-exponential approximation of erfc, valid for x >= 0."""
    if x < 0:
        raise ParameterError(f"erfc_approx is defined for x >= 0, got {x}")
    x2 = x * x
    return math.exp(-x2) / 6.0 + 0.5 * math.exp(-4.0 * x2 / 3.0)


# ---------------------------------------------------------------------------
# quadrature

DEFAULT_REL_TOL = 1e-10
_TAIL_FRACTION = 1e-16


def _truncation_point(f: Callable[[float], float], scale: float) -> tuple[float, np.ndarray]:
    # 4 samples per decade from scale*1e-8 to scale*1e12
    grid = scale * np.logspace(-8, 12, 81)
    vals = np.array([abs(f(r)) for r in grid])
    peak = np.max(vals)
    if not np.isfinite(peak):
        raise QuadratureError("integrand is not finite on the sample grid", math.nan, math.inf)
    if peak == 0.0:
        return 0.0, grid[:0]
    above = np.nonzero(vals >= _TAIL_FRACTION * peak)[0]
    last = above[-1]
    if last == len(grid) - 1:
        raise QuadratureError("integrand does not decay inside the search window", math.nan, math.inf)
    upper = grid[last + 1]
    # one breakpoint per decade below the cut
    breaks = grid[: last + 1 : 4]
    return upper, breaks


def integrate_semiinfinite(f: Callable[[float], float], rel_tol: float = DEFAULT_REL_TOL,
                           *, scale: float = 1.0, max_subdivisions: int = 500) -> float:
    """Integrate ``f`` over ``[0, inf)``.

    The range is cut where ``|f|`` drops below 1e-16 of its sampled peak and
    the remainder is handed to adaptive Gauss-Kronrod with per-decade
    breakpoints. ``scale`` is the characteristic width of the integrand; it
    only positions the search grid.
    """
    if not rel_tol > 0:
        raise ParameterError("rel_tol must be positive")
    upper, breaks = _truncation_point(f, scale)
    if upper == 0.0:
        return 0.0
    value, abserr, info = integrate.quad(
        f, 0.0, upper, points=breaks[breaks < upper], epsabs=0.0, epsrel=rel_tol,
        limit=max_subdivisions, full_output=1,
    )[:3]
    if not abserr <= rel_tol * abs(value) + 1e-300:
        raise QuadratureError("adaptive quadrature did not reach the requested tolerance",
                              value, abserr)
    return value


# ---------------------------------------------------------------------------
# root finding

ROOT_TOL = 1e-12


def find_root_increasing(g: Callable[[float], float], target: float, bracket_lo: float,
                         *, max_expansions: int = 2000) -> float:
    """Solve ``g(x) = target`` for ``g`` strictly increasing on ``(bracket_lo, inf)``."""
    def h(x):
        return g(x) - target

    lo = bracket_lo
    if h(lo) > 0:
        raise RootFindingError(f"target {target} lies below g({bracket_lo})")
    if h(lo) == 0:
        return lo
    step = max(1.0, abs(lo))
    hi = lo + step
    for _ in range(max_expansions):
        if h(hi) >= 0:
            break
        lo, step = hi, 2.0 * step
        hi = lo + step
    else:
        raise RootFindingError(f"could not bracket target {target}")
    x = optimize.brentq(h, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    tol = ROOT_TOL * max(1.0, abs(target))
    if abs(h(x)) > tol:
        # brentq stops on bracket width, which can be too loose for steep g
        a, b = lo, hi
        for _ in range(2000):
            m = 0.5 * (a + b)
            if m in (a, b):
                break
            if h(m) < 0:
                a = m
            else:
                b = m
        x = a if abs(h(a)) < abs(h(b)) else b
    return x
