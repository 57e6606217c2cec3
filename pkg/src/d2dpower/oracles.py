"""Reference computations that share no code path with the main engine.

Fixed dense grids instead of adaptive quadrature, brute-force linear algebra
instead of iteration. Slow on purpose; they exist to check the fast paths.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from scipy.integrate import simpson


def cdf_integral_dense(k1, k2, alpha, *, t_max=40.0, steps=4000):
    """int_0^inf exp(-k1 r - k2 r^(alpha/2)) dr by Simpson's rule in t = k1 r.

    ``k1`` and ``k2`` broadcast; the result has their common shape.
    """
    k1 = np.asarray(k1, dtype=float)[..., None]
    k2 = np.asarray(k2, dtype=float)[..., None]
    t = np.linspace(0.0, t_max, steps + 1)
    f = np.exp(-t - k2 * (t / k1) ** (alpha / 2.0))
    return simpson(f, x=t) / k1[..., 0]


def trapezoid_dense(f, upper=40.0, step=1e-5):
    r = np.arange(0.0, upper + step / 2, step)
    y = f(r)
    return float(np.sum((y[1:] + y[:-1]) * 0.5) * step)


def _sinc(x):
    return math.sin(math.pi * x) / (math.pi * x)


def picard_dense(params, *, points=2000, inner_steps=4000, omega=0.5, tol=1e-10, max_iter=400,
                 decades=14):
    """Solve the capped E_D self-consistency on fixed grids.

    The moment E[min(P, p_max)^d] = int_0^{p_max^d} (1 - F(q^(1/d))) dq is
    taken with Simpson's rule in log q over ``decades`` decades below the
    cap, plus the head ``q_min`` (where 1 - F = 1 to working precision).
    """
    d = 2.0 / params.alpha
    top = params.p_max ** d
    lq = np.linspace(math.log(top) - decades * math.log(10.0), math.log(top), points + 1)
    q = np.exp(lq)
    p = q ** (1.0 / d)
    ratio = params.beta_d / (params.mu * p)
    k2 = ratio * params.noise_at_unit_gain / (math.pi * params.lambda_d) ** (params.alpha / 2.0)
    e_c = params.e_c
    load_c = params.lambda_c / params.lambda_d * e_c

    def T(e):
        k1 = 1.0 + ratio ** d * (e + load_c) / _sinc(d)
        tail = 1.0 - cdf_integral_dense(k1, k2, params.alpha, steps=inner_steps)
        return q[0] + simpson(tail * q, x=lq)

    e = 0.0
    t = T(e)
    if t == 0.0 or (params.lambda_c == 0 and params.noise_at_unit_gain == 0):
        e = top
        t = T(e)
    for it in range(max_iter):
        if abs(t - e) <= tol * max(1.0, e):
            return e
        e = (1.0 - omega) * e + omega * t
        t = T(e)
    raise RuntimeError("dense Picard oracle did not converge")


def two_link_fixed_point(gains, noise, beta_d):
    """Powers meeting the SINR target on both links of a 2x2 system, by elimination.

    ``gains[i][j]`` is the gain from transmitter j to receiver i;
    ``noise[i]`` includes any fixed external interference.
    """
    (g11, g12), (g21, g22) = gains
    n1, n2 = noise
    # p1 g11 = b (g12 p2 + n1),  p2 g22 = b (g21 p1 + n2)
    det = g11 * g22 - beta_d ** 2 * g12 * g21
    if det <= 0:
        raise ValueError("targets infeasible for this gain matrix")
    p1 = beta_d * (g22 * n1 + beta_d * g12 * n2) / det
    p2 = beta_d * (g11 * n2 + beta_d * g21 * n1) / det
    return np.array([p1, p2])


def ks_against_cdf(samples, cdf):
    """One-sample KS statistic and p-value against a continuous CDF."""
    res = stats.kstest(np.asarray(samples, dtype=float), cdf)
    return res.statistic, res.pvalue


def hexagon_sector_counts(points, center=(0.0, 0.0)):
    """Counts in the six 60-degree sectors (equal-area triangles of a hexagon
    whose vertices sit at multiples of 60 degrees)."""
    pts = np.asarray(points, dtype=float) - center
    ang = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    idx = np.minimum((ang // (np.pi / 3)).astype(int), 5)
    return np.bincount(idx, minlength=6)
