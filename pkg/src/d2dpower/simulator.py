"""Monte Carlo drops of a single hexagonal cell with Foschini-Miljanic power control.

Channel model used throughout: the gain from transmitter ``j`` to receiver
``i`` is ``h_ij * d_ij**-alpha * 10**(-offset/10)`` with ``h_ij`` exponential.
The desired-link fade has mean ``mu``; cross-link fades have mean
``interferer_fading_mean`` (1 by default, which is what the interference
Laplace transforms assume).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .analytic import CdfCurve
from .core import NetworkParams, ParameterError, db_to_linear

SQRT3 = math.sqrt(3.0)


class SimulationError(RuntimeError):
    pass


class InfeasibleLinkError(SimulationError):
    def __init__(self, links):
        super().__init__(f"links with zero SINR: {sorted(links)}")
        self.links = frozenset(links)


class PowerControlDivergence(SimulationError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class Hexagon:
    """Flat-topped regular hexagon; ``isd`` is the inter-site distance (twice the apothem)."""

    isd: float = 500.0
    center: tuple[float, float] = (0.0, 0.0)

    @property
    def circumradius(self) -> float:
        return self.isd / SQRT3

    @property
    def area(self) -> float:
        r = self.circumradius
        return 1.5 * SQRT3 * r * r

    def scaled(self, area_fraction: float) -> "Hexagon":
        return Hexagon(self.isd * math.sqrt(area_fraction), self.center)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        r = self.circumradius
        x = np.abs(pts[:, 0] - self.center[0])
        y = np.abs(pts[:, 1] - self.center[1])
        return (y <= SQRT3 / 2 * r) & (SQRT3 * x + y <= SQRT3 * r)

    def vertices(self) -> np.ndarray:
        ang = np.arange(6) * np.pi / 3
        r = self.circumradius
        return np.column_stack([self.center[0] + r * np.cos(ang), self.center[1] + r * np.sin(ang)])

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # pick one of six equilateral triangles, then a uniform point in it
        verts = self.vertices()
        k = rng.integers(0, 6, n)
        a = verts[k] - self.center
        b = verts[(k + 1) % 6] - self.center
        u = rng.random((n, 2))
        flip = u.sum(axis=1) > 1
        u[flip] = 1.0 - u[flip]
        return np.asarray(self.center) + u[:, :1] * a + u[:, 1:] * b


def sample_ppp_hex(intensity: float, cell: Hexagon, rng: np.random.Generator) -> np.ndarray:
    if not intensity >= 0:
        raise ParameterError("intensity must be non-negative")
    n = rng.poisson(intensity * cell.area)
    return cell.sample_uniform(n, rng)


def sample_link_distance(lambda_d: float, rng: np.random.Generator, size=None):
    """Nearest-neighbour distance of a PPP: pdf 2 pi lambda x exp(-pi lambda x^2)."""
    if not lambda_d > 0:
        raise ParameterError("lambda_d must be positive")
    return rng.rayleigh(1.0 / math.sqrt(2.0 * math.pi * lambda_d), size)


def link_distance_cdf(x, lambda_d: float):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-math.pi * lambda_d * x * x), 0.0)


# ---------------------------------------------------------------------------
# realizations

@dataclass(frozen=True)
class Realization:
    """One drop: positions, pairing and fading powers.

    ``d2d_fading[i, j]`` is the fade from D2D transmitter ``j`` to receiver
    ``i`` (the diagonal holds the desired links); ``cellular_fading[i, k]``
    is the fade from cellular UE ``k`` to D2D receiver ``i``.
    """

    cell: Hexagon
    cellular_tx: np.ndarray
    cellular_power: np.ndarray
    d2d_tx: np.ndarray
    d2d_rx: np.ndarray
    d2d_fading: np.ndarray
    cellular_fading: np.ndarray
    typical: np.ndarray
    seed: int | None = None
    trial: int | None = None

    def __post_init__(self):
        n = len(self.d2d_tx)
        m = len(self.cellular_tx)
        if self.d2d_rx.shape != (n, 2) or self.d2d_tx.shape != (n, 2):
            raise ParameterError("need one receiver per D2D transmitter")
        if self.d2d_fading.shape != (n, n) or self.cellular_fading.shape != (n, m):
            raise ParameterError("fading matrices do not match the node counts")
        if self.cellular_power.shape != (m,):
            raise ParameterError("need one power per cellular UE")
        if np.any(self.d2d_fading <= 0) or np.any(self.cellular_fading <= 0):
            raise ParameterError("fading powers must be positive")
        if n and np.any(self.link_lengths() == 0):
            raise ParameterError("a receiver coincides with a transmitter")

    @property
    def n_links(self) -> int:
        return len(self.d2d_tx)

    def link_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.d2d_rx - self.d2d_tx, axis=1)

    def distances(self) -> tuple[np.ndarray, np.ndarray]:
        """(receiver x D2D transmitter, receiver x cellular UE) distance matrices."""
        return cdist(self.d2d_rx, self.d2d_tx), cdist(self.d2d_rx, self.cellular_tx)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial]))


def _place_receivers(tx, lambda_d, cell, rng):
    rx = np.empty_like(tx)
    todo = np.arange(len(tx))
    while len(todo):
        d = sample_link_distance(lambda_d, rng, len(todo))
        th = rng.uniform(0.0, 2.0 * math.pi, len(todo))
        cand = tx[todo] + np.column_stack([d * np.cos(th), d * np.sin(th)])
        ok = cell.contains(cand) & (d > 0)
        rx[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return rx


def _pair_nearest(users, rng):
    """Greedy mutual-nearest pairing; unpaired leftovers are dropped."""
    n = len(users)
    if n < 2:
        return users[:0], users[:0]
    dist = cdist(users, users)
    iu, ju = np.triu_indices(n, 1)
    order = np.argsort(dist[iu, ju], kind="stable")
    free = np.ones(n, bool)
    pairs = []
    for k in order:
        a, b = iu[k], ju[k]
        if free[a] and free[b]:
            free[a] = free[b] = False
            pairs.append((a, b) if rng.random() < 0.5 else (b, a))
    pairs = np.array(pairs)
    return users[pairs[:, 0]], users[pairs[:, 1]]


def drop_realization(params: NetworkParams, cell: Hexagon, rng: np.random.Generator, *,
                     pairing: str = "distance", interferer_fading_mean: float = 1.0,
                     central_fraction: float = 1.0 / 3.0, seed=None, trial=None) -> Realization:
    """Drop cellular UEs and D2D pairs in ``cell``.

    ``pairing="distance"`` places each receiver at a nearest-neighbour
    distance and uniform angle from its transmitter, redrawing until it falls
    inside the cell. ``pairing="nearest"`` drops a PPP of twice the D2D
    density and pairs users greedily by mutual distance.
    """
    if pairing == "distance":
        tx = sample_ppp_hex(params.lambda_d, cell, rng)
        rx = _place_receivers(tx, params.lambda_d, cell, rng)
    elif pairing == "nearest":
        tx, rx = _pair_nearest(sample_ppp_hex(2.0 * params.lambda_d, cell, rng), rng)
    else:
        raise ParameterError(f"unknown pairing mode {pairing!r}")
    cu = sample_ppp_hex(params.lambda_c, cell, rng) if params.lambda_c > 0 else np.empty((0, 2))
    pc = params.cellular_power_law.sample(rng, len(cu))
    n, m = len(tx), len(cu)
    fd = rng.exponential(interferer_fading_mean, (n, n))
    fd[np.diag_indices(n)] = rng.exponential(params.mu, n)
    fc = rng.exponential(interferer_fading_mean, (n, m))
    typical = cell.scaled(central_fraction).contains(rx) if n else np.zeros(0, bool)
    return Realization(cell, cu, pc, tx, rx, fd, fc, typical, seed, trial)


def path_gains(real: Realization, params: NetworkParams) -> tuple[np.ndarray, np.ndarray]:
    dd, dc = real.distances()
    loss = float(db_to_linear(-params.pathloss_offset_db))
    return (real.d2d_fading * dd ** -params.alpha * loss,
            real.cellular_fading * dc ** -params.alpha * loss)


# ---------------------------------------------------------------------------
# SINR and power control

def interference(real: Realization, params: NetworkParams, powers, *, include_offset: bool = True,
                 gains=None) -> np.ndarray:
    """Cellular plus D2D interference at every D2D receiver (noise excluded)."""
    gd, gc = path_gains(real, params) if gains is None else gains
    if not include_offset:
        scale = float(db_to_linear(params.pathloss_offset_db))
        gd, gc = gd * scale, gc * scale
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (real.n_links,))
    cross = gd @ powers - np.diag(gd) * powers
    return cross + gc @ real.cellular_power


def sinr_all(real: Realization, params: NetworkParams, powers, gains=None) -> np.ndarray:
    gains = path_gains(real, params) if gains is None else gains
    powers = np.asarray(powers, dtype=float)
    signal = np.diag(gains[0]) * powers
    return signal / (interference(real, params, powers, gains=gains) + params.sigma2)


def sinr_of_link(real: Realization, params: NetworkParams, powers, link: int) -> float:
    if not 0 <= link < real.n_links:
        raise IndexError(f"link {link} out of range")
    return float(sinr_all(real, params, powers)[link])


def foschini_miljanic_step(powers, sinrs, beta_d: float, gamma: float, p_max: float = math.inf) -> np.ndarray:
    if not 0 < gamma < 1:
        raise ParameterError("gamma must lie in (0, 1)")
    powers = np.asarray(powers, dtype=float)
    sinrs = np.asarray(sinrs, dtype=float)
    dead = np.nonzero(sinrs <= 0)[0]
    if len(dead):
        raise InfeasibleLinkError(dead.tolist())
    new = (1.0 - gamma) * powers * (1.0 + gamma / (1.0 - gamma) * beta_d / sinrs)
    return np.minimum(new, p_max)


@dataclass(frozen=True)
class PowerControlTrace:
    powers: np.ndarray
    sinrs: np.ndarray
    converged: bool
    iterations_used: int
    capped_links: frozenset
    typical: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def final_powers(self) -> np.ndarray:
        return self.powers[-1]

    @property
    def final_sinrs(self) -> np.ndarray:
        return self.sinrs[-1]


def _settled(powers, sinrs, beta_d, p_max, tol):
    on_target = np.abs(sinrs - beta_d) <= tol * beta_d
    pinned = (powers >= p_max) & (sinrs < beta_d)
    return on_target | pinned


def run_power_control(real: Realization, params: NetworkParams, gamma: float = 0.06,
                      max_iter: int = 100, tol: float = 1e-2, p_init=None) -> PowerControlTrace:
    """Iterate the Foschini-Miljanic update with the power cap until the SINR settles.

    A link has settled when its SINR is within ``tol`` (relative) of the
    target, or when it sits at ``p_max`` still short of the target. Cellular
    powers stay fixed. ``p_init`` defaults to ``p_max * 1e-6``.
    """
    if not 0 < gamma < 1:
        raise ParameterError("gamma must lie in (0, 1)")
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    n = real.n_links
    if p_init is None:
        p_init = params.p_max * 1e-6
    p = np.minimum(np.broadcast_to(np.asarray(p_init, dtype=float), (n,)).copy(), params.p_max)
    gains = path_gains(real, params)
    powers, sinrs = [p], []
    converged = False
    it = 0
    while True:
        s = sinr_all(real, params, p, gains)
        sinrs.append(s)
        if np.all(_settled(p, s, params.beta_d, params.p_max, tol)):
            converged = True
            break
        if it == max_iter:
            break
        p = foschini_miljanic_step(p, s, params.beta_d, gamma, params.p_max)
        it += 1
        powers.append(p)
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            trace = PowerControlTrace(np.array(powers), np.array(sinrs + [np.full(n, np.nan)]),
                                      False, it, frozenset(), real.typical)
            raise PowerControlDivergence(f"power vector left (0, p_max] at iteration {it}", trace)
    capped = frozenset(np.nonzero(p >= params.p_max)[0].tolist())
    return PowerControlTrace(np.array(powers), np.array(sinrs), converged, it, capped, real.typical)


def uncapped_fixed_point(real: Realization, params: NetworkParams) -> np.ndarray | None:
    """Power vector meeting every SINR target exactly, ignoring the cap.

    Returns None when no positive solution exists (spectral radius of the
    normalized interference matrix at least 1).
    """
    gd, gc = path_gains(real, params)
    g = np.diag(gd)
    cross = gd - np.diag(g)
    norm = params.beta_d * cross / g[:, None]
    if real.n_links == 0:
        return np.zeros(0)
    if np.max(np.abs(np.linalg.eigvals(norm))) >= 1:
        return None
    rhs = params.beta_d * (gc @ real.cellular_power + params.sigma2) / g
    return np.linalg.solve(np.eye(real.n_links) - norm, rhs)


# ---------------------------------------------------------------------------
# aggregation

def pooled_powers(traces, typical_only: bool = True) -> np.ndarray:
    chunks = []
    for tr in traces:
        if not tr.converged:
            continue
        p = tr.final_powers
        chunks.append(p[tr.typical] if typical_only and len(tr.typical) == len(p) else p)
    return np.concatenate(chunks) if chunks else np.zeros(0)


def empirical_cdf(samples, grid) -> np.ndarray:
    xs = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(xs, np.asarray(grid, dtype=float), side="right") / len(xs)


def empirical_power_cdf(traces, grid, typical_only: bool = True) -> CdfCurve:
    samples = pooled_powers(traces, typical_only)
    if samples.size == 0:
        raise SimulationError("no converged links to pool")
    return CdfCurve(np.asarray(grid, dtype=float), empirical_cdf(samples, grid), "empirical")


def measure_interference_laplace(reals, params: NetworkParams, s, d2d_powers):
    """Monte Carlo estimate of E[exp(-s I)] at the typical receivers.

    ``I`` is the cellular plus D2D interference with pure ``d**-alpha`` loss.
    ``d2d_powers`` is a scalar or one power array per realization. The
    standard error treats each realization as one cluster.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0):
        raise ParameterError("s must be non-negative")
    per_drop, pooled = [], []
    for k, real in enumerate(reals):
        pw = d2d_powers if np.ndim(d2d_powers) == 0 else d2d_powers[k]
        mask = real.typical if real.typical.any() else np.ones(real.n_links, bool)
        if not mask.any():
            continue
        I = interference(real, params, pw, include_offset=False)[mask]
        vals = np.exp(-np.outer(s, I))
        per_drop.append(vals.mean(axis=1))
        pooled.append(vals)
    if not per_drop:
        raise SimulationError("no typical receivers to measure")
    per_drop = np.array(per_drop)
    mean = np.concatenate(pooled, axis=1).mean(axis=1)
    if len(per_drop) > 1:
        stderr = per_drop.std(axis=0, ddof=1) / math.sqrt(len(per_drop))
    else:
        allv = np.concatenate(pooled, axis=1)
        stderr = allv.std(axis=1, ddof=1) / math.sqrt(allv.shape[1]) if allv.shape[1] > 1 else np.zeros(len(s))
    return mean, stderr


@dataclass(frozen=True)
class SimulationSettings:
    cell: Hexagon = Hexagon()
    gamma: float = 0.06
    max_iter: int = 150
    tol: float = 1e-2
    p_init: float | None = None
    interferer_fading_mean: float = 1.0
    pairing: str = "distance"
    central_fraction: float = 1.0 / 3.0


def simulate_drop(params: NetworkParams, settings: SimulationSettings, master_seed: int, trial: int):
    rng = trial_rng(master_seed, trial)
    real = drop_realization(params, settings.cell, rng, pairing=settings.pairing,
                            interferer_fading_mean=settings.interferer_fading_mean,
                            central_fraction=settings.central_fraction,
                            seed=master_seed, trial=trial)
    trace = run_power_control(real, params, settings.gamma, settings.max_iter, settings.tol,
                              settings.p_init)
    return real, trace


def simulate_drops(params: NetworkParams, settings: SimulationSettings, drops: int,
                   master_seed: int, threads: int = 1, keep_realizations: bool = False):
    """Run independent drops; results come back in trial order whatever ``threads`` is."""
    if drops < 1:
        raise ParameterError("need at least one drop")

    def one(trial):
        real, trace = simulate_drop(params, settings, master_seed, trial)
        return (real, trace) if keep_realizations else trace

    if threads <= 1:
        return [one(t) for t in range(drops)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(drops)))
