"""Experiment configuration: a flat TOML document in engineering units.

Every key is optional. An empty file gives the default single-cell set-up:
500 m inter-site distance, -100 dBm noise, 30.6 + 10 alpha log10(d) dB path
loss, 23 dBm cap and gamma = 0.06.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .core import ConstantPower, NetworkParams, UniformDbmPower, db_to_linear, dbm_to_watt
from .simulator import Hexagon, SimulationSettings


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # network, engineering units
    isd_m: float = 500.0
    noise_dbm: float = -100.0
    pathloss_offset_db: float = 30.6
    p_max_dbm: float = 23.0
    mu: float = 1e-3
    lambda_d: float = 8e-4
    lambda_c: float = 4.6e-6
    cellular_power: str = "constant"
    cellular_power_dbm: float = 23.0
    cellular_power_min_dbm: float = 0.0
    # sweeps
    alphas: tuple[float, ...] = (3.0,)
    betas_db: tuple[float, ...] = (-10.0,)
    grid_min_dbm: float = -60.0
    grid_max_dbm: float = 23.0
    grid_step_db: float = 1.0
    # simulation controls
    drops: int = 200
    master_seed: int = 1
    gamma: float = 0.06
    max_iter: int = 150
    tol: float = 1e-2
    p_init_dbm: float = -37.0
    interferer_fading_mean: float = 1.0
    pairing: str = "distance"
    central_fraction: float = 1.0 / 3.0
    ks_threshold: float = 0.05
    threads: int = 1
    output: str = "out"

    def __post_init__(self):
        for name in ("alphas", "betas_db"):
            value = getattr(self, name)
            if isinstance(value, (int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(float(v) for v in value))
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if any(not 2 < a < 6 for a in self.alphas):
            raise ConfigError("every alpha must lie in (2, 6)")
        if not self.grid_step_db > 0 or not self.grid_max_dbm >= self.grid_min_dbm:
            raise ConfigError("power grid must be strictly increasing")
        if self.grid_max_dbm < self.p_max_dbm:
            raise ConfigError("power grid must reach p_max_dbm")
        if self.drops < 1:
            raise ConfigError("drops must be at least 1")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.max_iter < 1 or not self.tol > 0:
            raise ConfigError("max_iter must be >= 1 and tol > 0")
        if self.cellular_power not in ("constant", "uniform_dbm"):
            raise ConfigError(f"unknown cellular_power law {self.cellular_power!r}")
        if self.pairing not in ("distance", "nearest"):
            raise ConfigError(f"unknown pairing {self.pairing!r}")
        if not 0 < self.central_fraction <= 1:
            raise ConfigError("central_fraction must lie in (0, 1]")
        if self.lambda_d <= 0 or self.lambda_c < 0 or self.mu <= 0 or self.isd_m <= 0:
            raise ConfigError("densities, mu and isd_m must be positive (lambda_c may be 0)")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.from_mapping(data)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    # -- derived quantities -------------------------------------------------

    def cellular_law(self):
        if self.cellular_power == "constant":
            return ConstantPower(float(dbm_to_watt(self.cellular_power_dbm)))
        return UniformDbmPower(self.cellular_power_min_dbm, self.p_max_dbm)

    def network_params(self, alpha: float, beta_db: float, **changes) -> NetworkParams:
        base = dict(
            lambda_c=self.lambda_c,
            lambda_d=self.lambda_d,
            alpha=alpha,
            mu=self.mu,
            beta_d=float(db_to_linear(beta_db)),
            sigma2=float(dbm_to_watt(self.noise_dbm)),
            p_max=float(dbm_to_watt(self.p_max_dbm)),
            cellular_power_law=self.cellular_law(),
            pathloss_offset_db=self.pathloss_offset_db,
        )
        base.update(changes)
        return NetworkParams(**base)

    def settings(self) -> SimulationSettings:
        return SimulationSettings(
            cell=Hexagon(self.isd_m),
            gamma=self.gamma,
            max_iter=self.max_iter,
            tol=self.tol,
            p_init=float(dbm_to_watt(self.p_init_dbm)),
            interferer_fading_mean=self.interferer_fading_mean,
            pairing=self.pairing,
            central_fraction=self.central_fraction,
        )

    def grid_dbm(self) -> np.ndarray:
        n = int(math.floor((self.grid_max_dbm - self.grid_min_dbm) / self.grid_step_db + 1e-9)) + 1
        grid = self.grid_min_dbm + self.grid_step_db * np.arange(n)
        if grid[-1] < self.grid_max_dbm - 1e-9:
            grid = np.append(grid, self.grid_max_dbm)
        return grid

    def grid_watts(self) -> np.ndarray:
        return dbm_to_watt(self.grid_dbm())

    def sweep_points(self) -> list[tuple[float, float]]:
        return [(a, b) for a in self.alphas for b in self.betas_db]

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def digest(self) -> str:
        """Hash of everything that can change the numbers (not output path or thread count)."""
        relevant = {k: v for k, v in self.as_dict().items() if k not in ("output", "threads")}
        blob = json.dumps(relevant, sort_keys=True, allow_nan=True).encode()
        return hashlib.sha256(blob).hexdigest()
