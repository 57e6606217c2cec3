"""Equilibrium transmit-power distribution of D2D links sharing a cellular uplink.

``analytic`` holds the closed forms and the equilibrium solver, ``simulator``
the Monte Carlo model with distributed power control, and ``harness`` / ``cli``
the experiment runner.
"""

from .analytic import (
    CdfCurve,
    EquilibriumMoments,
    cdf_constrained,
    cdf_interference_limited,
    cdf_lossy,
    cdf_exact,
    cdf_upper_bound,
    laplace_interference_total,
    solve_equilibrium,
)
from .config import ExperimentConfig
from .core import ConstantPower, NetworkParams, UniformDbmPower, dbm_to_watt, watt_to_dbm

__version__ = "0.1.0"

__all__ = [
    "CdfCurve", "ConstantPower", "EquilibriumMoments", "ExperimentConfig", "NetworkParams",
    "UniformDbmPower", "cdf_constrained", "cdf_interference_limited", "cdf_lossy", "cdf_exact",
    "cdf_upper_bound", "dbm_to_watt", "laplace_interference_total", "solve_equilibrium", "watt_to_dbm",
]
