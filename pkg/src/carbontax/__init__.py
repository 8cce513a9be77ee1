"""Optimal externality-correcting tax schedules under costly redistribution.

Submodules:
  schedules   income grids, tax schedules, damage calibration
  agent       synthetic-economy ground truth (two-stage agent problem)
  statistics  sufficient-statistics extraction and profiles
  solver      the four tax-formula engines
  pipeline    binned-data procedure producing statistics profiles
  oracle      reform-based numerical verification
  synthetic   bundled synthetic calibration and fixture generators
  cli         command-line front end
"""

from .agent import AgentChoice, SyntheticEconomy, UtilityParams, solve_all
from .schedules import (DamageCalibration, IncomeGrid, IncomeTaxSchedule,
                        LinearCommodityTax, NonlinearCommodityTax, TaxSystem,
                        pigouvian_rate)
from .statistics import StatsProfile, build_profile_from_economy
from .solver import (SolveReport, fixed_point, solve_linear, solve_multidim,
                     solve_nonlinear, solve_optimal_levels)

__all__ = [
    "AgentChoice", "SyntheticEconomy", "UtilityParams", "solve_all",
    "DamageCalibration", "IncomeGrid", "IncomeTaxSchedule",
    "LinearCommodityTax", "NonlinearCommodityTax", "TaxSystem",
    "pigouvian_rate", "StatsProfile", "build_profile_from_economy",
    "SolveReport", "fixed_point", "solve_linear", "solve_multidim",
    "solve_nonlinear", "solve_optimal_levels",
]

__version__ = "0.1.0"
