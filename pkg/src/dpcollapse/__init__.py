"""Gravity-related collapse: catness, rates, equilibrium dynamics and a
delayed-field pendulum."""

__version__ = "0.1.0"

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .density import (CutoffPolicy, GranularBall, GridSpec, PointSet, SmearedGranular,
                      UniformBall, VoxelGrid, coarse_grain, evaluate_density,
                      smearing_sweep, translate)
from .potential import (internal_field_profile, mutual_energy, mutual_energy_grid,
                        mutual_energy_points, mutual_energy_uniform_balls, self_energy)
from .collapse import (catness, full_rate_curve, rate_displaced, rate_granular_small_disp,
                       rate_vs_smearing)
from .equilibrium import balance_check, equilibrium_report, newton_frequency

__all__ = [
    "DEFAULT_CONSTANTS", "PhysicalConstants", "CutoffPolicy", "GranularBall", "GridSpec",
    "PointSet", "SmearedGranular", "UniformBall", "VoxelGrid", "coarse_grain",
    "evaluate_density", "smearing_sweep", "translate", "internal_field_profile",
    "mutual_energy", "mutual_energy_grid", "mutual_energy_points",
    "mutual_energy_uniform_balls", "self_energy", "catness", "full_rate_curve",
    "rate_displaced", "rate_granular_small_disp", "rate_vs_smearing", "balance_check",
    "equilibrium_report", "newton_frequency",
]
