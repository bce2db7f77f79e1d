"""Quasi-psh functions on model spaces: sampling, pull-backs and envelopes."""

from .functions import (Bump, Constant, Custom, LogDivisor, MaxWith, PotentialFunction, PulledBack,
                        SmoothLogDivisor, form_through_point, log_point, pullback_gamma,
                        smooth_log_point, zero)
from .grid import (CurrentRep, GridPotential, class_local_potential, cylinder_laplacian, ddc_masses,
                   disk_mass, grid_log_coords, interpolate_cylinder, l1_distance, load_potential,
                   measure_masses, pullback, save_potential, theta_masses)
from .envelopes import (CapacityResult, ExtremalResult, Theta, capacity, capacity_lp, envelope_grid,
                        extremal_function, relaxation_sweep, solve_obstacle, sublevel_mask, v_theta)
from .energy import EnergyResult, chi_energy
from .lelong import lelong_number

__all__ = [name for name in dir() if not name.startswith("_")]
