"""Green currents of meromorphic maps on projective model spaces.

Submodules: :mod:`geometry` (model spaces, charts, grids), :mod:`maps`
(exact rational maps), :mod:`cohomology` (pull-back action, degrees),
:mod:`potentials` (quasi-psh functions, envelopes, capacity), :mod:`green`
(Green potentials) and :mod:`experiments` (reproducible checks).
"""

from .cohomology import (degree_sequence, dynamical_degree_estimate, is_1_regular,
                         pullback_matrix)
from .errors import (ConvergenceError, DomainError, GreenlabError, IndeterminacyError, ResourceError,
                     UnsupportedError, UsageError)
from .geometry import P1, default_grid, space_from_name
from .green import GreenResult, green_potential, pullback_sequence
from .maps import RationalMap, compose, cremona, load_map, p2_power, quadratic_polynomial, squaring

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DomainError", "GreenResult", "GreenlabError", "IndeterminacyError", "P1",
    "RationalMap", "ResourceError", "UnsupportedError", "UsageError", "compose", "cremona",
    "default_grid", "degree_sequence", "dynamical_degree_estimate", "green_potential",
    "is_1_regular", "load_map", "p2_power", "pullback_matrix", "pullback_sequence",
    "quadratic_polynomial", "space_from_name", "squaring",
]
