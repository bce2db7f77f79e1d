"""Chi-energy of theta-psh functions on the projective line.

For ``chi(t) = -(-t)^p`` the energy of ``phi`` with ``V = V_theta`` is::

    E(phi) = 1/2 [ int (V - phi)^p d mu_phi + int (V - phi)^p d mu_V ],

with ``mu`` the cell masses of ``theta + dd^c``.  Unbounded ``phi`` are handled
through the approximants ``max(phi, V - k)``; ``E`` is their supremum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UnsupportedError, UsageError
from .envelopes import Theta, v_theta
from .grid import GridPotential, cylinder_laplacian, measure_masses

DEFAULT_LEVELS = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class EnergyResult:
    """Energy and the approximant sequence it was taken from.

    ``value`` is ``inf`` when the approximant energies keep growing.
    ``nonpluripolar`` is the limit of the same integrals restricted to
    ``{phi > V - k}``, which discards the mass the approximants push onto
    the pole set.
    """

    value: float
    sequence: tuple[float, ...]
    levels: tuple[float, ...]
    divergent: bool
    nonpluripolar: float


def _chi_weight(d: np.ndarray, p: float) -> np.ndarray:
    return np.clip(d, 0.0, None) ** p


def _energy_parts(grid, u, V, theta: Theta, p: float, keep=None):
    gp = GridPotential.from_values(grid, u, theta.coeffs, floor=-np.inf)
    mu_phi = measure_masses(gp, theta.h)
    mu_min = measure_masses(GridPotential.from_values(grid, V, theta.coeffs, floor=-np.inf), theta.h)
    w = _chi_weight(V - u, p)
    if keep is not None:
        mu_phi = np.where(keep, mu_phi, 0.0)
    return 0.5 * (float(np.sum(w * mu_phi)) + float(np.sum(w * mu_min)))


def chi_energy(phi: GridPotential, p: float = 1.0, theta=None, levels=DEFAULT_LEVELS) -> EnergyResult:
    """Chi-energy for ``chi(t) = -(-t)^p`` (``p >= 1``) on P1."""
    if phi.grid.layout is None:
        raise UnsupportedError("chi-energy is implemented for one-dimensional models only")
    if p < 1:
        raise UsageError("chi exponent must be at least 1")
    theta = Theta.of(phi.class_coeffs if theta is None else theta)
    if not np.allclose(theta.coeffs, phi.class_coeffs):
        raise UsageError("potential is not psh for the given class")
    grid = phi.grid
    V = v_theta(theta, grid).values if not theta.is_semipositive_reference() else np.zeros(grid.n_nodes)
    raw = np.where(phi.pole, -np.inf, phi.values)
    if np.any(raw - V > 1e-9):
        raise UsageError("potential exceeds V_theta; normalize it first")
    L = cylinder_laplacian(grid)
    seq, np_seq = [], []
    for k in levels:
        u = np.maximum(raw, V - k)
        seq.append(_energy_parts(grid, u, V, theta, p))
        inside = raw > V - k
        keep = inside & ((abs(L) @ (~inside).astype(float)) == 0)
        np_seq.append(_energy_parts(grid, u, V, theta, p, keep))
    inc = np.diff(seq)
    divergent = inc.size >= 2 and inc[-1] > 1e-8 and inc[-1] >= inc[-2] - 1e-12
    value = float("inf") if divergent else float(max(seq))
    return EnergyResult(value, tuple(seq), tuple(levels), bool(divergent), float(np_seq[-1]))
