"""Decay of capacities of sublevel sets (one-dimensional model)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError, UsageError
from ..geometry import AtlasGrid, Kind
from ..potentials.energy import chi_energy
from ..potentials.envelopes import Theta, capacity, envelope_grid, sublevel_mask, v_theta
from ..potentials.functions import PotentialFunction
from ..potentials.grid import GridPotential, measure_masses
from ..potentials.lelong import lelong_number
from .equidistribution import FINE_RADII, LELONG_TOL
from .report import ExperimentReport

DECAY_RATIO = 0.1


def _normalized(phi: PotentialFunction, V: GridPotential, grid: AtlasGrid) -> GridPotential:
    gp = GridPotential.sample(phi, grid, "raw", floor=-math.inf)
    vals = np.where(gp.pole, -np.inf, gp.values)
    shift = float(np.max(vals - V.values))
    return GridPotential.from_values(grid, vals - shift, gp.class_coeffs, "raw", floor=-math.inf)


def _min_point(phi: PotentialFunction, gp: GridPotential) -> np.ndarray:
    i = int(np.argmin(np.where(gp.pole, -np.inf, gp.values)))
    return gp.grid.homog[i]


def capacity_decay(phi: PotentialFunction, theta=None, t_grid=None, grid: AtlasGrid | None = None,
                   p: float = 1.0, seed: int = 0, map_hash: str = "nomap") -> ExperimentReport:
    """``t Cap_theta(phi - V_theta < -t)`` over ``t_grid`` on P1.

    ``phi`` is shifted so that ``max(phi - V_theta) = 0``.  When the
    ``chi``-energy (``chi(t) = -(-t)^p``) is finite, every ``t`` is also
    checked against

        Cap(phi - V < -2t) <= MA(V)(phi - V < -2t) + I_chi / (t |chi(-t)|),

    with ``I_chi = int |chi(phi - V)| MA(phi)``.  A violation is the only way
    to an ``inconsistent`` verdict.  Missing decay is ``inconclusive``, and
    attributed to a positive Lelong number when one is found at the minimum.
    """
    grid = envelope_grid() if grid is None else grid
    if grid.space.kind is not Kind.P1:
        raise UsageError("capacity decay is implemented on P1 (k = 1)")
    theta = Theta.of(phi.class_coeffs if theta is None else theta)
    if not np.allclose(theta.coeffs, phi.class_coeffs):
        raise UsageError("potential is not psh for the given class")
    t = np.arange(1.0, 21.0) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise UsageError("t grid must be positive")
    V = v_theta(theta, grid)
    gp = _normalized(phi, V, grid)
    caps = np.array([capacity(sublevel_mask(gp, tt, V), theta, grid).value for tt in t])
    tcap = t * caps
    config = {"t_grid": t.tolist(), "grid": list(grid.key), "class": theta.coeffs.tolist(), "p": p}
    rep = ExperimentReport("capacity_decay", config, seed, map_hash=map_hash)
    rep.series = {"t": t.tolist(), "capacity": caps.tolist(), "t_capacity": tcap.tolist()}
    rep.constants = {"C_phi": float(np.max(t ** (1.0 + p) * caps))}

    violated = False
    energy = chi_energy(gp, p, theta)
    rep.constants["chi_energy"] = energy.value
    if math.isfinite(energy.value):
        mu_phi = measure_masses(gp, theta.h)
        mu_V = measure_masses(V, theta.h)
        I = float(np.sum(np.clip(V.values - gp.values, 0.0, None) ** p * mu_phi))
        lhs, rhs = [], []
        for tt in t:
            B = sublevel_mask(gp, 2.0 * tt, V)
            lhs.append(capacity(B, theta, grid).value)
            rhs.append(float(np.sum(mu_V[B])) + I / (tt * tt**p))
        lhs, rhs = np.array(lhs), np.array(rhs)
        rep.series["lemma_capacity"] = lhs.tolist()
        rep.series["lemma_bound"] = rhs.tolist()
        rep.constants["I_chi"] = I
        violated = bool(np.any(lhs > rhs + 1e-9))
    else:
        rep.notes.append("chi-energy infinite: bound check skipped")

    if violated:
        rep.verdict = "inconsistent"
    elif tcap[-1] == 0.0 or tcap[-1] <= DECAY_RATIO * np.max(tcap):
        rep.verdict = "consistent"
    else:
        rep.verdict = "inconclusive"
        try:
            nu = lelong_number(phi, _min_point(phi, gp), FINE_RADII)
        except (DomainError, UsageError):
            nu = math.nan
        rep.constants["lelong_at_min"] = nu
        if nu > LELONG_TOL:
            rep.notes.append("expected failure: positive Lelong")
        else:
            rep.notes.append("no decay on the tested range")
    return rep
