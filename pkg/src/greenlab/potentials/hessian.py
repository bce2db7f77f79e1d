"""Finite-difference complex Hessians of analytic potentials in charts.

Used where no discrete Laplacian is available (two-dimensional models): local
positivity of ``theta + dd^c phi`` and its Monge-Ampere density.
"""

from __future__ import annotations

import math

import numpy as np

from ..geometry import AtlasGrid, fs_density
from .functions import PotentialFunction

#: ``(dd^c u)^k`` density is ``MA_FACTOR[k] * det(d dbar u)`` times Lebesgue measure.
MA_FACTOR = {1: 2.0 / math.pi, 2: 8.0 / math.pi**2}


def _local(func: PotentialFunction, chart, coeffs):
    from .grid import class_local_potential

    def u(w):
        Z = func.space.normalize(chart.from_chart(w))
        return func(Z) + class_local_potential(func.space, coeffs, w)

    return u


def complex_hessian(u, w: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """``d^2 u / dw_j d conj(w_k)`` at points ``w`` (shape ``(N, k)``)."""
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    n, k = w.shape
    dirs = []
    for j in range(k):
        e = np.zeros(k, dtype=complex)
        e[j] = 1.0
        dirs += [e, 1j * e]
    m = len(dirs)
    u0 = u(w)
    R = np.empty((n, m, m))
    for a in range(m):
        da = h * dirs[a]
        R[:, a, a] = (u(w + da) - 2 * u0 + u(w - da)) / h**2
        for b in range(a + 1, m):
            db = h * dirs[b]
            R[:, a, b] = R[:, b, a] = (u(w + da + db) - u(w + da - db) - u(w - da + db) + u(w - da - db)) / (4 * h**2)
    H = np.empty((n, k, k), dtype=complex)
    for j in range(k):
        for l in range(k):
            xj, yj, xl, yl = 2 * j, 2 * j + 1, 2 * l, 2 * l + 1
            H[:, j, l] = 0.25 * (R[:, xj, xl] + R[:, yj, yl] + 1j * (R[:, xj, yl] - R[:, yj, xl]))
    return H


def _per_chart(func, grid: AtlasGrid, mask, coeffs, fn):
    out = np.full(grid.n_nodes, np.nan)
    mask = np.ones(grid.n_nodes, dtype=bool) if mask is None else mask
    coeffs = func.class_coeffs if coeffs is None else coeffs
    for g in grid.grids:
        sel = np.nonzero(grid.chart_ids == g.chart_id)[0]
        keep = mask[sel]
        if not np.any(keep):
            continue
        H = complex_hessian(_local(func, g.chart, coeffs), g.coords[keep])
        out[sel[keep]] = fn(H, g.coords[keep])
    return out


def min_hessian_eigenvalue(func: PotentialFunction, grid: AtlasGrid, mask=None, coeffs=None) -> np.ndarray:
    """Smallest eigenvalue of the local Levi form of ``theta_c + dd^c phi`` (NaN off mask)."""
    out = _per_chart(func, grid, mask, coeffs, lambda H, w: np.linalg.eigvalsh(H)[:, 0])
    return out[~np.isnan(out)] if mask is not None else out


def ma_mass(func: PotentialFunction, grid: AtlasGrid, mask=None, coeffs=None) -> np.ndarray:
    """Monge-Ampere mass of ``theta_c + dd^c phi`` in each selected cell (0 elsewhere)."""
    k = grid.space.dim
    sp = grid.space

    def dens(H, w):
        det = np.real(np.linalg.det(H))
        return MA_FACTOR[k] * np.clip(det, 0.0, None) / fs_density(sp, w)

    ratio = _per_chart(func, grid, mask, coeffs, dens)
    return np.where(np.isnan(ratio), 0.0, ratio) * grid.weights
