"""Upper envelopes, extremal functions and Monge-Ampere capacity.

On the projective line every envelope is the maximal discrete subsolution of
an obstacle problem on the log-polar graph::

    min(psi - u, mu(u)) = 0,     mu(u) = theta + (1/2pi) L u,

where ``psi`` is the obstacle (``+inf`` where unconstrained) and ``mu(u)`` the
cell masses of ``theta + dd^c u``.  It is solved exactly by policy iteration
(each step one sparse linear solve), and :func:`relaxation_sweep` is the
Jacobi fixed-point map whose fixed points are exactly these envelopes.

On surfaces only the cases with a closed form are computed; the capacity is
reported as a lower bound from an explicit candidate family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConvergenceError, InternalError, UnsupportedError, UsageError
from ..geometry import AtlasGrid, Kind, ModelSpace, p1_grid, space_from_name
from .functions import PotentialFunction, SmoothLogDivisor
from .grid import GridPotential, cylinder_laplacian, grid_log_coords, theta_masses

#: Default log-polar grid for envelope computations (one sparse solve per step).
ENVELOPE_GRID = dict(n_s=96, n_theta=64, S=24.0)
ROUNDOFF = 1e-12


def envelope_grid() -> AtlasGrid:
    return p1_grid(**ENVELOPE_GRID)


@dataclass(frozen=True)
class Theta:
    """Smooth closed form ``theta_c + dd^c h`` in the class with coefficients ``c``."""

    coeffs: np.ndarray
    h: PotentialFunction | None = None

    @classmethod
    def of(cls, theta) -> "Theta":
        if isinstance(theta, Theta):
            return theta
        return cls(np.atleast_1d(np.asarray(theta, dtype=float)))

    def is_semipositive_reference(self) -> bool:
        return self.h is None and bool(np.all(self.coeffs >= 0))


def _check_psef(space: ModelSpace, theta: Theta):
    if theta.coeffs.shape != (space.h11_rank,):
        raise UsageError("class coefficients do not match the model basis")
    if np.any(theta.coeffs < 0):
        raise UsageError("class is not pseudo-effective")


def _masses(grid: AtlasGrid, theta: Theta) -> np.ndarray:
    return theta_masses(grid, theta.coeffs, theta.h)


def solve_obstacle(grid: AtlasGrid, mass: np.ndarray, psi: np.ndarray, max_iter: int = 500):
    """Maximal ``u`` with ``u <= psi`` and ``mass + (1/2pi) L u >= 0``.

    Returns ``(u, iterations)``.  ``psi`` may be ``+inf`` (no constraint) but
    must be finite somewhere.  Policy iteration on ``min(psi - u, mu(u)) = 0``
    exactly as written (cell masses, not densities, in the second row).
    """
    L = cylinder_laplacian(grid)
    N = grid.n_nodes
    finite = np.isfinite(psi)
    if not np.any(finite):
        raise UsageError("obstacle is unconstrained everywhere")
    rhs_eq = -2.0 * math.pi * mass
    active = finite.copy()
    u = np.where(finite, psi, 0.0)
    for it in range(1, max_iter + 1):
        # rows: active -> u_i = psi_i ; inactive -> (L u)_i = -2pi mass_i
        D = sp.diags(active.astype(float))
        Dn = sp.diags((~active).astype(float))
        M = (Dn @ L + D).tocsc()
        b = np.where(active, np.where(finite, psi, 0.0), rhs_eq)
        u = spla.spsolve(M, b)
        mu = mass + (L @ u) / (2.0 * math.pi)
        gap = np.where(finite, psi - u, np.inf)
        new_active = finite & (gap <= mu)
        if np.array_equal(new_active, active):
            return u, it
        # policies can cycle on ties at roundoff; accept a solved system
        if np.max(np.abs(np.minimum(gap, mu))) <= ROUNDOFF and np.min(mu) >= -ROUNDOFF \
                and np.min(gap) >= -ROUNDOFF:
            return u, it
        active = new_active
    res = float(np.max(np.abs(np.minimum(np.where(finite, psi - u, np.inf), mu))))
    raise ConvergenceError("obstacle policy iteration did not settle", residual=res)


def relaxation_sweep(grid: AtlasGrid, mass: np.ndarray, psi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One Jacobi sweep: each node becomes the largest value keeping its cell
    mass nonnegative given its neighbours, capped by the obstacle."""
    L = cylinder_laplacian(grid)
    diag = -L.diagonal()
    off = L + sp.diags(diag)
    cand = (off @ u + 2.0 * math.pi * mass) / diag
    return np.minimum(psi, cand)


def v_theta(theta, grid: AtlasGrid | None = None, space=None) -> GridPotential:
    """Envelope ``V_theta = sup{phi theta-psh, phi <= 0}``."""
    theta = Theta.of(theta)
    if grid is None:
        space = space_from_name(space or ("P1xP1" if theta.coeffs.size == 2 else "P1"))
        grid = envelope_grid() if space.kind is Kind.P1 else None
    if grid is None:
        from ..geometry import default_grid

        grid = default_grid(space)
    _check_psef(grid.space, theta)
    if theta.is_semipositive_reference():
        return GridPotential.from_values(grid, np.zeros(grid.n_nodes), theta.coeffs, "sup_zero")
    if grid.space.kind is not Kind.P1:
        raise UnsupportedError("envelopes of non-semipositive forms are implemented on P1 only")
    u, _ = solve_obstacle(grid, _masses(grid, theta), np.zeros(grid.n_nodes))
    return GridPotential.from_values(grid, u, theta.coeffs, "raw")


@dataclass(frozen=True)
class ExtremalResult:
    potential: GridPotential
    M: float


def extremal_function(K: np.ndarray, theta, grid: AtlasGrid | None = None) -> ExtremalResult:
    """Global extremal function of the node set ``K`` and its sup ``M_theta(K)``."""
    theta = Theta.of(theta)
    grid = envelope_grid() if grid is None else grid
    K = np.asarray(K, dtype=bool)
    if K.shape != (grid.n_nodes,):
        raise UsageError("node mask is not aligned with the grid")
    if not np.any(K):
        raise UsageError("K must be nonempty")
    _check_psef(grid.space, theta)
    if grid.space.kind is not Kind.P1:
        if np.all(K) and theta.is_semipositive_reference():
            return ExtremalResult(GridPotential.from_values(grid, np.zeros(grid.n_nodes), theta.coeffs), 0.0)
        raise UnsupportedError("extremal functions are implemented on P1 only")
    if np.all(K):
        V = v_theta(theta, grid)
        return ExtremalResult(V, V.sup())
    psi = np.where(K, 0.0, np.inf)
    u, _ = solve_obstacle(grid, _masses(grid, theta), psi)
    gp = GridPotential.from_values(grid, u, theta.coeffs, "raw")
    return ExtremalResult(gp, float(np.max(u)))


@dataclass(frozen=True)
class CapacityResult:
    value: float
    lower_bound: bool
    volume: float
    method: str


def _cap_p1(B: np.ndarray, theta: Theta, grid: AtlasGrid) -> CapacityResult:
    mass = _masses(grid, theta)
    vol = float(np.sum(mass))
    if not np.any(B):
        return CapacityResult(0.0, False, vol, "empty")
    V = v_theta(theta, grid).values if not theta.is_semipositive_reference() else np.zeros(grid.n_nodes)
    psi = np.where(B, V - 1.0, V)
    u, _ = solve_obstacle(grid, mass, psi)
    mu = mass + (cylinder_laplacian(grid) @ u) / (2.0 * math.pi)
    raw = float(np.sum(mu[B]))
    if raw < -1e-9 or raw > vol + 1e-9:
        raise InternalError(f"capacity {raw} outside [0, {vol}]")
    return CapacityResult(min(max(raw, 0.0), vol), False, vol, "relative_extremal")


def _cap_surface(B: np.ndarray, theta: Theta, grid: AtlasGrid) -> CapacityResult:
    """Lower bound: best of ``V = 0`` and smooth log candidates centred in ``B``."""
    from .hessian import ma_mass

    if not theta.is_semipositive_reference():
        raise UnsupportedError("surface capacity needs a semipositive reference form")
    sp_ = grid.space
    vol = sp_.volume_of_class(theta.coeffs)
    if not np.any(B):
        return CapacityResult(0.0, True, vol, "empty")
    scale = vol / float(np.sum(grid.weights))
    best = float(np.sum(grid.weights[B])) * scale
    idx = np.nonzero(B)[0]
    centers = idx[np.argsort(-grid.weights[idx])[:2]]
    cmin = float(np.min(theta.coeffs))
    for ci in centers:
        P = grid.homog[ci]
        for factor in range(len(sp_.factors)):
            sl = sp_.factor_slices[factor]
            form = np.conj(P[sl]) if sl.stop - sl.start == 3 else np.array([P[sl][1], -P[sl][0]])
            if sl.stop - sl.start == 3:
                continue  # a point in P2 is not a divisor; use pairs of lines below
            for eps in (1e-1, 1e-2, 1e-4):
                w = min(cmin, 2.0 / abs(math.log(eps)))
                cand = SmoothLogDivisor(sp_, form, eps, w, factor)
                coeffs = theta.coeffs
                m = ma_mass(_Relative(cand, coeffs), grid, mask=B, coeffs=coeffs)
                best = max(best, float(np.sum(m[B])) * scale)
        if sp_.kind is Kind.P2:
            for eps in (1e-1, 1e-2, 1e-4):
                w = min(cmin, 2.0 / abs(math.log(eps)))
                cand = _PointLog(sp_, P, eps, w, theta.coeffs)
                m = ma_mass(cand, grid, mask=B, coeffs=theta.coeffs)
                best = max(best, float(np.sum(m[B])) * scale)
    return CapacityResult(min(best, vol), True, vol, "candidate_lower_bound")


class _Relative(PotentialFunction):
    """View a potential as ``theta_c``-psh for a larger class ``c``."""

    def __init__(self, phi: PotentialFunction, coeffs):
        super().__init__(phi.space, coeffs)
        self.phi = phi

    def _eval(self, Z):
        return self.phi._eval(Z)


class _PointLog(PotentialFunction):
    """``w/2 log(1 - |<Z,P>|^2 + eps)``: smooth, concentrated near ``P`` in P2."""

    def __init__(self, space, P, eps, weight, coeffs):
        super().__init__(space, coeffs)
        self.P = space.normalize(np.asarray(P)[None, :])[0]
        self.eps, self.weight = float(eps), float(weight)

    def _eval(self, Z):
        d2 = np.clip(1.0 - np.abs(Z @ np.conj(self.P)) ** 2, 0.0, None)
        return 0.5 * self.weight * np.log(d2 + self.eps)


def capacity(B: np.ndarray, theta, grid: AtlasGrid | None = None) -> CapacityResult:
    """Monge-Ampere capacity of the node set ``B``.

    Exact on the grid for P1 (the operator is linear, so the supremum is
    attained by the relative extremal function); a certified lower bound on
    surfaces.
    """
    theta = Theta.of(theta)
    grid = envelope_grid() if grid is None else grid
    B = np.asarray(B, dtype=bool)
    if B.shape != (grid.n_nodes,):
        raise UsageError("node mask is not aligned with the grid")
    _check_psef(grid.space, theta)
    if grid.space.kind is Kind.P1:
        return _cap_p1(B, theta, grid)
    return _cap_surface(B, theta, grid)


def capacity_lp(B: np.ndarray, theta, grid: AtlasGrid) -> float:
    """Capacity on P1 by direct linear programming (small grids; test oracle)."""
    from scipy.optimize import linprog

    theta = Theta.of(theta)
    mass = _masses(grid, theta)
    L = cylinder_laplacian(grid)
    V = v_theta(theta, grid).values if not theta.is_semipositive_reference() else np.zeros(grid.n_nodes)
    Bf = np.asarray(B, dtype=float)
    c = -(L.T @ Bf) / (2.0 * math.pi)
    res = linprog(c, A_ub=-L / (2.0 * math.pi), b_ub=mass, bounds=list(zip(V - 1.0, V)), method="highs")
    if not res.success:
        raise InternalError(f"linear program failed: {res.message}")
    return float(np.sum(mass[np.asarray(B, dtype=bool)]) - res.fun)


def sublevel_mask(gp: GridPotential, t: float, V: GridPotential | None = None) -> np.ndarray:
    """Nodes where ``phi - V_theta < -t``."""
    base = gp.values if V is None else gp.values - V.values
    return base < -t
