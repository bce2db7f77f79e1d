"""Green currents of 1-regular maps by normalized pull-back iteration.

With ``alpha`` the Perron class (``f^* alpha = lambda alpha``) and
``gamma(Z) = sum_i alpha_i log|F^(i)(Z)|`` for unit ``Z``, the potentials
``g_{n+1} = (g_n o f + gamma) / lambda`` from ``g_0 = 0`` unroll to::

    g_n(Z) = sum_{j<n} lambda^-(j+1) gamma(f^j Z),

which is evaluated along forward orbits of the grid nodes in log
coordinates (method ``"orbit"``, exact up to rounding).  Method
``"interpolate"`` instead composes the sampled ``g_n`` with ``f`` by bilinear
interpolation on the P1 grid, one step at a time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohomology import is_1_regular, pullback_matrix
from .errors import ConvergenceError, UsageError
from .geometry import DEFAULT_FLOOR, AtlasGrid, default_grid, integrate
from .maps import RationalMap
from .potentials.envelopes import Theta, v_theta
from .potentials.functions import PotentialFunction, pullback_gamma
from .potentials.grid import (CurrentRep, GridPotential, grid_log_coords, interpolate_cylinder,
                              l1_distance, save_potential)

DEFAULT_TOL = 1e-10
DIVERGENCE_RUN = 5
REGULARITY_CHECK = 3


def _orbits(f: RationalMap, L, A, n: int):
    """Yield ``(k, L_k, A_k, norms_k, alive)`` along forward orbits.

    ``norms_k`` are the per-factor log-norms of ``F(Z_k)``; points whose orbit
    meets the indeterminacy set are dropped from ``alive`` for good.
    """
    alive = np.ones(L.shape[0], dtype=bool)
    for k in range(n):
        LW, AW, norms, ok = f.apply_log(L, A)
        yield k, L, A, norms, alive.copy()
        alive &= ok
        L = np.where(alive[:, None], LW, 0.0)
        A = np.where(alive[:, None], AW, 0.0)
    yield n, L, A, None, alive


def _check_hypotheses(f: RationalMap, check_regularity: bool = True):
    act = pullback_matrix(f)
    if act.lambda1 <= 1.0 + 1e-12:
        raise UsageError(f"dynamical degree {act.lambda1:g} is not larger than 1")
    if not act.simple:
        raise UsageError("spectral radius is not a simple eigenvalue")
    if check_regularity:
        verdict = is_1_regular(f, REGULARITY_CHECK)
        if not verdict:
            raise UsageError(f"map is not 1-regular (degree drop at n={verdict.first_failure})")
    return act


class GreenFunction(PotentialFunction):
    """Truncated Green potential ``g_n`` evaluated exactly along orbits."""

    def __init__(self, f: RationalMap, alpha, lam: float, n_terms: int):
        super().__init__(f.space, alpha)
        self.f, self.lam, self.n_terms = f, float(lam), int(n_terms)

    def eval_log(self, L, A):
        L = np.atleast_2d(L)
        A = np.atleast_2d(A)
        g = np.zeros(L.shape[0])
        for k, _, _, norms, alive in _orbits(self.f, L, A, self.n_terms):
            if norms is None:
                g[~alive] = -np.inf
                break
            g[alive] += self.lam ** -(k + 1) * pullback_gamma(self.class_coeffs, norms[alive])
        return g

    def _eval(self, Z):
        from .maps import log_normalize, to_log

        L, A = to_log(Z)
        L, _ = log_normalize(self.space, L)
        return self.eval_log(L, A)


@dataclass
class GreenResult:
    """Outcome of :func:`green_potential`.

    ``trace`` holds ``(n, L1 increment)``; ``sup_trace`` the matching sup-norm
    increments over live nodes, which decay exactly like ``lambda^-n`` for
    holomorphic maps (the L1 increments decay faster on P1 because most
    orbits fall into superattracting basins where ``gamma`` vanishes).
    """

    map: RationalMap
    alpha: np.ndarray
    lam: float
    green_potential: GridPotential
    trace: list = field(default_factory=list)
    sup_trace: list = field(default_factory=list)
    converged: bool = False
    invariance_residual: float = math.nan
    method: str = "orbit"

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def rate(self, skip: int = 2) -> float:
        """Fitted geometric ratio of the sup increments (expect ``1/lambda``)."""
        ys = np.array([v for _, v in self.sup_trace[skip:] if v > 0])
        if ys.size < 3:
            return math.nan
        return float(math.exp(np.polyfit(np.arange(ys.size), np.log(ys), 1)[0]))

    def to_json_dict(self) -> dict:
        return {
            "map": self.map.hash(),
            "alpha": self.alpha.tolist(),
            "lambda": self.lam,
            "method": self.method,
            "converged": self.converged,
            "invariance_residual": self.invariance_residual,
            "trace": [[int(n), float(v)] for n, v in self.trace],
            "sup_trace": [[int(n), float(v)] for n, v in self.sup_trace],
        }


def _increment_norms(grid: AtlasGrid, inc: np.ndarray, alive: np.ndarray):
    a = np.where(alive, np.abs(inc), 0.0)
    return integrate(grid.space, grid, a, floor=-math.inf), float(np.max(a)) if a.size else 0.0


def _watch_divergence(trace, run: int = DIVERGENCE_RUN) -> bool:
    if len(trace) <= run:
        return False
    vals = [v for _, v in trace[-(run + 1):]]
    return all(b > a for a, b in zip(vals, vals[1:]))


def green_potential(f: RationalMap, n_max: int = 60, tol: float = DEFAULT_TOL,
                    grid: AtlasGrid | None = None, method: str = "orbit",
                    check_regularity: bool = True, probes=None) -> GreenResult:
    """Green potential of ``f`` for its Perron class, normalized ``sup = 0``.

    ``probes`` (homogeneous points) are followed alongside the grid and used
    for the sup increments instead of the grid nodes.  Grid orbits usually
    leave the Julia set, where increments are largest, after a few steps,
    so the ``lambda^-n`` rate is only visible on points of the Julia set.

    Raises
    ------
    UsageError
        ``lambda_1 <= 1``, non-simple spectral radius or a degree drop.
    ConvergenceError
        Increments grew for five consecutive steps (trace attached).
    """
    act = _check_hypotheses(f, check_regularity)
    lam, alpha = act.lambda1, act.perron_class
    grid = default_grid(f.space) if grid is None else grid
    if grid.space != f.space:
        raise UsageError("grid and map live on different spaces")
    if method not in ("orbit", "interpolate"):
        raise UsageError(f"unknown method {method!r}")
    L0, A0 = grid_log_coords(grid)
    g = np.zeros(grid.n_nodes)
    trace, sup_trace = [], []
    converged = False
    if method == "orbit":
        N = grid.n_nodes
        Lo, Ao = L0, A0
        if probes is not None:
            from .maps import log_normalize, to_log

            Lp, Ap = to_log(f.space.normalize(np.atleast_2d(np.asarray(probes, dtype=complex))))
            Lp, _ = log_normalize(f.space, Lp)
            Lo, Ao = np.vstack([L0, Lp]), np.vstack([A0, Ap])
        alive_final = np.ones(N, dtype=bool)
        for k, _, _, norms, alive in _orbits(f, Lo, Ao, n_max):
            if norms is None:
                alive_final = alive[:N]
                break
            inc = np.zeros(Lo.shape[0])
            inc[alive] = lam ** -(k + 1) * pullback_gamma(alpha, norms[alive])
            g += inc[:N]
            l1, sup = _increment_norms(grid, inc[:N], alive[:N])
            if probes is not None:
                sup = float(np.max(np.abs(inc[N:])))
            alive = alive[:N]
            trace.append((k + 1, l1))
            sup_trace.append((k + 1, sup))
            alive_final = alive
            if l1 < tol:
                converged = True
                break
            if _watch_divergence(trace):
                raise ConvergenceError("Green iteration increments keep growing", trace=trace, residual=l1)
        n_terms = len(trace)
        func = GreenFunction(f, alpha, lam, n_terms)
        g = np.where(alive_final, g, -np.inf)
    else:
        if grid.layout is None:
            raise UsageError("interpolation method needs the P1 grid")
        LW, AW, norms, ok = f.apply_log(L0, A0)
        gam = np.where(ok, pullback_gamma(alpha, norms), -np.inf)
        s_img = LW[:, 1] - LW[:, 0]
        t_img = AW[:, 1] - AW[:, 0]
        for k in range(n_max):
            new = (interpolate_cylinder(grid, np.where(np.isfinite(g), g, -1e6), s_img, t_img) + gam) / lam
            inc = new - g
            l1, sup = _increment_norms(grid, inc, ok)
            g = new
            trace.append((k + 1, l1))
            sup_trace.append((k + 1, sup))
            if l1 < tol:
                converged = True
                break
            if _watch_divergence(trace):
                raise ConvergenceError("Green iteration increments keep growing", trace=trace, residual=l1)
        func = None
    gp = GridPotential.from_values(grid, g, alpha, "raw", func=func)
    gp = gp.normalized("sup_zero")
    res = invariance_residual(gp, f, lam, alpha)
    return GreenResult(f, alpha, lam, gp, trace, sup_trace, converged, res, method)


def invariance_residual(gp: GridPotential, f: RationalMap, lam: float, alpha) -> float:
    """``|| (g o f + gamma_f)/lambda - g ||_{L1}`` for the unnormalized ``g``.

    ``gp`` stores ``g + offset``; the offset is removed before comparing.
    """
    L, A = grid_log_coords(gp.grid)
    LW, AW, norms, ok = f.apply_log(L, A)
    img = np.full(gp.grid.n_nodes, -np.inf)
    if np.any(ok):
        img[ok] = gp.evaluate_log(LW[ok], AW[ok]) + pullback_gamma(alpha, norms[ok])
    pulled = img / lam + gp.offset * (1.0 - 1.0 / lam)
    both = ok & ~gp.pole
    diff = np.where(both, np.abs(pulled - gp.values), 0.0)
    return integrate(gp.space, gp.grid, diff, floor=-math.inf)


def green_closed_form_p1(Z) -> np.ndarray:
    """``log max(|z0|,|z1|) - log|Z|``: Green potential of ``z -> z^2``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    a = np.abs(Z)
    return np.log(np.max(a, axis=1)) - np.log(np.linalg.norm(a, axis=1))


# ---------------------------------------------------------------------------
# Condition (star) and pull-back sequences


@dataclass(frozen=True)
class StarMonitor:
    values: tuple[float, ...]
    consistent: bool


ROUNDOFF = 1e-12


def star_condition_monitor(f: RationalMap, theta=None, n_max: int = 12, tol: float = 1e-3,
                           grid: AtlasGrid | None = None, V=None) -> StarMonitor:
    """``|| lambda^-n V o f^n ||_{L1}`` for ``n = 1..n_max``.

    ``V`` defaults to ``V_theta``; a :class:`PotentialFunction` or
    :class:`GridPotential` surrogate may be passed instead.
    """
    lam = pullback_matrix(f).lambda1
    grid = default_grid(f.space) if grid is None else grid
    if V is None:
        theta = Theta.of(f.space.reference_class if theta is None else theta)
        if theta.is_semipositive_reference():
            return StarMonitor(tuple(0.0 for _ in range(n_max)), True)
        V = v_theta(theta, grid)
    ev = V.evaluate_log if isinstance(V, GridPotential) else V.eval_log
    L0, A0 = grid_log_coords(grid)
    vals = []
    for k, L, A, _, alive in _orbits(f, L0, A0, n_max):
        if k == 0:
            continue
        v = np.full(grid.n_nodes, -np.inf)
        if np.any(alive):
            v[alive] = ev(L[alive], A[alive])
        vals.append(integrate(f.space, grid, np.abs(np.maximum(v, DEFAULT_FLOOR)) / lam**k))
    tail = vals[len(vals) // 2:]
    ok = all(b <= a * (1 + 1e-9) + ROUNDOFF for a, b in zip(tail, tail[1:])) and tail[-1] < tol
    return StarMonitor(tuple(vals), bool(ok))


@dataclass
class PullbackSequence:
    currents: list
    class_coeffs: list
    distances: list


def pullback_sequence(current: CurrentRep, f: RationalMap, n_max: int = 12,
                      green: GreenResult | None = None) -> PullbackSequence:
    """Normalized pull-backs ``lambda^-n (f^n)^* S`` for ``n = 0..n_max``.

    Potentials follow the forward orbit of every node:
    ``phi_n = phi o f^n + sum_k gamma_{A^(n-1-k) c} o f^k``.  When ``green`` is
    given, L1 distances (both sides ``sup = 0``) to ``p * g`` are reported, with
    ``p`` the Perron projection of the starting class.
    """
    gp = current.potential
    if gp.space != f.space:
        raise UsageError("map and current live on different spaces")
    act = pullback_matrix(f)
    lam, A = act.lambda1, act.matrix.astype(float)
    grid = gp.grid
    ev = gp.evaluate_log
    c0 = np.asarray(current.class_coeffs, dtype=float)
    classes = [c0]
    for _ in range(n_max):
        classes.append(A @ classes[-1])
    proj = None
    if green is not None:
        # left Perron vector from the transpose
        w, vl = np.linalg.eig(A.T)
        ell = np.real(vl[:, np.argmax(np.real(w))])
        proj = float(ell @ c0 / (ell @ act.perron_class))
    L0, A0 = grid_log_coords(grid)
    norms_hist = []
    currents, coeffs, dists = [], [], []
    for k, L, Ak, norms, alive in _orbits(f, L0, A0, n_max):
        vals = np.full(grid.n_nodes, -np.inf)
        if np.any(alive):
            vals[alive] = ev(L[alive], Ak[alive])
            for j, nj in enumerate(norms_hist):
                vals[alive] += pullback_gamma(classes[k - 1 - j], nj[alive])
        vals = vals / lam**k
        ck = classes[k] / lam**k
        pot = GridPotential.from_values(grid, vals, ck, "sup_zero", floor=gp.floor)
        currents.append(CurrentRep(ck, pot))
        coeffs.append(ck)
        if green is not None:
            ref = GridPotential.from_values(grid, proj * green.green_potential.values,
                                            green.alpha * proj, "sup_zero")
            dists.append(l1_distance(pot, ref))
        if norms is not None:
            norms_hist.append(norms)
    return PullbackSequence(currents, coeffs, dists)


# ---------------------------------------------------------------------------
# Serialization


def save_green(result: GreenResult, stem) -> list[Path]:
    """Potential files plus ``stem.trace.json``."""
    stem = Path(stem)
    files = save_potential(result.green_potential, stem)
    tp = stem.with_name(stem.name + ".trace.json")
    tp.write_text(json.dumps(result.to_json_dict(), indent=1, sort_keys=True))
    return files + [tp]
