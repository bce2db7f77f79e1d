"""Grid-sampled quasi-psh functions, discrete Laplacian masses and currents.

Values live on the nodes of an :class:`~greenlab.geometry.AtlasGrid`; each
node belongs to exactly one chart, so the per-chart arrays are views of one
global array.  Poles (``-inf`` or values below the floor) are clamped and
flagged in a mask.

On the projective line the log-polar cylinder ``z = exp(s + i t)`` is
conformal, so ``dd^c u = (1/2pi)(u_ss + u_tt) ds dt`` and the five-point graph
Laplacian gives the ``dd^c`` mass of each cell directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import UnsupportedError, UsageError
from ..geometry import (DEFAULT_FLOOR, AtlasGrid, Kind, ModelSpace, default_grid, integrate,
                        p1_grid, surface_grid)
from ..maps import RationalMap, log_normalize, to_log
from .functions import PotentialFunction, PulledBack, pullback_gamma

NORMALIZATIONS = ("sup_zero", "mean_zero", "raw")


def class_local_potential(space: ModelSpace, coeffs, w) -> np.ndarray:
    """Local potential of ``theta_c`` in chart coordinates ``w``."""
    c = np.asarray(coeffs, dtype=float)
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    if space.kind is Kind.P1xP1:
        return c[0] * 0.5 * np.log1p(np.abs(w[:, 0]) ** 2) + c[1] * 0.5 * np.log1p(np.abs(w[:, 1]) ** 2)
    return c[0] * 0.5 * np.log1p(np.sum(np.abs(w) ** 2, axis=1))


@dataclass(frozen=True, eq=False)
class GridPotential:
    """A quasi-psh function sampled on an atlas grid.

    Attributes
    ----------
    values : ndarray
        Node values, clamped below at ``floor``.
    pole : ndarray of bool
        Nodes whose true value is ``-inf`` or below the floor.
    class_coeffs : ndarray
        Reference class: the function is ``theta_c``-psh.
    normalization : {"sup_zero", "mean_zero", "raw"}
    func : PotentialFunction, optional
        Analytic source; when present, off-grid evaluation is exact.
    offset : float
        Constant added to ``func`` by normalization.
    """

    grid: AtlasGrid
    values: np.ndarray
    pole: np.ndarray
    class_coeffs: np.ndarray
    normalization: str = "raw"
    func: PotentialFunction | None = None
    offset: float = 0.0
    floor: float = DEFAULT_FLOOR

    @classmethod
    def from_values(cls, grid: AtlasGrid, values, class_coeffs, normalization: str = "raw",
                    func: PotentialFunction | None = None, offset: float = 0.0,
                    floor: float = DEFAULT_FLOOR) -> "GridPotential":
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.n_nodes,):
            raise UsageError("values are not aligned with grid nodes")
        if np.any(np.isposinf(v)):
            raise UsageError("potential takes the value +inf")
        pole = np.isnan(v) | (v < floor)
        v = np.where(pole, floor, v)
        if normalization not in NORMALIZATIONS:
            raise UsageError(f"unknown normalization {normalization!r}")
        gp = cls(grid, v, pole, np.atleast_1d(np.asarray(class_coeffs, dtype=float)), "raw", func, offset, floor)
        return gp.normalized(normalization) if normalization != "raw" else gp

    @classmethod
    def sample(cls, func: PotentialFunction, grid: AtlasGrid | None = None,
               normalization: str = "raw", floor: float = DEFAULT_FLOOR) -> "GridPotential":
        grid = default_grid(func.space) if grid is None else grid
        if grid.space != func.space:
            raise UsageError("grid and potential live on different spaces")
        L, A = _grid_log(grid)
        return cls.from_values(grid, func.eval_log(L, A), func.class_coeffs, normalization, func, 0.0, floor)

    @property
    def space(self) -> ModelSpace:
        return self.grid.space

    # -- normalization --------------------------------------------------

    def sup(self) -> float:
        live = ~self.pole
        if not np.any(live):
            raise UsageError("all nodes are masked")
        return float(np.max(self.values[live]))

    def shifted(self, c: float) -> "GridPotential":
        v = np.where(self.pole, self.values, self.values + c)
        return replace(self, values=v, offset=self.offset + c)

    def normalized(self, tag: str) -> "GridPotential":
        if tag not in NORMALIZATIONS:
            raise UsageError(f"unknown normalization {tag!r}")
        if tag == "raw":
            return replace(self, normalization="raw")
        if tag == "sup_zero":
            out = self.shifted(-self.sup())
        else:
            out = self.shifted(-integrate(self.space, self.grid, self.values, self.floor))
        return replace(out, normalization=tag)

    # -- evaluation -------------------------------------------------------

    def evaluate_log(self, L, A) -> np.ndarray:
        if self.func is not None:
            return self.func.eval_log(L, A) + self.offset
        if self.grid.layout is None:
            raise UnsupportedError("off-grid evaluation of sampled potentials needs the P1 grid")
        L = np.atleast_2d(L)
        A = np.atleast_2d(A)
        return interpolate_cylinder(self.grid, self.values, L[:, 1] - L[:, 0], A[:, 1] - A[:, 0])

    def evaluate(self, Z) -> np.ndarray:
        L, A = to_log(self.space.normalize(np.atleast_2d(Z)))
        L, _ = log_normalize(self.space, L)
        return self.evaluate_log(L, A)

    # -- chart views -----------------------------------------------------

    def chart_values(self, chart_id: int):
        m = self.grid.chart_ids == chart_id
        g = next(g for g in self.grid.grids if g.chart_id == chart_id)
        return g.coords, self.values[m], self.pole[m]

    def local_values(self, chart_id: int) -> np.ndarray:
        """Values of the local psh function ``phi + (potential of theta_c)`` in a chart."""
        coords, vals, pole = self.chart_values(chart_id)
        return np.where(pole, -np.inf, vals + class_local_potential(self.space, self.class_coeffs, coords))


def _grid_log(grid: AtlasGrid):
    key = "log_coords"
    if key not in grid._cache:
        L, A = to_log(grid.homog)
        L, _ = log_normalize(grid.space, L)
        grid._cache[key] = (L, A)
    return grid._cache[key]


def grid_log_coords(grid: AtlasGrid):
    """Normalized log-moduli/arguments of the grid nodes (cached)."""
    return _grid_log(grid)


def interpolate_cylinder(grid: AtlasGrid, values: np.ndarray, s, t) -> np.ndarray:
    """Bilinear interpolation in ``(s, t)`` on the log-polar grid.

    Beyond the outermost rings the value is interpolated linearly towards the
    pole node, placed one ring spacing further out.
    """
    lay = grid.layout
    s = np.asarray(s, dtype=float)
    t = np.mod(np.asarray(t, dtype=float), 2.0 * math.pi)
    nr = 2 * lay.n_s
    rings = values[1:-1].reshape(nr, lay.n_theta)
    x = (s + lay.S) / lay.hs - 0.5  # ring coordinate, poles at -1 and nr
    x = np.clip(np.nan_to_num(x, nan=-1.0, neginf=-1.0, posinf=float(nr)), -1.0, float(nr))
    y = t / lay.ht - 0.5
    j0 = np.floor(y).astype(int)
    fy = y - j0
    ja, jb = j0 % lay.n_theta, (j0 + 1) % lay.n_theta
    padded = np.vstack([np.full((1, lay.n_theta), values[0]), rings, np.full((1, lay.n_theta), values[-1])])
    xi = x + 1.0
    i0 = np.clip(np.floor(xi).astype(int), 0, nr)
    fx = xi - i0
    i1 = np.minimum(i0 + 1, nr + 1)
    v00, v01 = padded[i0, ja], padded[i0, jb]
    v10, v11 = padded[i1, ja], padded[i1, jb]
    return (1 - fx) * ((1 - fy) * v00 + fy * v01) + fx * ((1 - fy) * v10 + fy * v11)


# ---------------------------------------------------------------------------
# Laplacian and masses (projective line)


def _require_cylinder(grid: AtlasGrid):
    if grid.layout is None:
        raise UnsupportedError("discrete Laplacian masses are implemented on the P1 grid only")
    return grid.layout


def cylinder_laplacian(grid: AtlasGrid) -> sp.csr_matrix:
    """Graph Laplacian ``(L u)_i = sum_j c_ij (u_j - u_i)`` of the log-polar grid."""
    lay = _require_cylinder(grid)
    if "laplacian" in grid._cache:
        return grid._cache["laplacian"]
    nr, nt = 2 * lay.n_s, lay.n_theta
    N = lay.n_nodes
    cs, ct = lay.ht / lay.hs, lay.hs / lay.ht
    idx = lay.ring_index(np.arange(nr)[:, None], np.arange(nt)[None, :])
    rows, cols, vals = [], [], []

    def edge(a, b, c):
        a, b = np.ravel(a), np.ravel(b)
        rows.extend([a, b])
        cols.extend([b, a])
        vals.extend([np.full(a.size, c), np.full(a.size, c)])

    edge(idx, np.roll(idx, -1, axis=1), ct)
    edge(idx[:-1], idx[1:], cs)
    edge(np.zeros(nt, dtype=int), idx[0], cs)
    edge(np.full(nt, N - 1), idx[-1], cs)
    r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    W = sp.csr_matrix((v, (r, c)), shape=(N, N))
    L = W - sp.diags(np.asarray(W.sum(axis=1)).ravel())
    L = L.tocsr()
    grid._cache["laplacian"] = L
    return L


def ddc_masses(grid: AtlasGrid, values) -> np.ndarray:
    """``dd^c`` mass of every cell: ``(1/2pi) (L u)_i``."""
    return cylinder_laplacian(grid) @ np.asarray(values, dtype=float) / (2.0 * math.pi)


def _fs_unit_masses(grid: AtlasGrid) -> np.ndarray:
    """Cell masses of ``omega_FS`` consistent with the graph Laplacian.

    On the cylinder ``omega_FS = dd^c psi`` with ``psi(s) = 1/2 log(2 cosh s)``,
    so ring masses are ``(1/2pi) (L psi)_i`` (pole nodes sit one ring spacing
    beyond the last ring); the poles carry their exact cap masses.  Then
    ``theta + dd^c phi`` vanishes identically on the grid wherever ``phi`` is the
    sampled potential of a point mass, instead of up to truncation error.
    """
    if "fs_unit" not in grid._cache:
        lay = grid.layout
        s = lay.s
        ext = np.concatenate([[s[0] - lay.hs], s, [s[-1] + lay.hs]])
        psi_r = 0.5 * (np.abs(ext) + np.log1p(np.exp(-2.0 * np.abs(ext))))
        psi = np.concatenate([[psi_r[0]], np.repeat(psi_r[1:-1], lay.n_theta), [psi_r[-1]]])
        m = cylinder_laplacian(grid) @ psi / (2.0 * math.pi)
        m[0], m[-1] = grid.weights[0], grid.weights[-1]
        grid._cache["fs_unit"] = m
    return grid._cache["fs_unit"]


def theta_masses(grid: AtlasGrid, coeffs, h: PotentialFunction | None = None) -> np.ndarray:
    """Cell masses of ``theta = theta_c + dd^c h``."""
    _require_cylinder(grid)
    m = float(np.asarray(coeffs, dtype=float)[0]) * _fs_unit_masses(grid)
    if h is not None:
        L, A = _grid_log(grid)
        m = m + ddc_masses(grid, h.eval_log(L, A))
    return m


def measure_masses(gp: GridPotential, h: PotentialFunction | None = None) -> np.ndarray:
    """Masses of ``theta + dd^c phi`` per cell (P1)."""
    return theta_masses(gp.grid, gp.class_coeffs, h) + ddc_masses(gp.grid, gp.values)


def disk_mass(gp: GridPotential, ring: int) -> float:
    """Mass of ``theta_c + dd^c phi`` on ``{s < s_ring + hs/2}``, by boundary flux.

    Independent of the (clamped) value at the pole inside the disk.
    """
    lay = _require_cylinder(gp.grid)
    nr, nt = 2 * lay.n_s, lay.n_theta
    if not 0 <= ring < nr - 1:
        raise UsageError("ring index out of range")
    R = gp.values[1:-1].reshape(nr, nt)
    flux = (lay.ht / lay.hs) * np.sum(R[ring + 1] - R[ring]) / (2.0 * math.pi)
    inside = 1 + (ring + 1) * nt
    return float(flux + gp.class_coeffs[0] * np.sum(_fs_unit_masses(gp.grid)[:inside]))


# ---------------------------------------------------------------------------
# Currents


@dataclass(frozen=True, eq=False)
class CurrentRep:
    """Positive closed (1,1) current ``theta_c + dd^c phi``."""

    class_coeffs: np.ndarray
    potential: GridPotential

    @classmethod
    def from_function(cls, func: PotentialFunction, grid: AtlasGrid | None = None,
                      normalization: str = "raw") -> "CurrentRep":
        gp = GridPotential.sample(func, grid, normalization)
        return cls(gp.class_coeffs, gp)

    def min_density(self) -> float:
        """Smallest density of the current at interior unmasked nodes.

        On P1 the density is taken with respect to ``ds dt``; on surfaces the
        smallest eigenvalue of the local complex Hessian is used (requires an
        analytic potential).
        """
        gp = self.potential
        if gp.grid.layout is not None:
            lay = gp.grid.layout
            m = measure_masses(gp) / (lay.hs * lay.ht)
            L = cylinder_laplacian(gp.grid)
            near_pole = (abs(L) @ gp.pole.astype(float)) > 0
            ok = ~gp.pole & ~near_pole
            ok[0] = ok[-1] = False
            return float(np.min(m[ok])) if np.any(ok) else math.inf
        if gp.func is None:
            raise UnsupportedError("surface positivity check needs an analytic potential")
        from .hessian import min_hessian_eigenvalue

        return float(np.min(min_hessian_eigenvalue(gp.func, gp.grid, mask=~gp.pole)))

    def is_positive(self, tol: float = 1e-6) -> bool:
        return self.min_density() >= -tol


def pullback(current: CurrentRep, f: RationalMap) -> CurrentRep:
    """Pull back a current by ``f``: class ``A c``, potential ``phi o f + gamma_f``.

    Nodes whose orbit hits the indeterminacy set are pole-masked.
    """
    gp = current.potential
    if f.space != gp.space:
        raise UsageError("map and current live on different spaces")
    if gp.func is not None:
        func = PulledBack(gp.func + gp.offset if gp.offset else gp.func, f)
        new = GridPotential.sample(func, gp.grid, "raw", gp.floor)
        return CurrentRep(new.class_coeffs, new)
    from ..cohomology import pullback_matrix

    A = pullback_matrix(f).matrix
    L, Aa = _grid_log(gp.grid)
    LW, AW, norms, ok = f.apply_log(L, Aa)
    vals = np.full(gp.grid.n_nodes, -np.inf)
    vals[ok] = gp.evaluate_log(LW[ok], AW[ok]) + pullback_gamma(gp.class_coeffs, norms[ok])
    new = GridPotential.from_values(gp.grid, vals, A @ gp.class_coeffs, "raw", floor=gp.floor)
    return CurrentRep(new.class_coeffs, new)


def l1_distance(a: GridPotential, b: GridPotential) -> float:
    """``int |phi_1 - phi_2| omega^k`` with poles clamped at the floor."""
    if a.grid is not b.grid and a.grid.key != b.grid.key:
        raise UsageError("potentials are sampled on different grids")
    if a.normalization != b.normalization:
        raise UsageError(f"normalization mismatch: {a.normalization} vs {b.normalization}")
    return integrate(a.space, a.grid, np.abs(a.values - b.values), floor=-math.inf)


# ---------------------------------------------------------------------------
# Serialization


def _grid_spec(grid: AtlasGrid) -> dict:
    if grid.layout is not None:
        return {"type": "cylinder", "n_s": grid.layout.n_s, "n_theta": grid.layout.n_theta, "S": grid.layout.S}
    n_r, n_t = grid.grids[0].resolution
    return {"type": "polar", "n_r": n_r, "n_theta": n_t}


def grid_from_desc(space: ModelSpace, desc: dict) -> AtlasGrid:
    if desc["type"] == "cylinder":
        return p1_grid(desc["n_s"], desc["n_theta"], desc["S"])
    return surface_grid(space, desc["n_r"], desc["n_theta"])


def save_potential(gp: GridPotential, stem) -> list[Path]:
    """Write ``stem.json`` (header) and one ``stem.chart<id>.csv`` per chart."""
    stem = Path(stem)
    files = []
    for g in gp.grid.grids:
        coords, vals, pole = gp.chart_values(g.chart_id)
        cols = [np.arange(vals.size)]
        header = ["node"]
        for d in range(gp.space.dim):
            cols += [coords[:, d].real, coords[:, d].imag]
            header += [f"w{d}_re", f"w{d}_im"]
        cols += [vals, pole.astype(int)]
        header += ["value", "pole"]
        path = stem.with_name(f"{stem.name}.chart{g.chart_id}.csv")
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header), comments="",
                   fmt=["%d"] + ["%.17g"] * (2 * gp.space.dim + 1) + ["%d"])
        files.append(path)
    head = {
        "space": gp.space.kind.value,
        "class_coeffs": gp.class_coeffs.tolist(),
        "normalization": gp.normalization,
        "floor": gp.floor,
        "grid": _grid_spec(gp.grid),
        "charts": [p.name for p in files],
    }
    hp = stem.with_name(stem.name + ".json")
    hp.write_text(json.dumps(head, indent=1, sort_keys=True))
    return [hp] + files


def load_potential(stem) -> GridPotential:
    from ..geometry import space_from_name

    stem = Path(stem)
    head = json.loads(stem.with_name(stem.name + ".json").read_text())
    space = space_from_name(head["space"])
    grid = grid_from_desc(space, head["grid"])
    values = np.empty(grid.n_nodes)
    pole = np.zeros(grid.n_nodes, dtype=bool)
    for g, name in zip(grid.grids, head["charts"]):
        data = np.loadtxt(stem.with_name(name), delimiter=",", skiprows=1, ndmin=2)
        m = np.nonzero(grid.chart_ids == g.chart_id)[0]
        if data.shape[0] != m.size:
            raise UsageError("potential file does not match its grid")
        values[m] = data[:, -2]
        pole[m] = data[:, -1].astype(bool)
    return GridPotential(grid, values, pole, np.asarray(head["class_coeffs"], dtype=float),
                         head["normalization"], None, 0.0, head["floor"])
