"""Model spaces, chart atlases, Fubini-Study reference forms and quadrature.

Three model spaces are supported: the projective line, the projective plane
and the product of two projective lines.  Points are always carried in
homogeneous coordinates, normalized to unit Euclidean norm on each projective
factor.  The reference Kahler form is the normalized Fubini-Study form
(``1/sqrt(2)`` times the sum of the two factor forms on the product), so that
every model has total volume one.

Conventions: ``d^c = (i/2pi)(dbar - d)``, hence ``dd^c log|z|`` is the unit
Dirac mass and ``dd^c u = (1/2pi) Laplace(u) dA``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_legendre

from .errors import DomainError, UsageError

#: Floor used to clamp ``-inf`` values before quadrature.
DEFAULT_FLOOR = -1.0e6


class Kind(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P1xP1 = "P1xP1"


@dataclass(frozen=True)
class ModelSpace:
    kind: Kind

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))

    @property
    def dim(self) -> int:
        return 1 if self.kind is Kind.P1 else 2

    @property
    def h11_rank(self) -> int:
        return 2 if self.kind is Kind.P1xP1 else 1

    @property
    def factors(self) -> tuple[int, ...]:
        """Number of homogeneous coordinates of each projective factor."""
        return {Kind.P1: (2,), Kind.P2: (3,), Kind.P1xP1: (2, 2)}[self.kind]

    @property
    def n_homog(self) -> int:
        return sum(self.factors)

    @property
    def factor_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for n in self.factors:
            out.append(slice(start, start + n))
            start += n
        return tuple(out)

    @property
    def reference_class(self) -> np.ndarray:
        """Coefficients of the normalized reference form in the model basis."""
        if self.kind is Kind.P1xP1:
            return np.full(2, 1.0 / math.sqrt(2.0))
        return np.ones(1)

    def pairing_with_reference(self, coeffs) -> float:
        """Return ``<c, omega^(k-1)>`` for a class with coefficients ``c``."""
        c = np.asarray(coeffs, dtype=float)
        if self.kind is Kind.P1xP1:
            # h1.h2 = 1, h_i^2 = 0, omega = (h1 + h2)/sqrt(2)
            return float((c[0] + c[1]) / math.sqrt(2.0))
        return float(c[0])

    def volume_of_class(self, coeffs) -> float:
        """Self-intersection ``alpha^k`` of a nef class (its volume)."""
        c = np.asarray(coeffs, dtype=float)
        if self.kind is Kind.P1xP1:
            return float(2.0 * c[0] * c[1])
        return float(c[0] ** self.dim)

    def normalize(self, Z: np.ndarray) -> np.ndarray:
        """Rescale homogeneous coordinates to unit norm on every factor."""
        Z = np.array(Z, dtype=complex, copy=True)
        for sl in self.factor_slices:
            n = np.linalg.norm(Z[..., sl], axis=-1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                Z[..., sl] = Z[..., sl] / n
        return Z

    @property
    def charts(self) -> tuple["Chart", ...]:
        if self.kind is Kind.P1:
            return (Chart(self, 0, (0,)), Chart(self, 1, (1,)))
        if self.kind is Kind.P2:
            return tuple(Chart(self, i, (i,)) for i in range(3))
        return tuple(Chart(self, 2 * a + b, (a, 2 + b)) for a in (0, 1) for b in (0, 1))

    def chart(self, chart_id: int) -> "Chart":
        try:
            return self.charts[chart_id]
        except IndexError:
            raise UsageError(f"{self.kind.value} has no chart {chart_id}") from None

    def owning_chart(self, Z: np.ndarray) -> np.ndarray:
        """Chart ids under the closest-chart-wins partition (ties -> lowest id)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        if self.kind is Kind.P1xP1:
            a = np.argmax(np.abs(Z[:, 0:2]), axis=1)
            b = np.argmax(np.abs(Z[:, 2:4]), axis=1)
            return 2 * a + b
        return np.argmax(np.abs(Z), axis=1)


P1 = ModelSpace(Kind.P1)
P2 = ModelSpace(Kind.P2)
P1xP1 = ModelSpace(Kind.P1xP1)


def space_from_name(name) -> ModelSpace:
    if isinstance(name, ModelSpace):
        return name
    try:
        return ModelSpace(Kind(name))
    except ValueError:
        raise UsageError(f"unknown model space {name!r}") from None


@dataclass(frozen=True)
class Chart:
    """Affine chart where the homogeneous coordinates ``unit`` are set to 1."""

    space: ModelSpace
    chart_id: int
    unit: tuple[int, ...]

    def _free(self, sl: slice, u: int) -> list[int]:
        return [i for i in range(sl.start, sl.stop) if i != u]

    def to_chart(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        cols = []
        for sl, u in zip(self.space.factor_slices, self.unit):
            denom = Z[:, u]
            with np.errstate(divide="ignore", invalid="ignore"):
                for i in self._free(sl, u):
                    cols.append(Z[:, i] / denom)
        return np.stack(cols, axis=1)

    def from_chart(self, w) -> np.ndarray:
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        if w.shape[1] != self.space.dim:
            raise UsageError("chart coordinates have the wrong dimension")
        if not np.all(np.isfinite(w)):
            raise DomainError("point outside chart domain")
        Z = np.zeros((w.shape[0], self.space.n_homog), dtype=complex)
        k = 0
        for sl, u in zip(self.space.factor_slices, self.unit):
            Z[:, u] = 1.0
            for i in self._free(sl, u):
                Z[:, i] = w[:, k]
                k += 1
        return Z

    def in_domain(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        ok = np.ones(Z.shape[0], dtype=bool)
        for sl, u in zip(self.space.factor_slices, self.unit):
            scale = np.max(np.abs(Z[:, sl]), axis=1)
            ok &= np.abs(Z[:, u]) > 1e-300 * np.maximum(scale, 1e-300)
        return ok

    def transition(self, w, other: "Chart") -> np.ndarray:
        """Map chart coordinates of ``self`` into the chart ``other``."""
        Z = self.from_chart(w)
        if not np.all(other.in_domain(Z)):
            raise DomainError("point not in the overlap of the two charts")
        return other.to_chart(Z)


def fs_potential(space: ModelSpace, chart: Chart | int, point) -> np.ndarray | float:
    """Local potential of the reference form in a chart.

    ``omega = dd^c psi`` with ``psi(w) = 1/2 log(1 + |w|^2)`` on projective
    spaces; on the product the two factor potentials are summed and scaled by
    ``1/sqrt(2)``.  The potential vanishes at the chart origin.
    """
    if isinstance(chart, int):
        chart = space.chart(chart)
    w = np.asarray(point, dtype=complex)
    scalar = w.ndim == 0 or (w.ndim == 1 and space.dim == 1)
    w = w.reshape(-1, space.dim)
    if not np.all(np.isfinite(w)):
        raise DomainError("point outside chart domain")
    if space.kind is Kind.P1xP1:
        val = (0.5 * np.log1p(np.abs(w[:, 0]) ** 2) + 0.5 * np.log1p(np.abs(w[:, 1]) ** 2)) / math.sqrt(2.0)
    else:
        val = 0.5 * np.log1p(np.sum(np.abs(w) ** 2, axis=1))
    if scalar and val.size == 1:
        return float(val[0])
    return val


def fs_density(space: ModelSpace, w) -> np.ndarray:
    """Density of ``omega^k`` with respect to Lebesgue measure in a chart."""
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    if space.kind is Kind.P1:
        return (1.0 / math.pi) / (1.0 + np.abs(w[:, 0]) ** 2) ** 2
    if space.kind is Kind.P2:
        return (2.0 / math.pi**2) / (1.0 + np.sum(np.abs(w) ** 2, axis=1)) ** 3
    return (1.0 / math.pi**2) / ((1.0 + np.abs(w[:, 0]) ** 2) ** 2 * (1.0 + np.abs(w[:, 1]) ** 2) ** 2)


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True)
class Grid:
    """Quadrature nodes of one chart (only the part of the chart it owns)."""

    chart: Chart
    resolution: tuple[int, ...]
    coords: np.ndarray
    weights: np.ndarray

    @property
    def chart_id(self) -> int:
        return self.chart.chart_id


@dataclass(frozen=True)
class CylinderLayout:
    """Log-polar layout of the projective line.

    ``z = exp(s + i t)`` with ``s`` in ``(-S, S)`` sampled at ``2 n_s`` cell
    midpoints and ``t`` at ``n_theta`` midpoints; node 0 is the pole ``z = 0``
    and node ``N - 1`` the pole ``z = inf``.
    """

    n_s: int
    n_theta: int
    S: float

    @property
    def hs(self) -> float:
        return self.S / self.n_s

    @property
    def ht(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def s(self) -> np.ndarray:
        return -self.S + (np.arange(2 * self.n_s) + 0.5) * self.hs

    @property
    def t(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.ht

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_s * self.n_theta + 2

    def ring_index(self, j, t):
        return 1 + np.asarray(j) * self.n_theta + np.asarray(t) % self.n_theta


@dataclass(frozen=True, eq=False)
class AtlasGrid:
    """Quadrature over the whole space, partitioned by chart ownership."""

    space: ModelSpace
    grids: tuple[Grid, ...]
    homog: np.ndarray
    chart_ids: np.ndarray
    weights: np.ndarray
    layout: CylinderLayout | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.weights.size

    def chart_coords(self) -> np.ndarray:
        """Coordinates of every node in its owning chart."""
        out = np.empty((self.n_nodes, self.space.dim), dtype=complex)
        for g in self.grids:
            out[self.chart_ids == g.chart_id] = g.coords
        return out

    @cached_property
    def key(self) -> tuple:
        if self.layout is not None:
            return (self.space.kind.value, "cyl", self.layout.n_s, self.layout.n_theta, self.layout.S)
        return (self.space.kind.value, "polar") + tuple(self.grids[0].resolution)


def p1_grid(n_s: int = 512, n_theta: int = 512, S: float = 24.0) -> AtlasGrid:
    """Log-polar atlas grid of the projective line.

    Chart 0 owns ``|z| <= 1`` (``s < 0`` and the pole ``z = 0``); chart 1 owns
    the rest in the coordinate ``w = 1/z``.  Ring weights use the midpoint rule
    on the density ``sech(s)^2 / (4 pi)`` in ``(s, t)``, which is spectrally
    accurate on the full cylinder; the two polar caps carry their exact mass.
    """
    if n_s < 2 or n_theta < 4 or S <= 0:
        raise UsageError("invalid log-polar grid resolution")
    lay = CylinderLayout(int(n_s), int(n_theta), float(S))
    s, t = lay.s, lay.t
    ss, tt = np.meshgrid(s, t, indexing="ij")
    ring_w = (lay.hs * lay.ht / (4.0 * math.pi)) / np.cosh(ss) ** 2
    cap = math.exp(-2.0 * S) / (1.0 + math.exp(-2.0 * S))
    weights = np.concatenate([[cap], ring_w.ravel(), [cap]])

    # Homogeneous coordinates, unit norm: (cos a, sin a e^{it}) with tan a = e^s.
    sf, tf = ss.ravel(), tt.ravel()
    Z = np.empty((lay.n_nodes, 2), dtype=complex)
    Z[0] = (1.0, 0.0)
    Z[-1] = (0.0, 1.0)
    Z[1:-1, 0] = 1.0 / np.sqrt(1.0 + np.exp(2.0 * sf))
    Z[1:-1, 1] = np.exp(1j * tf) / np.sqrt(1.0 + np.exp(-2.0 * sf))

    chart_ids = np.empty(lay.n_nodes, dtype=int)
    chart_ids[0] = 0
    chart_ids[-1] = 1
    chart_ids[1:-1] = np.where(sf < 0.0, 0, 1)

    c0, c1 = P1.charts
    m0 = chart_ids == 0
    m1 = ~m0
    z = np.zeros(m0.sum(), dtype=complex)
    z[1:] = np.exp(sf[sf < 0] + 1j * tf[sf < 0])
    w = np.zeros(m1.sum(), dtype=complex)
    w[:-1] = np.exp(-sf[sf >= 0] - 1j * tf[sf >= 0])
    grids = (
        Grid(c0, (n_s, n_theta), z[:, None], weights[m0]),
        Grid(c1, (n_s, n_theta), w[:, None], weights[m1]),
    )
    return AtlasGrid(P1, grids, Z, chart_ids, weights, layout=lay)


def _disk_rule(n_r: int, n_theta: int):
    """Polar product rule on the unit disk: Gauss-Legendre in ``r^2``."""
    x, wx = roots_legendre(n_r)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wx
    t = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
    r = np.sqrt(u)
    nodes = (r[:, None] * np.exp(1j * t[None, :])).ravel()
    # dA = r dr dt = (1/2) du dt
    weights = (0.5 * wu[:, None] * np.full(n_theta, 2.0 * math.pi / n_theta)[None, :]).ravel()
    return nodes, weights


def surface_grid(space: ModelSpace, n_r: int = 8, n_theta: int = 32) -> AtlasGrid:
    """Tensor polar quadrature on the owned polydisk of every chart (k = 2)."""
    if space.dim != 2:
        raise UsageError("surface_grid is for two-dimensional models")
    nodes, wts = _disk_rule(n_r, n_theta)
    w1, w2 = np.meshgrid(nodes, nodes, indexing="ij")
    a1, a2 = np.meshgrid(wts, wts, indexing="ij")
    coords = np.stack([w1.ravel(), w2.ravel()], axis=1)
    area = (a1 * a2).ravel()
    grids, homs, ids, ws = [], [], [], []
    for ch in space.charts:
        wt = area * fs_density(space, coords)
        grids.append(Grid(ch, (n_r, n_theta), coords, wt))
        homs.append(space.normalize(ch.from_chart(coords)))
        ids.append(np.full(coords.shape[0], ch.chart_id))
        ws.append(wt)
    return AtlasGrid(space, tuple(grids), np.concatenate(homs), np.concatenate(ids), np.concatenate(ws))


def default_grid(space: ModelSpace, resolution: int | None = None) -> AtlasGrid:
    """Default atlas grid: 512 x 512 log-polar for P1, 256 nodes per disk factor otherwise."""
    space = space_from_name(space)
    if space.kind is Kind.P1:
        n = resolution or 512
        return p1_grid(n, n)
    if resolution is None:
        return surface_grid(space)
    return surface_grid(space, max(2, resolution // 4), resolution)


def clamp(values, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if np.any(np.isnan(v)):
        raise UsageError("field has NaN values at quadrature nodes")
    return np.maximum(v, floor)


def integrate(space: ModelSpace, grid: AtlasGrid, scalar_field, floor: float = DEFAULT_FLOOR) -> float:
    """Integrate a field against ``omega^k``.

    ``scalar_field`` is either an array aligned with the grid nodes or a
    callable taking unit-normalized homogeneous coordinates.
    """
    if grid.space != space:
        raise UsageError("grid does not belong to the given space")
    if callable(scalar_field):
        vals = scalar_field(grid.homog)
    else:
        vals = scalar_field
    vals = np.asarray(vals, dtype=float)
    if vals.shape != grid.weights.shape:
        raise UsageError("field is not aligned with grid nodes")
    if np.any(np.isposinf(vals)):
        raise UsageError("field has +inf values")
    return float(np.sum(grid.weights * clamp(vals, floor)))


# ---------------------------------------------------------------------------
# Monte Carlo


def sample_fs_uniform(space: ModelSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``n`` points distributed by ``omega^k`` (unit homogeneous coordinates)."""
    g = rng.standard_normal((n, space.n_homog)) + 1j * rng.standard_normal((n, space.n_homog))
    return space.normalize(g)


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int

    def interval(self, sigmas: float = 3.0) -> tuple[float, float]:
        return self.value - sigmas * self.stderr, self.value + sigmas * self.stderr


MC_CHUNK = 8192


def volume_of_set(space: ModelSpace, membership: Callable[[np.ndarray], np.ndarray],
                  sample_budget: int, seed: int = 0) -> VolumeEstimate:
    """Monte Carlo estimate of the volume of ``{membership(Z)}``.

    Samples are drawn in fixed-size chunks, each from its own counter-derived
    stream, so the estimate does not depend on how chunks are scheduled.
    """
    if sample_budget <= 0:
        raise UsageError("sample budget must be positive")
    from .parallel import chunk_sizes, tree_sum

    hits = []
    for i, n in enumerate(chunk_sizes(sample_budget, MC_CHUNK)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        Z = sample_fs_uniform(space, n, rng)
        hits.append(float(np.count_nonzero(np.asarray(membership(Z), dtype=bool))))
    p = tree_sum(hits) / sample_budget
    return VolumeEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / sample_budget), sample_budget)


def chordal_distance(space: ModelSpace, A, B) -> np.ndarray:
    """Fubini-Study chordal distance ``sqrt(1 - |<a,b>|^2)`` (max over factors)."""
    A = space.normalize(np.atleast_2d(A))
    B = space.normalize(np.atleast_2d(B))
    out = np.zeros(np.broadcast_shapes(A.shape[:-1], B.shape[:-1]))
    for sl in space.factor_slices:
        ip = np.abs(np.sum(np.conj(A[..., sl]) * B[..., sl], axis=-1)) ** 2
        out = np.maximum(out, np.sqrt(np.clip(1.0 - ip, 0.0, None)))
    return out
