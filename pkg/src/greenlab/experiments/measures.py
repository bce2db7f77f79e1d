"""Empirical measures on the projective line and a dual-Lipschitz distance.

Points are unit homogeneous coordinates ``(z0, z1)``; the affine coordinate
is ``z = z1 / z0``.  Through the Hopf map onto the sphere of radius 1/2 the
chordal distance ``sqrt(1 - |<a, b>|^2)`` becomes the Euclidean one, so
random Fourier features ``sin(w . x + b) / |w|`` are 1-Lipschitz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..geometry import Kind, P1
from ..maps import RationalMap

BANK_SIZE = 200
BANK_SEED = 20240601
BANK_SCALES = (1.0, 64.0)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted points on P1 (unit homogeneous coordinates)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=complex))
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != w.shape[0] or pts.shape[1] != 2:
            raise UsageError("points and weights are misaligned")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise UsageError("weights must be finite and nonnegative")
        object.__setattr__(self, "points", P1.normalize(pts))
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = np.atleast_2d(points)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def from_affine(cls, z, weights=None) -> "EmpiricalMeasure":
        """From affine coordinates (``inf`` allowed)."""
        z = np.asarray(z, dtype=complex).ravel()
        inf = ~np.isfinite(z)
        pts = np.where(inf[:, None], np.array([0.0, 1.0]), np.stack([np.ones_like(z), np.where(inf, 0, z)], 1))
        w = np.full(z.size, 1.0 / z.size) if weights is None else weights
        return cls(pts, w)

    def sphere(self) -> np.ndarray:
        return hopf(self.points)


def hopf(Z) -> np.ndarray:
    """Hopf map onto the sphere of radius 1/2 (Euclidean distance = chordal)."""
    Z = P1.normalize(np.atleast_2d(np.asarray(Z, dtype=complex)))
    c = np.conj(Z[:, 0]) * Z[:, 1]
    return np.stack([c.real, c.imag, 0.5 * (np.abs(Z[:, 1]) ** 2 - np.abs(Z[:, 0]) ** 2)], axis=1)


@dataclass(frozen=True)
class TestBank:
    """Fixed bank of 1-Lipschitz test functions ``sin(w . x + b) / |w|``."""

    W: np.ndarray
    b: np.ndarray

    @classmethod
    def make(cls, size: int = BANK_SIZE, seed: int = BANK_SEED, scales=BANK_SCALES) -> "TestBank":
        rng = np.random.default_rng(seed)
        d = rng.standard_normal((size, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = np.exp(rng.uniform(math.log(scales[0]), math.log(scales[1]), size))
        return cls(d * r[:, None], rng.uniform(0.0, 2.0 * math.pi, size))

    def integrals(self, mu: EmpiricalMeasure, chunk: int = 65536) -> np.ndarray:
        x = mu.sphere()
        nrm = np.linalg.norm(self.W, axis=1)
        out = np.zeros(self.W.shape[0])
        for i in range(0, x.shape[0], chunk):
            xs, ws = x[i:i + chunk], mu.weights[i:i + chunk]
            out += (np.sin(xs @ self.W.T + self.b) * ws[:, None]).sum(axis=0)
        return out / nrm


_DEFAULT_BANK = None


def default_bank() -> TestBank:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = TestBank.make()
    return _DEFAULT_BANK


def dual_lipschitz(mu: EmpiricalMeasure, nu: EmpiricalMeasure, bank: TestBank | None = None) -> float:
    """``max_k |int f_k dmu - int f_k dnu|`` over the test bank."""
    bank = default_bank() if bank is None else bank
    if abs(mu.total_mass - nu.total_mass) > 1e-9 * max(1.0, mu.total_mass):
        raise UsageError("measures have different total mass")
    return float(np.max(np.abs(bank.integrals(mu) - bank.integrals(nu))))


def arc_measure(n: int = 4096, radius: float = 1.0) -> EmpiricalMeasure:
    """Normalized arc length on ``|z| = radius``."""
    t = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
    return EmpiricalMeasure.from_affine(radius * np.exp(1j * t))


# ---------------------------------------------------------------------------
# Preimages


def _binary_coeffs(f: RationalMap) -> np.ndarray:
    """Dense coefficients ``a[i, k]`` of ``z0^(d-k) z1^k`` in component ``i``."""
    d = f.degree
    a = np.zeros((2, d + 1), dtype=complex)
    for i, p in enumerate(f._num):
        for e, c in zip(p.exps, p.coeffs):
            a[i, int(e[1])] += c
    return a


def _batched_roots(c: np.ndarray) -> np.ndarray:
    """Roots of ``sum_k c[:, k] x^k`` (leading coefficient ``c[:, -1]`` nonzero)."""
    n, m = c.shape
    d = m - 1
    if d == 1:
        return (-c[:, 0] / c[:, 1])[:, None]
    mon = c[:, :-1] / c[:, -1:]
    C = np.zeros((n, d, d), dtype=complex)
    C[:, 1:, :-1] = np.eye(d - 1)
    C[:, :, -1] = -mon
    return np.linalg.eigvals(C)


def _chart_roots(P: np.ndarray) -> np.ndarray:
    """Zeros of binary forms whose two end coefficients are nonzero, shape ``(N, d, 2)``."""
    d = P.shape[1] - 1
    use_z = np.abs(P[:, -1]) >= np.abs(P[:, 0])
    out = np.empty((P.shape[0], d, 2), dtype=complex)
    if np.any(use_z):
        out[use_z, :, 0] = 1.0
        out[use_z, :, 1] = _batched_roots(P[use_z])
    if np.any(~use_z):
        out[~use_z, :, 0] = _batched_roots(P[~use_z][:, ::-1])
        out[~use_z, :, 1] = 1.0
    return out


def binary_zeros(P) -> np.ndarray:
    """Zeros of binary forms ``sum_k P[:, k] z0^(d-k) z1^k``, shape ``(N * d, 2)``.

    Exact factors ``z1^b`` and ``z0^a`` are split off first, so zeros at ``0``
    and ``inf`` are exact; the rest is solved in whichever affine chart keeps
    the leading coefficient largest.  Forms that vanish identically give NaN
    rows.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    N, m = P.shape
    d = m - 1
    out = np.full((N, d, 2), np.nan, dtype=complex)
    nz = P != 0
    live = nz.any(axis=1)
    b = np.argmax(nz, axis=1)
    a = np.argmax(nz[:, ::-1], axis=1)
    for ai, bi in sorted(set(zip(a[live].tolist(), b[live].tolist()))):
        idx = np.nonzero(live & (a == ai) & (b == bi))[0]
        rows = np.empty((idx.size, d, 2), dtype=complex)
        rows[:, :bi] = (1.0, 0.0)
        rows[:, bi:bi + ai] = (0.0, 1.0)
        if d - ai - bi > 0:
            rows[:, bi + ai:] = _chart_roots(P[idx, bi:m - ai])
        out[idx] = rows
    out = out.reshape(-1, 2)
    ok = np.all(np.isfinite(out), axis=1)
    out[ok] = P1.normalize(out[ok])
    return out


def preimages(f: RationalMap, W) -> np.ndarray:
    """All ``d`` preimages (with multiplicity) of each point of ``W`` under ``f`` on P1.

    Returns unit homogeneous points of shape ``(len(W) * d, 2)``, grouped by
    target.
    """
    if f.space.kind is not Kind.P1:
        raise UsageError("preimages are implemented on P1")
    W = P1.normalize(np.atleast_2d(np.asarray(W, dtype=complex)))
    a = _binary_coeffs(f)
    return binary_zeros(W[:, 1:2] * a[0][None, :] - W[:, 0:1] * a[1][None, :])


def _distinct(Z, tol: float = 1e-7) -> int:
    x = np.round(hopf(Z) / tol).astype(np.int64)
    return int(np.unique(x, axis=0).shape[0])


def iterated_preimages(f: RationalMap, start, n: int, check_levels: int = 4) -> np.ndarray:
    """``(f^n)^{-1}`` of the starting points, with multiplicity.

    Raises
    ------
    UsageError
        The backward orbit collapses (fewer than half the expected distinct
        points within ``check_levels`` levels): the start is exceptional.
    """
    Z = P1.normalize(np.atleast_2d(np.asarray(start, dtype=complex)))
    d = f.degree
    m0 = _distinct(Z)
    for level in range(1, n + 1):
        Z = preimages(f, Z)
        if level <= check_levels and _distinct(Z) < 0.5 * m0 * d**level:
            raise UsageError("backward orbit collapses: start point is exceptional")
    return Z


def brolin_measure_oracle(f: RationalMap, n: int = 12, start=None, seed: int = 0) -> EmpiricalMeasure:
    """Uniform measure on the ``d^n`` iterated preimages of ``start``.

    ``start`` defaults to an FS-uniform random point drawn from ``seed``.
    """
    if start is None:
        from ..geometry import sample_fs_uniform

        start = sample_fs_uniform(P1, 1, np.random.default_rng(seed))
    pts = iterated_preimages(f, start, n)
    return EmpiricalMeasure.uniform(pts)


def green_measure(result) -> EmpiricalMeasure:
    """Cell masses of ``theta_alpha + dd^c g`` as an empirical measure (P1 grid).

    Small negative masses from discretization are dropped and the total is
    renormalized to one.
    """
    from ..potentials.grid import measure_masses

    gp = result.green_potential
    m = measure_masses(gp)
    m = np.clip(m, 0.0, None)
    return EmpiricalMeasure(gp.grid.homog, m / m.sum())
