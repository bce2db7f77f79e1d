"""Dominant rational self-maps of the model spaces.

A map is stored as homogeneous (or bihomogeneous) polynomial components with
exact Gaussian-rational coefficients.  Symbolic work (composition, gcd
cancellation, resultants) is exact and delegated to sympy's polynomial
domains; everything evaluation-like runs in double precision on numpy arrays.

On the product of two lines the components are ordered ``[F0, F1, G0, G1]``
in the variables ``(x0, x1, y0, y1)``, the first pair giving the image in the
first factor.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import mpmath
import numpy as np
import sympy
from sympy import Poly, QQ, QQ_I, ZZ

from .errors import (IndeterminacyError, InternalError, NumericalInstabilityError,
                     ResourceError, UsageError)
from .geometry import Kind, ModelSpace, fs_density, sample_fs_uniform, space_from_name

#: Default cap on the number of monomials of any composed component.
MONOMIAL_CAP = 10_000
#: Default cap on coefficient size (bits of numerator or denominator).
COEFF_BITS_CAP = 65_536
#: Components below this (after sup-norm rescaling of the input) count as zero.
INDETERMINACY_TOL = 1e-12

_GENS = {
    Kind.P1: sympy.symbols("z0 z1"),
    Kind.P2: sympy.symbols("z0 z1 z2"),
    Kind.P1xP1: sympy.symbols("x0 x1 y0 y1"),
}


def gens(space: ModelSpace):
    return _GENS[space.kind]


def _groups(space: ModelSpace) -> list[list[int]]:
    if space.kind is Kind.P1xP1:
        return [[0, 1], [2, 3]]
    return [list(range(space.n_homog))]


def _poly(expr, *gs) -> Poly:
    """Poly over QQ when the coefficients are real, over QQ_I otherwise.

    Rational gcds and resultants are much faster than Gaussian ones.
    """
    if isinstance(expr, Poly):
        expr = expr.as_expr()
    try:
        return Poly(expr, *gs, domain=QQ)
    except (sympy.CoercionFailed, sympy.polys.polyerrors.PolynomialError):
        return Poly(expr, *gs, domain=QQ_I)


def _to_poly(expr, space: ModelSpace) -> Poly:
    if isinstance(expr, str):
        expr = sympy.sympify(expr, locals={str(g): g for g in gens(space)})
    return _poly(expr, *gens(space))


def _c2complex(c) -> complex:
    return complex(c)


def _re_im(c) -> tuple[sympy.Rational, sympy.Rational]:
    re, im = sympy.sympify(c).as_real_imag()
    return sympy.Rational(re), sympy.Rational(im)


@dataclass(frozen=True)
class _NumPoly:
    """Exponent/coefficient arrays for fast vectorized evaluation."""

    exps: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_poly(cls, p: Poly) -> "_NumPoly":
        terms = p.terms()
        if not terms:
            return cls(np.zeros((0, len(p.gens)), dtype=int), np.zeros(0, dtype=complex))
        exps = np.array([m for m, _ in terms], dtype=int)
        coeffs = np.array([_c2complex(c) for _, c in terms], dtype=complex)
        return cls(exps, coeffs)

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        out = np.zeros(Z.shape[0], dtype=complex)
        if self.coeffs.size == 0:
            return out
        maxe = self.exps.max(axis=0)
        tables = []
        for v in range(Z.shape[1]):
            t = np.ones((maxe[v] + 1, Z.shape[0]), dtype=complex)
            for e in range(1, maxe[v] + 1):
                t[e] = t[e - 1] * Z[:, v]
            tables.append(t)
        for e, c in zip(self.exps, self.coeffs):
            term = np.full(Z.shape[0], c, dtype=complex)
            for v in range(Z.shape[1]):
                if e[v]:
                    term = term * tables[v][e[v]]
            out += term
        return out


def _coeff_bits(c) -> int:
    parts = (c.x, c.y) if hasattr(c, "x") else (c,)
    bits = 0
    for q in parts:
        bits = max(bits, int(abs(q.numerator)).bit_length(), int(q.denominator).bit_length())
    return bits


def _log_eval(exps: np.ndarray, coeffs: np.ndarray, L: np.ndarray, A: np.ndarray):
    """Log-modulus and argument of a polynomial from log-moduli/arguments of
    its variables, using a max-shifted sum so tiny values never underflow."""
    n = L.shape[0]
    if coeffs.size == 0:
        return np.full(n, -np.inf), np.zeros(n)
    Lm = np.empty((coeffs.size, n))
    Am = np.empty((coeffs.size, n))
    for k, (e, c) in enumerate(zip(exps, coeffs)):
        lm = np.full(n, math.log(abs(c)))
        am = np.full(n, np.angle(c))
        for v in np.nonzero(e)[0]:
            lm = lm + e[v] * L[:, v]
            am = am + e[v] * A[:, v]
        Lm[k], Am[k] = lm, am
    Lmax = Lm.max(axis=0)
    finite = np.isfinite(Lmax)
    shift = np.where(finite, Lmax, 0.0)
    S = np.sum(np.exp(Lm - shift) * np.exp(1j * Am), axis=0)
    with np.errstate(divide="ignore"):
        Lout = np.where(finite, shift + np.log(np.abs(S)), -np.inf)
    return Lout, np.angle(S)


def to_log(Z) -> tuple[np.ndarray, np.ndarray]:
    """Log-moduli and arguments of homogeneous coordinates (``-inf`` at zeros)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(Z)), np.angle(Z)


def from_log(space: ModelSpace, L, A) -> np.ndarray:
    """Unit-normalized homogeneous coordinates from log data (tiny entries may flush to 0)."""
    L = np.asarray(L, dtype=float).copy()
    for sl in space.factor_slices:
        L[:, sl] -= np.max(L[:, sl], axis=1, keepdims=True)
    return space.normalize(np.exp(L) * np.exp(1j * np.asarray(A)))


def log_normalize(space: ModelSpace, L) -> tuple[np.ndarray, np.ndarray]:
    """Shift log-moduli so each factor has unit Euclidean norm; return shifts too."""
    L = np.array(L, dtype=float)
    norms = np.empty((L.shape[0], len(space.factors)))
    for j, sl in enumerate(space.factor_slices):
        m = np.max(L[:, sl], axis=1, keepdims=True)
        ms = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            nrm = ms[:, 0] + 0.5 * np.log(np.sum(np.exp(2.0 * (L[:, sl] - ms)), axis=1))
        norms[:, j] = nrm
        L[:, sl] -= nrm[:, None]
    return L, norms


def _check_caps(p: Poly, monomial_cap: int, bits_cap: int) -> None:
    n = p.length()
    if n > monomial_cap:
        raise ResourceError(f"composed component has {n} monomials (cap {monomial_cap})")
    if max((_coeff_bits(c) for c in p.rep.to_dict().values()), default=0) > bits_cap:
        raise ResourceError("coefficient size exceeds the arbitrary-precision budget")


class RationalMap:
    """Dominant rational self-map given by polynomial components.

    Parameters
    ----------
    space : ModelSpace or str
    components : sequence of sympy expressions, strings or Polys
        ``k + 1`` homogeneous components on projective spaces, four
        bihomogeneous ones ``[F0, F1, G0, G1]`` on the product.
    check : bool
        Validate homogeneity and dominance.
    """

    def __init__(self, space, components: Sequence, *, check: bool = True, reduce: bool = True):
        self.space = space_from_name(space)
        polys = [_to_poly(c, self.space) for c in components]
        if len(polys) != self.space.n_homog:
            raise UsageError(f"{self.space.kind.value} maps need {self.space.n_homog} components")
        self.components = tuple(self._reduce(polys) if reduce else polys)
        if check:
            self._validate()

    # -- construction -----------------------------------------------------

    def _reduce(self, polys: list[Poly]) -> list[Poly]:
        out = list(polys)
        for grp in _groups(self.space):
            ps = [polys[i] for i in grp]
            if all(p.is_zero for p in ps):
                raise UsageError("components of a factor are all identically zero")
            g = ps[0]
            for p in ps[1:]:
                g = g.gcd(p)
            if g.total_degree() > 0:
                ps = [p.exquo(g) for p in ps]
            # canonical scaling: first nonzero leading coefficient becomes 1
            lead = next(p for p in ps if not p.is_zero).LC()
            ps = [p.quo_ground(lead) for p in ps]
            for i, p in zip(grp, ps):
                out[i] = p
        return out

    def _validate(self) -> None:
        n = len(gens(self.space))
        for grp in _groups(self.space):
            degs = set()
            for i in grp:
                p = self.components[i]
                if p.is_zero:
                    continue
                degs.add(self._multidegree(p))
            if len(degs) != 1:
                raise UsageError("components are not (bi)homogeneous of one common (bi)degree")
        if self.space.kind is not Kind.P1xP1 and self.degree < 1:
            raise UsageError("map degree must be at least 1")
        rng = np.random.default_rng(12345)
        Z = sample_fs_uniform(self.space, 4, rng)
        jac = self.jacobian_norm_sq(Z, strict=False)
        if not np.any(np.nan_to_num(jac) > 1e-24):
            raise UsageError("map is not dominant (Jacobian vanishes identically)")

    def _multidegree(self, p: Poly):
        """Tuple of degrees per source factor; raises if not multihomogeneous."""
        degs = []
        for sl in self.space.factor_slices:
            ds = {sum(m[sl]) for m in p.monoms()}
            if len(ds) != 1:
                raise UsageError(f"component {p.as_expr()} is not homogeneous")
            degs.append(ds.pop())
        return tuple(degs)

    @classmethod
    def identity(cls, space) -> "RationalMap":
        space = space_from_name(space)
        return cls(space, list(gens(space)))

    # -- degree data ------------------------------------------------------

    @property
    def degree(self):
        """Total degree on projective spaces, 2x2 bidegree matrix on the product."""
        if self.space.kind is Kind.P1xP1:
            return self.bidegree
        p = next(c for c in self.components if not c.is_zero)
        return p.total_degree()

    @property
    def bidegree(self) -> np.ndarray:
        """Rows: target factor; columns: degree in the source factor variables."""
        if self.space.kind is not Kind.P1xP1:
            raise UsageError("bidegree is only defined on P1xP1")
        rows = []
        for grp in _groups(self.space):
            p = next(self.components[i] for i in grp if not self.components[i].is_zero)
            rows.append(self._multidegree(p))
        return np.array(rows, dtype=int)

    def degree_data(self):
        """Degree as a comparable value: int, or the bidegree matrix as a tuple."""
        if self.space.kind is Kind.P1xP1:
            return tuple(map(tuple, self.bidegree.tolist()))
        return self.degree

    def n_monomials(self) -> int:
        return max(len(c.terms()) for c in self.components)

    # -- numerics -----------------------------------------------------------

    @cached_property
    def _num(self) -> tuple[_NumPoly, ...]:
        return tuple(_NumPoly.from_poly(c) for c in self.components)

    @cached_property
    def _dnum(self):
        g = gens(self.space)
        return tuple(tuple(_NumPoly.from_poly(c.diff(v)) for v in g) for c in self.components)

    def raw(self, Z) -> np.ndarray:
        """Components evaluated at homogeneous coordinates, no rescaling."""
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        return np.stack([p(Z) for p in self._num], axis=1)

    def apply(self, Z):
        """Vectorized evaluation.

        Returns
        -------
        W : ndarray
            Images with unit Euclidean norm on every factor (NaN where
            indeterminate).
        lognorms : ndarray, shape (N, n_factors)
            ``log`` of the Euclidean norm of each component group at ``Z``.
        ok : ndarray of bool
            False where all components of some factor vanish.
        """
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        F = self.raw(Z)
        scale_in = [np.max(np.abs(Z[:, sl]), axis=1) for sl in self.space.factor_slices]
        W = np.empty_like(F)
        lognorms = np.empty((Z.shape[0], len(self.space.factors)))
        ok = np.ones(Z.shape[0], dtype=bool)
        for j, (grp, sl) in enumerate(zip(_groups(self.space), self.space.factor_slices)):
            block = F[:, sl]
            nrm = np.linalg.norm(block, axis=1)
            # tolerance on sup-norm-rescaled inputs: divide by scale^deg
            degs = self._group_multidegree(j)
            ref = np.ones(Z.shape[0])
            for s, d in zip(scale_in, degs):
                ref = ref * s ** d
            bad = np.max(np.abs(block), axis=1) < INDETERMINACY_TOL * ref
            ok &= ~bad
            with np.errstate(divide="ignore", invalid="ignore"):
                W[:, sl] = block / nrm[:, None]
                lognorms[:, j] = np.log(nrm)
        W[~ok] = np.nan
        return W, lognorms, ok

    def _group_multidegree(self, j: int):
        grp = _groups(self.space)[j]
        p = next(self.components[i] for i in grp if not self.components[i].is_zero)
        return self._multidegree(p)

    def __call__(self, Z):
        W, _, ok = self.apply(Z)
        return W

    def apply_log(self, L, A):
        """Evaluate on points given by log-moduli ``L`` and arguments ``A``.

        Inputs must be normalized per factor (see :func:`log_normalize`).
        Returns normalized image log data, ``log`` of the Euclidean norm of
        each component group, and the mask of determinate points.
        """
        L = np.atleast_2d(np.asarray(L, dtype=float))
        A = np.atleast_2d(np.asarray(A, dtype=float))
        LF = np.empty((L.shape[0], len(self.components)))
        AF = np.empty_like(LF)
        for i, p in enumerate(self._num):
            LF[:, i], AF[:, i] = _log_eval(p.exps, p.coeffs, L, A)
        LW, norms = log_normalize(self.space, LF)
        ok = np.ones(L.shape[0], dtype=bool)
        # inputs have unit norm, so the sup-norm rescaled inputs differ by a
        # bounded factor; the indeterminacy threshold is applied to the norms
        for j in range(len(self.space.factors)):
            ok &= norms[:, j] > math.log(INDETERMINACY_TOL)
        return LW, AF, norms, ok

    # -- symbolic -----------------------------------------------------------

    def compose(self, g: "RationalMap", monomial_cap: int = MONOMIAL_CAP,
                bits_cap: int = COEFF_BITS_CAP) -> "RationalMap":
        """Return ``self o g`` with common factors cancelled."""
        return compose(self, g, monomial_cap=monomial_cap, bits_cap=bits_cap)

    def iterate(self, n: int, monomial_cap: int = MONOMIAL_CAP) -> "RationalMap":
        if n < 1:
            raise UsageError("iterate needs n >= 1")
        h = self
        for _ in range(n - 1):
            h = compose(self, h, monomial_cap=monomial_cap)
        return h

    def jacobian_poly(self) -> Poly:
        """Determinant of the homogeneous Jacobian matrix (projective spaces)."""
        if self.space.kind is Kind.P1xP1:
            raise UsageError("homogeneous Jacobian determinant is defined for P^k only")
        g = gens(self.space)
        M = sympy.Matrix([[c.diff(v).as_expr() for v in g] for c in self.components])
        return _poly(sympy.expand(M.det()), *g)

    # -- differential data --------------------------------------------------

    def jacobian_norm_sq(self, Z, strict: bool = True) -> np.ndarray:
        """``|Jac_omega(f)|^2`` at homogeneous points (see :func:`jacobian_norm_sq`)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        Z = self.space.normalize(Z)
        W, _, ok = self.apply(Z)
        if strict and not np.all(ok):
            raise IndeterminacyError("point lies in the indeterminacy set")
        out = np.full(Z.shape[0], np.nan)
        src_ids = self.space.owning_chart(Z)
        Wf = np.where(ok[:, None], W, 1.0)
        tgt_ids = self.space.owning_chart(Wf)
        charts = self.space.charts
        for a in np.unique(src_ids):
            for b in np.unique(tgt_ids):
                m = (src_ids == a) & (tgt_ids == b) & ok
                if not np.any(m):
                    continue
                out[m] = self._chart_jac_sq(Z[m], charts[a], charts[b])
        return out

    def _chart_jac_sq(self, Z, src, tgt) -> np.ndarray:
        sp = self.space
        # dehomogenize in the source chart
        Zc = Z.copy()
        for sl, u in zip(sp.factor_slices, src.unit):
            Zc[:, sl] = Zc[:, sl] / Zc[:, u][:, None]
        F = self.raw(Zc)
        free_src = [i for sl, u in zip(sp.factor_slices, src.unit) for i in range(sl.start, sl.stop) if i != u]
        rows = []
        for sl, v in zip(sp.factor_slices, tgt.unit):
            Fv = F[:, v]
            dFv = [self._dnum[v][j](Zc) for j in free_src]
            for i in range(sl.start, sl.stop):
                if i == v:
                    continue
                dFi = [self._dnum[i][j](Zc) for j in free_src]
                rows.append([(Fv * dFi[c] - F[:, i] * dFv[c]) / Fv**2 for c in range(len(free_src))])
        D = np.array(rows).transpose(2, 0, 1)
        det = np.linalg.det(D)
        w_src = src.to_chart(Zc)
        W = np.empty_like(F)
        for sl in sp.factor_slices:
            W[:, sl] = F[:, sl]
        w_tgt = tgt.to_chart(W)
        return np.abs(det) ** 2 * fs_density(sp, w_tgt) / fs_density(sp, w_src)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        comps = []
        for c in self.components:
            terms = []
            for m, coeff in sorted(c.terms()):
                re, im = _re_im(coeff)
                terms.append({"exponents": list(m), "coeff_re_num": int(re.p), "coeff_re_den": int(re.q),
                              "coeff_im_num": int(im.p), "coeff_im_den": int(im.q)})
            comps.append(terms)
        return {"space": self.space.kind.value, "components": comps}

    def hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def __eq__(self, other):
        if not isinstance(other, RationalMap) or other.space != self.space:
            return NotImplemented
        return self.components == other.components

    def __hash__(self):
        return hash((self.space.kind, self.components))

    def __repr__(self):
        comps = ", ".join(str(c.as_expr()) for c in self.components)
        return f"RationalMap({self.space.kind.value}: {comps})"


def compose(f: RationalMap, g: RationalMap, monomial_cap: int = MONOMIAL_CAP,
            bits_cap: int = COEFF_BITS_CAP, reduce: bool = True) -> RationalMap:
    """Exact composition ``f o g`` followed by gcd cancellation.

    ``reduce=False`` skips the cancellation; only safe when ``g`` is an
    automorphism.
    """
    if f.space != g.space:
        raise UsageError("maps act on different spaces")
    sp = f.space
    subs = list(g.components)
    out = []
    for comp in f.components:
        acc = _poly(0, *gens(sp))
        powers: dict[tuple[int, int], Poly] = {}
        for mon, coeff in comp.terms():
            term = _poly(coeff, *gens(sp))
            for v, e in enumerate(mon):
                if e == 0:
                    continue
                key = (v, e)
                if key not in powers:
                    powers[key] = subs[v] ** e
                    _check_caps(powers[key], monomial_cap, bits_cap)
                term = term * powers[key]
            acc = acc + term
        _check_caps(acc, monomial_cap, bits_cap)
        out.append(acc)
    return RationalMap(sp, out, check=False, reduce=reduce)


def raw_composition_degree(f: RationalMap, g: RationalMap):
    """Degree ``f o g`` would have without cancellation."""
    if f.space.kind is Kind.P1xP1:
        return tuple(map(tuple, (f.bidegree @ g.bidegree).tolist()))
    return f.degree * g.degree


# ---------------------------------------------------------------------------
# Point evaluation


def evaluate(f: RationalMap, point) -> np.ndarray:
    """Image of one point, rescaled to unit sup-norm on every factor."""
    Z = np.array(point, dtype=complex).reshape(1, -1)
    if Z.shape[1] != f.space.n_homog:
        raise UsageError("point has the wrong number of homogeneous coordinates")
    for sl in f.space.factor_slices:
        s = np.max(np.abs(Z[0, sl]))
        Z[0, sl] /= s
    W, _, ok = f.apply(Z)
    if not ok[0]:
        raise IndeterminacyError(f"all components vanish at {point}")
    F = f.raw(Z)[0]
    out = np.empty_like(F)
    for sl in f.space.factor_slices:
        out[sl] = F[sl] / np.abs(F[sl]).max()
    return out


def jacobian_norm_sq(f: RationalMap, point) -> float | np.ndarray:
    """``|Jac_omega(f)|^2``: chart Jacobian modulus squared times the ratio of
    Fubini-Study densities at image and source."""
    Z = np.asarray(point, dtype=complex)
    single = Z.ndim == 1
    val = f.jacobian_norm_sq(np.atleast_2d(Z), strict=True)
    return float(val[0]) if single else val


# ---------------------------------------------------------------------------
# Indeterminacy


@dataclass(frozen=True)
class IndeterminacySet:
    points: tuple[tuple[complex, ...], ...]
    method: str

    def __len__(self):
        return len(self.points)

    def as_array(self, n: int) -> np.ndarray:
        if not self.points:
            return np.zeros((0, n), dtype=complex)
        return np.array(self.points, dtype=complex)


def _mp_roots(p: Poly, dps: int = 50) -> list[complex]:
    """Numerical roots of a univariate exact polynomial (with multiplicity)."""
    if p.degree() <= 0:
        return []
    with mpmath.workdps(dps):
        coeffs = []
        for c in p.all_coeffs():
            re, im = _re_im(c)
            coeffs.append(mpmath.mpc(mpmath.mpf(re.p) / re.q, mpmath.mpf(im.p) / im.q))
        if p.degree() == 1:
            return [complex(-coeffs[1] / coeffs[0])]
        roots = mpmath.polyroots(coeffs, maxsteps=400, extraprec=4 * dps + 20 * p.degree())
        return [complex(r) for r in roots]


def _binary_roots(p: Poly) -> list[tuple[complex, complex]]:
    """Projective roots of a binary form ``p(u0, u1)``."""
    u0, u1 = p.gens
    d = p.total_degree()
    if p.is_zero:
        raise InternalError("binary form is identically zero")
    aff = _poly(p.as_expr().subs(u0, 1), u1)
    pts = [(1.0 + 0j, r) for r in _mp_roots(aff.sqf_part())]
    if aff.degree() < d:
        pts.append((0j, 1.0 + 0j))
    return pts


def _dedupe(space: ModelSpace, pts, tol=1e-8):
    from .geometry import chordal_distance
    out = []
    for p in pts:
        P = space.normalize(np.array(p, dtype=complex)[None, :])
        if any(chordal_distance(space, P, np.array(q)[None, :])[0] < tol for q in out):
            continue
        out.append(tuple(P[0]))
    return out


def _affine_common_zeros(polys: list[Poly], a, b, rng) -> list[tuple[complex, complex]]:
    """Common zeros in C^2 of polynomials in ``(a, b)`` via resultant elimination."""
    polys = [p for p in polys if not p.is_zero]
    if not polys:
        raise InternalError("no equations")
    if len(polys) == 1:
        p = polys[0]
        if p.total_degree() == 0:
            return []
        raise InternalError("single equation has a curve of zeros")
    for _ in range(10):
        if len(polys) == 2:
            g1, g2 = polys
        else:
            c = rng.integers(-7, 8, size=(2, len(polys)))
            g1 = sum((p * int(ci) for p, ci in zip(polys, c[0])), _poly(0, a, b))
            g2 = sum((p * int(ci) for p, ci in zip(polys, c[1])), _poly(0, a, b))
        if g1.total_degree() == 0 or g2.total_degree() == 0:
            return []
        R = sympy.resultant(g1.as_expr(), g2.as_expr(), b) if g1.degree(b) > 0 or g2.degree(b) > 0 else None
        if R is None:
            # neither depends on b: common zeros need b free -> only when both vanish identically
            raise InternalError("equations do not involve the second variable")
        R = _poly(R.as_expr(), a)
        if not R.is_zero:
            break
        if len(polys) == 2:
            polys = polys + [polys[0] + polys[1]]
    else:
        raise InternalError("resultant identically zero after reduction")
    sols = []
    for ra in _mp_roots(R.sqf_part()):
        cb = _numeric_univariate(g1, a, b, ra)
        if np.all(np.abs(cb) < 1e-30):
            cb = _numeric_univariate(g2, a, b, ra)
        rb = np.roots(cb) if cb.size > 1 else np.array([])
        for r in rb:
            sols.append((ra, complex(r)))
    return sols


def _numeric_univariate(p: Poly, a, b, aval: complex) -> np.ndarray:
    deg = p.degree(b)
    cb = np.zeros(deg + 1, dtype=complex)
    for (ea, eb), c in p.terms():
        cb[deg - eb] += _c2complex(c) * aval**ea
    # trim leading near-zeros
    scale = np.max(np.abs(cb)) if cb.size else 0.0
    k = 0
    while k < cb.size - 1 and abs(cb[k]) <= 1e-13 * scale:
        k += 1
    return cb[k:]


def _residual_ok(f: RationalMap, Z: np.ndarray, groups=None, tol: float = 1e-8) -> np.ndarray:
    """True where every component of the selected groups vanishes (relative)."""
    Z = np.atleast_2d(Z)
    Zs = Z.copy()
    for sl in f.space.factor_slices:
        Zs[:, sl] /= np.max(np.abs(Zs[:, sl]), axis=1, keepdims=True)
    F = f.raw(Zs)
    ok = np.zeros(Z.shape[0], dtype=bool)
    for j, grp in enumerate(_groups(f.space)):
        if groups is not None and j not in groups:
            continue
        ok |= np.max(np.abs(F[:, grp]), axis=1) < tol
    return ok


def indeterminacy_points(f: RationalMap) -> IndeterminacySet:
    """Points where all components of some factor vanish simultaneously."""
    sp = f.space
    if sp.kind is Kind.P1:
        return IndeterminacySet((), "exact_resultant")
    rng = np.random.default_rng(7)
    a, b = sympy.symbols("_a _b")
    cands = []
    if sp.kind is Kind.P2:
        z0, z1, z2 = gens(sp)
        groups = [[0, 1, 2]]
        # affine part z2 = 1
        polys = [_poly(c.as_expr().subs({z0: a, z1: b, z2: 1}), a, b) for c in f.components]
        for (va, vb) in _affine_common_zeros(polys, a, b, rng):
            cands.append((va, vb, 1.0))
        # line at infinity z2 = 0
        u0, u1 = sympy.symbols("_u0 _u1")
        restr = [_poly(c.as_expr().subs({z0: u0, z1: u1, z2: 0}), u0, u1) for c in f.components]
        g = None
        for r in restr:
            if r.is_zero:
                continue
            g = r if g is None else g.gcd(r)
        if g is None:
            raise InternalError("all components vanish on a line")
        if g.total_degree() > 0:
            for (p0, p1) in _binary_roots(g):
                cands.append((p0, p1, 0.0))
    else:
        x0, x1, y0, y1 = gens(sp)
        u0, u1 = sympy.symbols("_u0 _u1")
        for grp in ([0, 1], [2, 3]):
            comps = [f.components[i] for i in grp]
            polys = [_poly(c.as_expr().subs({x0: 1, x1: a, y0: 1, y1: b}), a, b) for c in comps]
            nz = [p for p in polys if not p.is_zero]
            if len(nz) >= 2 and all(p.total_degree() > 0 for p in nz):
                for (va, vb) in _affine_common_zeros(nz, a, b, rng):
                    cands.append((1.0, va, 1.0, vb))
            # x = (0:1), y free
            for fixed, free_sub, build in (
                ({x0: 0, x1: 1}, {y0: u0, y1: u1}, lambda p: (0.0, 1.0, p[0], p[1])),
                ({y0: 0, y1: 1}, {x0: u0, x1: u1}, lambda p: (p[0], p[1], 0.0, 1.0)),
            ):
                restr = [_poly(c.as_expr().subs({**fixed, **free_sub}), u0, u1) for c in comps]
                nzr = [r for r in restr if not r.is_zero]
                if not nzr:
                    raise InternalError("components vanish on a fiber")
                g = nzr[0]
                for r in nzr[1:]:
                    g = g.gcd(r)
                if g.total_degree() > 0:
                    for p in _binary_roots(g):
                        cands.append(build(p))
    cands = [c for c in cands if np.all(np.isfinite(np.array(c, dtype=complex)))]
    if cands:
        Z = np.array(cands, dtype=complex)
        ok = _residual_ok(f, Z, tol=1e-10)
        cands = [tuple(z) for z, o in zip(Z, ok) if o]
    pts = _dedupe(sp, cands)
    # present each point with unit sup-norm per factor, rounded noise removed
    clean = []
    for p in pts:
        P = np.array(p, dtype=complex)
        for sl in sp.factor_slices:
            P[sl] = P[sl] / P[sl][np.argmax(np.abs(P[sl]))]
        P[np.abs(P) < 1e-12] = 0.0
        clean.append(tuple(complex(v) for v in P))
    clean.sort(key=lambda t: tuple((-abs(v), v.real, v.imag) for v in t))
    return IndeterminacySet(tuple(clean), "exact_resultant")


# ---------------------------------------------------------------------------
# Topological degree


def _random_linear(sp: ModelSpace, rng) -> list[np.ndarray]:
    """Random invertible integer matrices, one per projective factor."""
    mats = []
    for sl in sp.factor_slices:
        n = sl.stop - sl.start
        while True:
            M = rng.integers(-4, 5, size=(n, n))
            if round(np.linalg.det(M)) != 0:
                break
        mats.append(M)
    return mats


def _linear_map(sp: ModelSpace, mats) -> RationalMap:
    g = gens(sp)
    comps = []
    for sl, M in zip(sp.factor_slices, mats):
        n = sl.stop - sl.start
        for i in range(n):
            comps.append(sum(int(M[i, j]) * g[sl.start + j] for j in range(n)))
    return RationalMap(sp, comps, check=False, reduce=False)


def _full_indeterminacy(f: RationalMap) -> np.ndarray:
    """Points where every component vanishes (the whole ``I_f`` on P^k)."""
    pts = indeterminacy_points(f).as_array(f.space.n_homog)
    if pts.shape[0] == 0 or f.space.kind is not Kind.P1xP1:
        return pts
    Z = f.space.normalize(pts)
    F = f.raw(Z)
    return pts[np.max(np.abs(F), axis=1) < 1e-9]


def _count_preimages(f: RationalMap, target, rng, I_full: np.ndarray) -> int:
    """Distinct preimages of an integer target point.

    The two equations ``y0 F_i - y_i F_0`` cut out the preimages together with
    the points where all components vanish.  After a random linear change of
    source coordinates every such point is affine with a distinct first
    coordinate, so the number of preimages is the number of distinct roots of
    the exact eliminant minus the number of those indeterminacy points.
    """
    sp = f.space
    a, b = sympy.symbols("_a _b")
    mats = _random_linear(sp, rng)
    h = compose(f, _linear_map(sp, mats), monomial_cap=10**9, reduce=False)
    g = gens(sp)
    t = [int(v) for v in target]
    C = h.components
    if sp.kind is Kind.P1:
        z0, z1 = g
        p = _poly((t[0] * C[1] - t[1] * C[0]).as_expr().subs({z0: 1, z1: a}), a)
        if p.is_zero:
            raise NumericalInstabilityError("target is not a generic point")
        return p.sqf_part().degree() + (1 if p.degree() < h.degree else 0)
    if sp.kind is Kind.P2:
        E1, E2 = t[0] * C[1] - t[1] * C[0], t[0] * C[2] - t[2] * C[0]
        subs = {g[0]: a, g[1]: b, g[2]: 1}
    else:
        E1, E2 = t[0] * C[1] - t[1] * C[0], t[2] * C[3] - t[3] * C[2]
        subs = {g[0]: 1, g[1]: a, g[2]: 1, g[3]: b}
    e1, e2 = E1.as_expr().subs(subs), E2.as_expr().subs(subs)
    R = _poly(sympy.resultant(e1, e2, b), a)
    if R.is_zero:
        raise NumericalInstabilityError("eliminant vanishes identically for this target")
    return R.sqf_part().degree() - I_full.shape[0]


def topological_degree(f: RationalMap, sample_count: int = 3, seed: int = 0,
                       vote_threshold: float = 0.5) -> int:
    """Number of preimages of a generic point, majority-voted over samples."""
    if sample_count < 1:
        raise UsageError("sample_count must be positive")
    rng = np.random.default_rng(seed)
    I_full = _full_indeterminacy(f) if f.space.kind is not Kind.P1 else np.zeros((0, 2))
    counts = []
    for _ in range(sample_count):
        target = rng.integers(1, 30, size=f.space.n_homog) * rng.choice([-1, 1], size=f.space.n_homog)
        counts.append(_count_preimages(f, target, rng, I_full))
    vals, freq = np.unique(counts, return_counts=True)
    best = int(vals[np.argmax(freq)])
    if len(counts) > 1 and freq.max() / len(counts) <= vote_threshold:
        raise NumericalInstabilityError(f"inconsistent preimage counts {counts}")
    return best


# ---------------------------------------------------------------------------
# log |Jac| split


def log_jacobian_qpsh_split(f: RationalMap, grid) -> tuple:
    """Split ``log|Jac_omega(f)| = u1 - u2`` on a grid.

    ``u1`` collects ``log|det|`` of the chart Jacobian and the pulled-back
    Fubini-Study density, ``u2`` the source density, each in the chart owning
    the node.  Returns two :class:`~greenlab.potentials.GridPotential` objects
    in ``raw`` normalization; nodes in the indeterminacy set are pole-masked.
    """
    from .potentials import GridPotential

    sp = f.space
    Z = grid.homog
    n = Z.shape[0]
    u1 = np.full(n, -np.inf)
    u2 = np.zeros(n)
    W, _, ok = f.apply(Z)
    src_ids = grid.chart_ids
    tgt_ids = sp.owning_chart(np.where(ok[:, None], W, 1.0))
    charts = sp.charts
    k = sp.dim
    for a in np.unique(src_ids):
        w_src = charts[a].to_chart(Z[src_ids == a])
        u2[src_ids == a] = 0.5 * np.log(fs_density(sp, w_src))
    with np.errstate(divide="ignore"):
        jac = f.jacobian_norm_sq(Z, strict=False)
        lj = 0.5 * np.log(jac)
    u1 = np.where(ok, lj + u2, -np.inf)
    coeffs = sp.reference_class * (k + 1)
    return (GridPotential.from_values(grid, u1, coeffs, "raw"),
            GridPotential.from_values(grid, u2, coeffs, "raw"))


# ---------------------------------------------------------------------------
# JSON map files


def _term_coeff(t: dict):
    re = sympy.Rational(int(t.get("coeff_re_num", 0)), int(t.get("coeff_re_den", 1)))
    im = sympy.Rational(int(t.get("coeff_im_num", 0)), int(t.get("coeff_im_den", 1)))
    return re + sympy.I * im


def map_from_json_dict(data: dict) -> RationalMap:
    try:
        sp = space_from_name(data["space"])
        g = gens(sp)
        comps = []
        for comp in data["components"]:
            expr = sympy.Integer(0)
            for t in comp:
                e = [int(v) for v in t["exponents"]]
                if len(e) != len(g) or min(e) < 0:
                    raise UsageError("exponent tuple has wrong length or negative entries")
                mon = sympy.Integer(1)
                for v, ev in zip(g, e):
                    mon *= v**ev
                expr += _term_coeff(t) * mon
            comps.append(expr)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"malformed map definition: {exc}") from exc
    return RationalMap(sp, comps)


def load_map(path) -> RationalMap:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"map file is not valid JSON: {exc}") from exc
    return map_from_json_dict(data)


def save_map(f: RationalMap, path) -> None:
    with open(path, "w") as fh:
        json.dump(f.to_json_dict(), fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Named examples


def squaring() -> RationalMap:
    return RationalMap("P1", ["z0**2", "z1**2"])


def quadratic_polynomial(c) -> RationalMap:
    """``z -> z^2 + c`` on the projective line."""
    c = sympy.nsimplify(c) if not isinstance(c, sympy.Basic) else c
    z0, z1 = gens(space_from_name("P1"))
    return RationalMap("P1", [z0**2, z1**2 + c * z0**2])


def p2_power(d: int = 2) -> RationalMap:
    return RationalMap("P2", [f"z0**{d}", f"z1**{d}", f"z2**{d}"])


def cremona() -> RationalMap:
    return RationalMap("P2", ["z1*z2", "z0*z2", "z0*z1"])


def monomial_p1xp1(M) -> RationalMap:
    """Monomial map ``(x, y) -> (x^a y^b, x^c y^d)`` with nonnegative exponents."""
    (a, b), (c, d) = M
    return RationalMap("P1xP1", [f"x0**{a}*y0**{b}", f"x1**{a}*y1**{b}",
                                 f"x0**{c}*y0**{d}", f"x1**{c}*y1**{d}"])
