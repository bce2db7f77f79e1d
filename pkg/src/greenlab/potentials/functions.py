"""Analytic quasi-psh functions evaluated at homogeneous coordinates.

A :class:`PotentialFunction` ``phi`` comes with class coefficients ``c`` in the
model basis and is ``theta_c``-psh, where ``theta_c`` is the matching
combination of Fubini-Study forms (``c * omega_FS`` on projective spaces,
``c1 omega_1 + c2 omega_2`` on the product).  Inputs are unit-normalized
homogeneous coordinates; :meth:`PotentialFunction.eval_log` evaluates on
log-moduli/arguments, which keeps logarithmic poles exact along orbits that
converge faster than double precision can follow.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import UsageError
from ..geometry import Kind, ModelSpace, space_from_name
from ..maps import RationalMap, _log_eval, from_log, log_normalize, to_log


class PotentialFunction:
    """Base class; subclasses implement ``_eval``."""

    def __init__(self, space, class_coeffs):
        self.space = space_from_name(space)
        c = np.atleast_1d(np.asarray(class_coeffs, dtype=float))
        if c.shape != (self.space.h11_rank,):
            raise UsageError("class coefficients do not match the model basis")
        self.class_coeffs = c

    def __call__(self, Z) -> np.ndarray:
        Z = self.space.normalize(np.atleast_2d(np.asarray(Z, dtype=complex)))
        return self._eval(Z)

    def _eval(self, Z) -> np.ndarray:
        raise NotImplementedError

    def eval_log(self, L, A) -> np.ndarray:
        """Evaluate at points given by normalized log-moduli and arguments."""
        return self._eval(from_log(self.space, L, A))

    # combinators
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return Shifted(self, float(other))
        return Sum(self, other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return Shifted(self, -float(other))
        return Sum(self, Scaled(other, -1.0))

    def __mul__(self, s: float):
        return Scaled(self, float(s))

    __rmul__ = __mul__

    def pullback(self, f: RationalMap) -> "PulledBack":
        return PulledBack(self, f)


def _check_form(space: ModelSpace, form, factor: int) -> tuple[np.ndarray, slice]:
    sl = space.factor_slices[factor]
    l = np.asarray(form, dtype=complex)
    if l.shape != (sl.stop - sl.start,) or not np.any(l):
        raise UsageError("linear form has the wrong size or vanishes identically")
    return l, sl


def form_through_point(point) -> np.ndarray:
    """Linear form on C^2 vanishing at the projective point ``(p0:p1)``."""
    p0, p1 = np.asarray(point, dtype=complex)
    return np.array([p1, -p0])


class Constant(PotentialFunction):
    def __init__(self, space, class_coeffs, value: float = 0.0):
        super().__init__(space, class_coeffs)
        self.value = float(value)

    def _eval(self, Z):
        return np.full(Z.shape[0], self.value)

    def eval_log(self, L, A):
        return np.full(np.atleast_2d(L).shape[0], self.value)


def zero(space, class_coeffs=None) -> Constant:
    space = space_from_name(space)
    c = space.reference_class if class_coeffs is None else class_coeffs
    return Constant(space, c, 0.0)


class LogDivisor(PotentialFunction):
    """``w * log(|l(Z)| / (|Z| |l|))`` for a linear form ``l`` on one factor.

    Potential of ``w`` times the current of integration on ``{l = 0}``
    relative to ``w`` times that factor's Fubini-Study form.
    """

    def __init__(self, space, form, weight: float = 1.0, factor: int = 0):
        space = space_from_name(space)
        l, sl = _check_form(space, form, factor)
        c = np.zeros(space.h11_rank)
        c[factor if space.kind is Kind.P1xP1 else 0] = weight
        super().__init__(space, c)
        self.form = l / np.linalg.norm(l)
        self.slice = sl
        self.weight = float(weight)

    def _eval(self, Z):
        with np.errstate(divide="ignore"):
            return self.weight * np.log(np.abs(Z[:, self.slice] @ self.form))

    def eval_log(self, L, A):
        L = np.atleast_2d(L)
        A = np.atleast_2d(A)
        n = self.slice.stop - self.slice.start
        nz = np.nonzero(self.form)[0]
        exps = np.eye(n, dtype=int)[nz]
        Ll, _ = _log_eval(exps, self.form[nz], L[:, self.slice], A[:, self.slice])
        return self.weight * Ll


def log_point(space, point, weight: float = 1.0, factor: int = 0) -> LogDivisor:
    """``weight * (log|z - a| - fs correction)`` on a line factor, pole at ``point``."""
    return LogDivisor(space, form_through_point(point), weight, factor)


class SmoothLogDivisor(PotentialFunction):
    """``w/2 * log(|l(Z)|^2/|l|^2 + eps |Z|^2) - w log|Z|``: zero Lelong numbers."""

    def __init__(self, space, form, eps: float, weight: float = 1.0, factor: int = 0):
        space = space_from_name(space)
        if eps <= 0:
            raise UsageError("eps must be positive")
        l, sl = _check_form(space, form, factor)
        c = np.zeros(space.h11_rank)
        c[factor if space.kind is Kind.P1xP1 else 0] = weight
        super().__init__(space, c)
        self.form = l / np.linalg.norm(l)
        self.slice = sl
        self.eps = float(eps)
        self.weight = float(weight)

    def _eval(self, Z):
        return 0.5 * self.weight * np.log(np.abs(Z[:, self.slice] @ self.form) ** 2 + self.eps)


def smooth_log_point(space, point, eps: float, weight: float = 1.0, factor: int = 0) -> SmoothLogDivisor:
    return SmoothLogDivisor(space, form_through_point(point), eps, weight, factor)


class Bump(PotentialFunction):
    """Smooth function ``a * exp(-(1 - |<Z, P>|^2) / s^2)`` (class zero).

    On the product the chordal terms of the two factors are summed.
    """

    def __init__(self, space, center, amplitude: float, width: float, class_coeffs=None):
        space = space_from_name(space)
        super().__init__(space, np.zeros(space.h11_rank) if class_coeffs is None else class_coeffs)
        P = space.normalize(np.asarray(center, dtype=complex)[None, :])[0]
        self.center = P
        self.amplitude = float(amplitude)
        self.width = float(width)

    def _eval(self, Z):
        d2 = np.zeros(Z.shape[0])
        for sl in self.space.factor_slices:
            d2 += 1.0 - np.abs(Z[:, sl] @ np.conj(self.center[sl])) ** 2
        return self.amplitude * np.exp(-d2 / self.width**2)


class Custom(PotentialFunction):
    """Wrap an arbitrary vectorized callable of unit homogeneous coordinates."""

    def __init__(self, space, class_coeffs, fn: Callable[[np.ndarray], np.ndarray], name: str = "custom"):
        super().__init__(space, class_coeffs)
        self.fn = fn
        self.name = name

    def _eval(self, Z):
        return np.asarray(self.fn(Z), dtype=float)


class Sum(PotentialFunction):
    def __init__(self, a: PotentialFunction, b: PotentialFunction):
        if a.space != b.space:
            raise UsageError("potentials live on different spaces")
        super().__init__(a.space, a.class_coeffs + b.class_coeffs)
        self.a, self.b = a, b

    def _eval(self, Z):
        return self.a._eval(Z) + self.b._eval(Z)

    def eval_log(self, L, A):
        return self.a.eval_log(L, A) + self.b.eval_log(L, A)


class Scaled(PotentialFunction):
    def __init__(self, a: PotentialFunction, s: float):
        super().__init__(a.space, a.class_coeffs * s)
        self.a, self.s = a, float(s)

    def _eval(self, Z):
        return self.s * self.a._eval(Z)

    def eval_log(self, L, A):
        return self.s * self.a.eval_log(L, A)


class Shifted(PotentialFunction):
    def __init__(self, a: PotentialFunction, c: float):
        super().__init__(a.space, a.class_coeffs)
        self.a, self.c = a, float(c)

    def _eval(self, Z):
        return self.a._eval(Z) + self.c

    def eval_log(self, L, A):
        return self.a.eval_log(L, A) + self.c


class MaxWith(PotentialFunction):
    """``max(a, b)``; both must be potentials for the same class."""

    def __init__(self, a: PotentialFunction, b: PotentialFunction):
        if not np.allclose(a.class_coeffs, b.class_coeffs):
            raise UsageError("max of potentials for different classes")
        super().__init__(a.space, a.class_coeffs)
        self.a, self.b = a, b

    def _eval(self, Z):
        return np.maximum(self.a._eval(Z), self.b._eval(Z))

    def eval_log(self, L, A):
        return np.maximum(self.a.eval_log(L, A), self.b.eval_log(L, A))


def pullback_gamma(coeffs, norms: np.ndarray) -> np.ndarray:
    """``gamma_f = sum_j c_j log|F^(j)(Z)|`` for unit ``Z`` from per-factor log-norms."""
    return norms @ np.asarray(coeffs, dtype=float)


class PulledBack(PotentialFunction):
    """``phi o f + gamma_f``: potential of ``f^*(theta_c + dd^c phi)``."""

    def __init__(self, phi: PotentialFunction, f: RationalMap):
        if phi.space != f.space:
            raise UsageError("map and potential live on different spaces")
        from ..cohomology import pullback_matrix

        A = pullback_matrix(f).matrix
        super().__init__(phi.space, A @ phi.class_coeffs)
        self.phi, self.f = phi, f

    def eval_log(self, L, A):
        LW, AW, norms, ok = self.f.apply_log(L, A)
        out = np.full(np.atleast_2d(L).shape[0], -np.inf)
        if np.any(ok):
            out[ok] = self.phi.eval_log(LW[ok], AW[ok]) + pullback_gamma(self.phi.class_coeffs, norms[ok])
        return out

    def _eval(self, Z):
        L, A = to_log(Z)
        L, _ = log_normalize(self.space, L)
        return self.eval_log(L, A)
