"""Action of a map on H^{1,1}, degree sequences and dynamical degrees.

The model basis is ``{omega_FS}`` on projective spaces and the two fiber
classes ``{h1, h2}`` on the product of lines.  With ``M`` the bidegree matrix
(row ``i`` = degrees of the ``i``-th target factor in the source variables),
``f^* h_i = M[i, 0] h_1 + M[i, 1] h_2`` so the pull-back matrix is ``M^T``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import sympy

from .errors import UsageError
from .geometry import Kind
from .maps import RationalMap, compose, topological_degree

_BASIS = {Kind.P1: ("omega_FS",), Kind.P2: ("omega_FS",), Kind.P1xP1: ("h1", "h2")}


@dataclass(frozen=True)
class CohomologyAction:
    """Matrix of ``f^*`` on H^{1,1} with its spectral data.

    Attributes
    ----------
    matrix : ndarray of int
        Pull-back matrix in the model basis.
    lambda1 : float
        Spectral radius.
    lambda1_exact : sympy expression
        Exact algebraic value of the spectral radius.
    simple : bool
        True when the spectral radius is a simple real root strictly larger in
        modulus than every other eigenvalue.
    gap : float
        ``lambda1 - max |other eigenvalue|`` (``inf`` for rank one).
    perron_class : ndarray
        Nonnegative eigenvector, normalized so that its pairing with the
        reference class is one.
    """

    basis: tuple[str, ...]
    matrix: np.ndarray
    lambda1: float
    lambda1_exact: sympy.Expr
    simple: bool
    gap: float
    perron_class: np.ndarray
    charpoly: tuple[int, ...] = field(default=())

    def apply(self, coeffs) -> np.ndarray:
        return self.matrix @ np.asarray(coeffs, dtype=float)


def _bidegree_matrix(f: RationalMap) -> np.ndarray:
    if f.space.kind is Kind.P1xP1:
        return f.bidegree
    return np.array([[f.degree]], dtype=int)


def _spectral(A: np.ndarray, space) -> tuple:
    t = sympy.Symbol("t")
    Mx = sympy.Matrix(A.tolist())
    cp = Mx.charpoly(t)
    poly = sympy.Poly(cp.as_expr(), t)
    # isolate real roots exactly; the Perron root is the largest one
    ints = poly.intervals()
    (lo, hi), mult = max(ints, key=lambda iv: iv[0][1])
    lam = next(r for r in poly.all_roots() if r.is_real and lo <= r <= hi)
    others = list(poly.all_roots())
    others.remove(lam)
    if others:
        second = max(abs(sympy.N(r, 50)) for r in others)
        lam_n = sympy.N(lam, 50)
        simple = mult == 1 and bool(lam_n - second > 0)
        gap = float(lam_n - second)
    else:
        simple, gap = True, math.inf
    lam_f = float(sympy.N(lam, 30))
    # Perron vector from the exact kernel of A - lam
    ker = (Mx - lam * sympy.eye(Mx.shape[0])).nullspace()
    if not ker:
        raise UsageError("no eigenvector for the spectral radius")
    v = np.array([float(sympy.N(sympy.simplify(c), 30)) for c in ker[0]])
    if np.all(v <= 0):
        v = -v
    v = np.clip(v, 0.0, None)
    v = v / space.pairing_with_reference(v)
    return lam, lam_f, simple, gap, v, tuple(int(c) for c in poly.all_coeffs())


def pullback_matrix(f: RationalMap) -> CohomologyAction:
    """Matrix of ``f^*`` on H^{1,1} with spectral radius and Perron class."""
    A = _bidegree_matrix(f).T.copy()
    lam, lam_f, simple, gap, v, cp = _spectral(A, f.space)
    return CohomologyAction(_BASIS[f.space.kind], A, lam_f, lam, simple, gap, v, cp)


def iterates(f: RationalMap, N: int, monomial_cap: int | None = None) -> list[RationalMap]:
    """``[f, f^2, ..., f^N]`` by repeated reduced composition."""
    if N < 1:
        raise UsageError("N must be at least 1")
    kw = {} if monomial_cap is None else {"monomial_cap": monomial_cap}
    out = [f]
    for _ in range(N - 1):
        out.append(compose(f, out[-1], **kw))
    return out


def _scalar_degree(g: RationalMap) -> int:
    if g.space.kind is Kind.P1xP1:
        return int(g.bidegree.max())
    return int(g.degree)


def degree_sequence(f: RationalMap, N: int, monomial_cap: int | None = None) -> list[int]:
    """Exact degrees of ``f^n`` for ``n = 1..N`` (max bidegree entry on P1xP1)."""
    return [_scalar_degree(g) for g in iterates(f, N, monomial_cap)]


def bidegree_sequence(f: RationalMap, N: int, monomial_cap: int | None = None) -> list[np.ndarray]:
    """Exact degree data (1x1 or 2x2 matrices) of ``f^n`` for ``n = 1..N``."""
    return [_bidegree_matrix(g) for g in iterates(f, N, monomial_cap)]


@dataclass(frozen=True)
class RegularityVerdict:
    regular: bool
    first_failure: int | None
    observed: tuple
    expected: tuple

    def __bool__(self):
        return self.regular


def is_1_regular(f: RationalMap, N: int, monomial_cap: int | None = None) -> RegularityVerdict:
    """Compare degree data of ``f^n`` with the ``n``-th matrix power, ``n <= N``."""
    M = _bidegree_matrix(f)
    observed, expected = [], []
    P = np.eye(M.shape[0], dtype=object)
    Mo = M.astype(object)
    first = None
    for n, B in enumerate(bidegree_sequence(f, N, monomial_cap), start=1):
        P = P.dot(Mo)
        observed.append(B.tolist())
        expected.append(P.tolist())
        if first is None and B.tolist() != P.tolist():
            first = n
            break
    return RegularityVerdict(first is None, first, tuple(map(str, observed)), tuple(map(str, expected)))


@dataclass(frozen=True)
class DegreeEstimate:
    """Dynamical degree estimate from an exact degree sequence.

    ``value`` is the tail ratio ``(deg f^N / deg f^m)^(1/(N-m))`` with
    ``m = N // 2``, which removes the constant prefactor that biases the
    plain root ``deg(f^N)^(1/N)``; ``nth_roots`` lists the plain roots.
    """

    value: float
    degrees: tuple[int, ...]
    nth_roots: tuple[float, ...]


def dynamical_degree_estimate(f: RationalMap, N: int, monomial_cap: int | None = None) -> DegreeEstimate:
    degs = degree_sequence(f, N, monomial_cap)
    roots = tuple(d ** (1.0 / n) for n, d in enumerate(degs, start=1))
    m = N // 2
    if m == 0:
        value = float(degs[0])
    else:
        value = (degs[N - 1] / degs[m - 1]) ** (1.0 / (N - m))
    return DegreeEstimate(float(value), tuple(degs), roots)


def is_monomial(f: RationalMap) -> bool:
    return all(len(c.terms()) == 1 for c in f.components)


def dtop(f: RationalMap, sample_count: int = 3, seed: int = 0) -> int:
    """Topological degree; ``|det M|`` cross-checked by counting for monomial maps."""
    d = topological_degree(f, sample_count=sample_count, seed=seed)
    if f.space.kind is Kind.P1xP1 and is_monomial(f):
        det = abs(int(round(np.linalg.det(f.bidegree))))
        if det != d:
            from .errors import InternalError
            raise InternalError(f"monomial determinant {det} disagrees with preimage count {d}")
    return d


def write_degree_csv(path, f: RationalMap, N: int, monomial_cap: int | None = None) -> None:
    """CSV with columns ``n``, degree data and ``nth_root``."""
    seq = bidegree_sequence(f, N, monomial_cap)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if f.space.kind is Kind.P1xP1:
            w.writerow(["n", "m00", "m01", "m10", "m11", "nth_root"])
            for n, B in enumerate(seq, start=1):
                w.writerow([n, *B.ravel().tolist(), repr(int(B.max()) ** (1.0 / n))])
        else:
            w.writerow(["n", "degree", "nth_root"])
            for n, B in enumerate(seq, start=1):
                w.writerow([n, int(B[0, 0]), repr(int(B[0, 0]) ** (1.0 / n))])
