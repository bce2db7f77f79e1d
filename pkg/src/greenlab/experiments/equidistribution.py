"""Equidistribution of pulled-back forms, currents and zeros of random sections."""

from __future__ import annotations

import math
from itertools import product as _iproduct

import numpy as np

from ..cohomology import pullback_matrix
from ..errors import DomainError, UsageError
from ..geometry import AtlasGrid, Kind, default_grid
from ..green import GreenResult, green_potential, pullback_sequence
from ..maps import RationalMap, _log_eval
from ..parallel import pmap, trial_rng
from ..potentials.functions import PotentialFunction, zero
from ..potentials.grid import CurrentRep, GridPotential, l1_distance
from ..potentials.lelong import lelong_number
from .measures import (EmpiricalMeasure, binary_zeros, brolin_measure_oracle, default_bank,
                       green_measure, preimages)
from .report import Constant, ExperimentReport

LELONG_TOL = 0.05
FINE_RADII = tuple(2.0 ** -j for j in range(20, 31))


def _geometric_rate(d, skip: int = 2, floor: float = 1e-14) -> float:
    y = np.asarray(d[skip:], dtype=float)
    y = y[y > floor]
    if y.size < 3:
        return math.nan
    return float(math.exp(np.polyfit(np.arange(y.size), np.log(y), 1)[0]))


def _settles(d, tol: float, tail: int = 3) -> bool:
    """Final value below ``tol`` and the last ``tail`` steps non-increasing."""
    d = np.asarray(d, dtype=float)
    if d.size == 0 or not np.isfinite(d[-1]) or d[-1] >= tol:
        return False
    t = d[-(tail + 1):]
    return bool(np.all(np.diff(t) <= 1e-3 * tol))


def _green_for(f: RationalMap, grid: AtlasGrid | None, green: GreenResult | None, probes=None):
    if green is not None:
        return green
    return green_potential(f, grid=grid, probes=probes)


def _perron_projection(f: RationalMap, c) -> float:
    act = pullback_matrix(f)
    A = act.matrix.astype(float)
    w, vl = np.linalg.eig(A.T)
    ell = np.real(vl[:, np.argmax(np.real(w))])
    return float(ell @ np.asarray(c, dtype=float) / (ell @ act.perron_class))


def _probe_gaps(f: RationalMap, h: PotentialFunction, probes, n_max: int, lam: float) -> list:
    """``max_p lambda^-n |h(f^n p)|``: the gap to the reference pull-back on the probes."""
    Z = f.space.normalize(np.atleast_2d(np.asarray(probes, dtype=complex)))
    out = []
    for n in range(n_max + 1):
        out.append(float(np.max(np.abs(h(Z)))) / lam**n if Z.shape[0] else math.nan)
        W, _, ok = f.apply(Z)
        Z = f.space.normalize(W[ok])
    return out


def _drift(f: RationalMap, seq, proj: float, alpha) -> list:
    return [float(np.linalg.norm(np.asarray(c) - proj * np.asarray(alpha))) for c in seq.class_coeffs]


# ---------------------------------------------------------------------------
# Smooth forms and currents


def equidistribute_smooth(f: RationalMap, h: PotentialFunction | None = None, n_max: int = 12,
                          tol: float = 5e-4, grid: AtlasGrid | None = None,
                          green: GreenResult | None = None, probes=None, seed: int = 0) -> ExperimentReport:
    """``lambda^-n (f^n)^* theta'`` against the Green potential.

    ``theta' = theta_c + dd^c h`` with ``c`` the class of ``h`` (``h = None``
    means the Perron class itself with ``h = 0``).  Distances are L1 between
    ``sup = 0`` potentials, to ``p g`` where ``p`` is the Perron projection of
    ``c``.  ``gap`` compares against the pull-backs of the reference form
    ``p theta_alpha`` directly.

    Raises
    ------
    UsageError
        The class of ``h`` has no component along the Perron class.
    """
    g = _green_for(f, grid, green, probes)
    grid = g.green_potential.grid
    if h is None:
        h = zero(f.space, g.alpha)
    if h.space != f.space:
        raise UsageError("potential and map live on different spaces")
    proj = _perron_projection(f, h.class_coeffs)
    if not proj > 1e-12:
        raise UsageError("class mismatch: no component along the Perron class")
    seq = pullback_sequence(CurrentRep.from_function(h, grid), f, n_max, green=g)
    ref = pullback_sequence(CurrentRep.from_function(zero(f.space, proj * g.alpha), grid), f, n_max)
    gap = [l1_distance(a.potential, b.potential) for a, b in zip(seq.currents, ref.currents)]
    config = {"n_max": n_max, "tol": tol, "grid": list(grid.key), "class": h.class_coeffs.tolist()}
    rep = ExperimentReport("equidistribute_smooth", config, seed, map_hash=f.hash())
    rep.series = {"n": list(range(len(seq.distances))), "distance": seq.distances, "gap": gap,
                  "class_drift": _drift(f, seq, proj, g.alpha)}
    rate = _geometric_rate(seq.distances)
    rep.constants = {"rate": rate, "expected_rate": 1.0 / g.lam, "projection": proj,
                     "final_distance": seq.distances[-1], "final_gap": gap[-1],
                     "green_rate": g.rate(), "green_iterations": g.iterations}
    if probes is not None and np.allclose(h.class_coeffs, proj * g.alpha):
        pg = _probe_gaps(f, h, probes, n_max, g.lam)
        rep.series["probe_gap"] = pg
        rep.constants["probe_rate"] = _geometric_rate(pg, skip=0, floor=0.0)
    rep.verdict = "consistent" if _settles(seq.distances, tol) else "inconsistent"
    return rep


def _lelong_points(gp: GridPotential, limit: int = 8) -> np.ndarray:
    H = gp.grid.homog
    idx = np.nonzero(gp.pole)[0]
    if idx.size == 0:
        idx = np.array([int(np.argmin(np.where(np.isfinite(gp.values), gp.values, -np.inf)))])
    return H[idx[:limit]]


def equidistribute_current(S: CurrentRep, f: RationalMap, n_max: int = 16, tol: float = 5e-4,
                           green: GreenResult | None = None, radii=None, seed: int = 0) -> ExperimentReport:
    """``lambda^-n (f^n)^* S`` against the Green potential.

    Lelong numbers of ``S`` are sampled at its pole nodes (or at the minimum
    when there are none).  A value above 0.05 is recorded in the notes as a
    violated hypothesis; the run still proceeds.
    """
    gp = S.potential
    g = _green_for(f, gp.grid, green)
    if g.green_potential.grid.key != gp.grid.key:
        raise UsageError("current and Green potential are sampled on different grids")
    target = gp.func if gp.func is not None else gp
    if radii is None:
        radii = FINE_RADII if gp.func is not None else tuple(2.0 ** -j for j in range(3, 7))
    nus = []
    for x in _lelong_points(gp):
        try:
            nus.append(lelong_number(target, x, radii))
        except (DomainError, UsageError):
            nus.append(math.inf)
    nu = max(nus) if nus else 0.0
    seq = pullback_sequence(S, f, n_max, green=g)
    config = {"n_max": n_max, "tol": tol, "grid": list(gp.grid.key),
              "class": np.asarray(S.class_coeffs).tolist(), "lelong_radii": [float(r) for r in radii]}
    rep = ExperimentReport("equidistribute_current", config, seed, map_hash=f.hash())
    rep.series = {"n": list(range(len(seq.distances))), "distance": seq.distances}
    rep.constants = {"lelong_max": nu, "rate": _geometric_rate(seq.distances),
                     "final_distance": seq.distances[-1]}
    if nu > LELONG_TOL:
        rep.notes.append("hypothesis violated: Lelong")
    rep.verdict = "consistent" if _settles(seq.distances, tol) else "inconsistent"
    return rep


# ---------------------------------------------------------------------------
# Random sections


def _monomials(space, m: int) -> np.ndarray:
    n = space.n_homog
    ex = [e for e in _iproduct(range(m + 1), repeat=n) if sum(e) == m]
    # P1: order by the power of z1 so rows match binary-form coefficients
    return np.array(sorted(ex, key=lambda e: e[::-1]), dtype=int)


def _kostlan_scale(exps: np.ndarray) -> np.ndarray:
    m = int(exps[0].sum())
    return np.array([math.sqrt(math.factorial(m) / math.prod(math.factorial(int(a)) for a in e))
                     for e in exps])


class SectionPotential(PotentialFunction):
    """``(1/m) log|s(Z)|`` for a degree-``m`` form ``s`` (class ``omega_FS``)."""

    def __init__(self, space, exps, coeffs):
        exps = np.asarray(exps, dtype=int)
        coeffs = np.asarray(coeffs, dtype=complex)
        super().__init__(space, [1.0])
        nz = coeffs != 0
        if not np.any(nz):
            raise UsageError("section vanishes identically")
        self.exps, self.coeffs = exps[nz], coeffs[nz]
        self.m = int(exps[0].sum())

    def eval_log(self, L, A):
        Ll, _ = _log_eval(self.exps, self.coeffs, np.atleast_2d(L), np.atleast_2d(A))
        return Ll / self.m

    def _eval(self, Z):
        v = np.zeros(Z.shape[0], dtype=complex)
        for e, c in zip(self.exps, self.coeffs):
            v += c * np.prod(Z ** e[None, :], axis=1)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(v)) / self.m


def _bank_integrals(mu: EmpiricalMeasure) -> np.ndarray:
    return default_bank().integrals(mu)


def _zero_measures(f: RationalMap, coeffs, n_max: int, lam: float, m: int):
    """Zero measures of ``s o f^n``, ``n = 0..n_max``, and a collapse flag."""
    Z = binary_zeros(coeffs[None, :])
    if not np.all(np.isfinite(Z)):
        return None, False
    out, collapsed = [], False
    for n in range(n_max + 1):
        if n:
            Z = preimages(f, Z)
            if not np.all(np.isfinite(Z)):
                return None, False
        out.append(EmpiricalMeasure(Z, np.full(Z.shape[0], lam ** -n / m)))
    uniq = np.unique(np.round(out[-1].sphere() / 1e-7).astype(np.int64), axis=0).shape[0]
    collapsed = uniq < 0.5 * out[-1].points.shape[0]
    return out, collapsed


def random_section_zeros(f: RationalMap, m: int = 2, n_max: int = 10, trials: int = 50, seed: int = 0,
                         section=None, tol: float = 0.05, oracle_n: int = 12,
                         green: GreenResult | None = None, grid: AtlasGrid | None = None) -> ExperimentReport:
    """Zeros of ``s o f^n`` for Kostlan-random sections of ``O(m)``.

    On P1 the zeros of ``s o f^n`` are the ``n``-fold preimages of the zeros
    of ``s``; they carry weights ``lambda^-n / m`` and are compared with the
    Brolin oracle and with the Green measure in the dual-Lipschitz distance.
    On P2 the potentials ``(1/(m lambda^n)) log|s o F^n|`` are compared with
    the Green potential in L1.

    ``section`` fixes the coefficients (monomial order of the binary or
    ternary form, ``z1``-power increasing on P1) instead of sampling.
    """
    if f.space.kind is Kind.P1xP1:
        raise UsageError("random sections are implemented on P1 and P2")
    if m < 1:
        raise UsageError("m must be positive")
    exps = _monomials(f.space, m)
    if section is not None:
        fixed = np.asarray(section, dtype=complex).ravel()
        if fixed.size != exps.shape[0]:
            raise UsageError(f"section needs {exps.shape[0]} coefficients")
        trials = 1
    lam = pullback_matrix(f).lambda1
    scale = _kostlan_scale(exps)

    def coeffs_for(t):
        if section is not None:
            return fixed
        rng = trial_rng(seed, t)
        a = (rng.standard_normal(exps.shape[0]) + 1j * rng.standard_normal(exps.shape[0])) / math.sqrt(2.0)
        return a * scale

    config = {"m": m, "n_max": n_max, "trials": trials, "tol": tol, "oracle_n": oracle_n,
              "section": None if section is None else [[c.real, c.imag] for c in fixed]}
    rep = ExperimentReport("random_section_zeros", config, seed, map_hash=f.hash())
    g = green if green is not None else green_potential(f, grid=grid)
    if f.space.kind is Kind.P2:
        return _sections_p2(f, g, exps, coeffs_for, trials, n_max, tol, rep)

    bank_brolin = _bank_integrals(brolin_measure_oracle(f, oracle_n, seed=seed))
    bank_green = _bank_integrals(green_measure(g))

    def run(t):
        meas, collapsed = _zero_measures(f, coeffs_for(t), n_max, lam, m)
        if meas is None:
            return None
        I = [_bank_integrals(mu) for mu in meas]
        return (np.array([np.max(np.abs(x - bank_brolin)) for x in I]),
                np.array([np.max(np.abs(x - bank_green)) for x in I]), I[-1], collapsed)

    results = pmap(run, list(range(trials)))
    kept = [r for r in results if r is not None]
    discarded = len(results) - len(kept)
    if discarded:
        rep.notes.append(f"{discarded} degenerate samples discarded")
    if not kept:
        rep.verdict = "inconclusive"
        return rep
    db = np.stack([r[0] for r in kept])
    dg = np.stack([r[1] for r in kept])
    pooled = np.mean(np.stack([r[2] for r in kept]), axis=0)
    collapsed = sum(r[3] for r in kept)
    if collapsed:
        rep.notes.append(f"exceptional section: {collapsed} backward orbits collapse")
    d_bg = float(np.max(np.abs(bank_brolin - bank_green)))
    pooled_b = float(np.max(np.abs(pooled - bank_brolin)))
    pooled_g = float(np.max(np.abs(pooled - bank_green)))
    mean_b, mean_g = db.mean(axis=0), dg.mean(axis=0)
    violations = int(np.sum(db[:, -1] > tol))
    rep.series = {"n": list(range(n_max + 1)), "mean_distance_brolin": mean_b.tolist(),
                  "max_distance_brolin": db.max(axis=0).tolist(), "mean_distance_green": mean_g.tolist()}
    rep.constants = {"zeros_vs_brolin": Constant(float(mean_b[-1]), float(db[:, -1].min()), float(db[:, -1].max())),
                     "zeros_vs_green": Constant(float(mean_g[-1]), float(dg[:, -1].min()), float(dg[:, -1].max())),
                     "brolin_vs_green": d_bg, "pooled_zeros_vs_brolin": pooled_b,
                     "pooled_zeros_vs_green": pooled_g, "violations": violations,
                     "discarded": discarded, "green_iterations": g.iterations}
    ok = mean_b[-1] < tol and violations == 0 and max(d_bg, pooled_b, pooled_g, mean_g[-1]) < tol
    rep.verdict = "consistent" if ok else "inconsistent"
    return rep


def _sections_p2(f, g, exps, coeffs_for, trials, n_max, tol, rep):
    grid = g.green_potential.grid

    def run(t):
        phi = SectionPotential(f.space, exps, coeffs_for(t))
        seq = pullback_sequence(CurrentRep.from_function(phi, grid), f, n_max, green=g)
        return np.asarray(seq.distances)

    D = np.stack(pmap(run, list(range(trials))))
    mean = D.mean(axis=0)
    rep.series = {"n": list(range(n_max + 1)), "mean_l1": mean.tolist(), "max_l1": D.max(axis=0).tolist()}
    rep.constants = {"final_l1": Constant(float(mean[-1]), float(D[:, -1].min()), float(D[:, -1].max())),
                     "violations": int(np.sum(D[:, -1] > tol))}
    rep.verdict = "consistent" if mean[-1] < tol else "inconsistent"
    return rep
