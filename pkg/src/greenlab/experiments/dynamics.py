"""Volume contraction, uniform integrability and Skoda-type tails."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import logsumexp

from ..cohomology import is_1_regular, pullback_matrix
from ..errors import UnsupportedError, UsageError
from ..geometry import DEFAULT_FLOOR, AtlasGrid, Kind, default_grid, integrate
from ..green import _orbits
from ..maps import RationalMap, _log_eval, _NumPoly, log_normalize, to_log, topological_degree
from ..parallel import trial_rng
from ..potentials.functions import PotentialFunction
from ..potentials.grid import grid_log_coords
from .report import Constant, ExperimentReport


# ---------------------------------------------------------------------------
# Volume contraction


def log_jacobian_factor(f: RationalMap):
    """Callable ``(L, A, norms) -> log |Jac_omega f|^2`` on normalized log data.

    Uses ``|Jac|^2 = |J_h(Z)|^2 / (d^2 |F(Z)|^(2(k+1)))`` for unit ``Z``, with
    ``J_h`` the homogeneous Jacobian determinant.
    """
    if f.space.kind is Kind.P1xP1:
        raise UnsupportedError("log-space Jacobians are implemented on projective spaces")
    J = _NumPoly.from_poly(f.jacobian_poly())
    k, d = f.space.dim, f.degree

    def fn(L, A, norms):
        lj, _ = _log_eval(J.exps, J.coeffs, L, A)
        return 2.0 * lj - 2.0 * math.log(d) - 2.0 * (k + 1) * norms[:, 0]

    return fn


def _ball_volume(k: int, r: float) -> float:
    if math.isinf(r):
        return 1.0
    return (r * r / (1.0 + r * r)) ** k


def sample_ball(space, r: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified FS-uniform sample of ``{|w| < r}`` in the first affine chart.

    The FS measure of the ball of radius ``sqrt(rho)`` is ``(rho/(1+rho))^k``,
    so ``x = rho/(1+rho)`` is drawn as ``X u^(1/k)`` with ``u`` stratified.
    """
    k = space.dim
    X = 1.0 if math.isinf(r) else r * r / (1.0 + r * r)
    u = (np.arange(n) + rng.random(n)) / n
    x = X * u ** (1.0 / k)
    rho = x / (1.0 - x)
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    w = np.sqrt(rho)[:, None] * g
    Z = np.concatenate([np.ones((n, 1)), w], axis=1)
    return space.normalize(Z)


def _image_log_volumes(f, r, n_max, samples, rng, dtop):
    k = f.space.dim
    Z = sample_ball(f.space, r, samples, rng)
    L, A = to_log(Z)
    L, _ = log_normalize(f.space, L)
    jac = log_jacobian_factor(f)
    acc = np.zeros(samples)
    logvol = math.log(_ball_volume(k, r))
    out, se = [logvol], [0.0]
    for step, Lk, Ak, norms, alive in _orbits(f, L, A, n_max):
        if norms is None:
            break
        acc = np.where(alive, acc + jac(Lk, Ak, norms), -np.inf)
        n = step + 1
        lm = logsumexp(acc) - math.log(samples)
        w = np.exp(acc - np.max(acc))
        rel = float(np.std(w) / (np.mean(w) * math.sqrt(samples))) if np.mean(w) > 0 else math.inf
        out.append(logvol + lm - n * math.log(dtop))
        se.append(rel)
    return out, se


def _fit_contraction(y, lam_n, v, logc_grid):
    """Tightest ``(C1, C2)`` with ``y >= C2 lam^n (log C1 + v)`` for all points.

    Points with ``Omega = X`` (``v = 0``) only require ``C1 <= 1`` and are
    otherwise dropped: their volumes are 1 up to Monte Carlo noise.
    """
    full = v == 0
    if np.any(full):
        logc_grid = logc_grid[logc_grid <= 0]
        y, lam_n, v = y[~full], lam_n[~full], v[~full]
    best = None
    for c in logc_grid:
        s = c + v
        if np.any(s > 0) or np.any((s == 0) & (y < 0)):
            continue
        neg = s < 0
        c2 = float(np.max(y[neg] / (lam_n[neg] * s[neg]))) if np.any(neg) else 0.0
        if c2 <= 0:
            continue
        slack = float(np.sum(y / lam_n - c2 * s))
        if best is None or slack < best[2]:
            best = (math.exp(c), c2, slack)
    return best


def volume_contraction(f: RationalMap, radii=(0.3, 0.5, 0.7), n_max: int = 8, samples: int = 4096,
                       seed: int = 0) -> ExperimentReport:
    """Lower bounds for ``Vol(f^n(Omega))`` over balls ``Omega`` and a fit of
    ``log Vol(f^n Omega) >= C2 lambda^n log(C1 Vol Omega)``.

    ``Vol(f^n Omega) >= (1/d_top^n) int_Omega |Jac f^n|^2`` with equality when
    ``f^n`` is exactly ``d_top^n``-to-one over its image (e.g. balls centred at
    a totally invariant point).  The Jacobian product is accumulated in log
    space along orbits, so volumes far below double precision are resolved.
    """
    config = {"radii": [float(r) for r in radii], "n_max": n_max, "samples": samples}
    act = pullback_matrix(f)
    lam = act.lambda1
    if lam <= 1:
        raise UsageError("volume contraction needs lambda_1 > 1")
    if not is_1_regular(f, max(1, min(n_max, 4))):
        raise UsageError("map is not 1-regular")
    if any(r <= 0 for r in radii):
        raise UsageError("degenerate Omega: radius must be positive")
    dtop = topological_degree(f)
    ns, rs, ys, ses, vs = [], [], [], [], []
    for i, r in enumerate(radii):
        rng = trial_rng(seed, i)
        y, se = _image_log_volumes(f, float(r), n_max, samples, rng, dtop)
        for n, (yy, ss) in enumerate(zip(y, se)):
            ns.append(n)
            rs.append(float(r))
            ys.append(yy)
            ses.append(ss)
            vs.append(y[0])
    ns_a, ys_a, vs_a, se_a = map(np.asarray, (ns, ys, vs, ses))
    lam_n = lam ** ns_a.astype(float)
    grid = np.linspace(math.log(0.25), math.log(4.0), 801)
    fit = _fit_contraction(ys_a, lam_n, vs_a, grid)
    report = ExperimentReport("volume_contraction", config, seed, map_hash=f.hash())
    report.series = {"n": ns, "radius": rs, "log_vol_image": ys, "rel_stderr": ses,
                     "log_vol_omega": vs}
    report.notes.append("fitted constants are empirical; they are not the constants of the proof")
    if fit is None:
        report.verdict = "inconsistent"
        return report
    lo = _fit_contraction(ys_a - 3 * se_a, lam_n, vs_a, grid)
    hi = _fit_contraction(ys_a + 3 * se_a, lam_n, vs_a, grid)
    c1s = [x[0] for x in (fit, lo, hi) if x is not None]
    c2s = [x[1] for x in (fit, lo, hi) if x is not None]
    report.constants = {"C1": Constant(fit[0], min(c1s), max(c1s)),
                        "C2": Constant(fit[1], min(c2s), max(c2s)), "lambda1": lam, "d_top": dtop}
    bound = fit[1] * lam_n * (np.log(fit[0]) + vs_a)
    report.series["fitted_bound"] = bound.tolist()
    finite = np.isfinite(ys_a)
    report.verdict = "consistent" if np.all(ys_a[finite] >= bound[finite] - 1e-12) else "inconsistent"
    return report


# ---------------------------------------------------------------------------
# Uniform integrability


def _orbit_values(phi: PotentialFunction, f: RationalMap, grid: AtlasGrid, n_max: int):
    """``lambda^-n phi o f^n`` on the grid for ``n = 0..n_max``."""
    lam = pullback_matrix(f).lambda1
    L0, A0 = grid_log_coords(grid)
    out = []
    for n, L, A, _, alive in _orbits(f, L0, A0, n_max):
        v = np.full(grid.n_nodes, -np.inf)
        if np.any(alive):
            v[alive] = phi.eval_log(L[alive], A[alive])
        out.append(v / lam**n)
    return out


def _tail(grid, h, alpha):
    h = np.maximum(h, DEFAULT_FLOOR)
    return integrate(grid.space, grid, np.where(h < -alpha, -h, 0.0), floor=-math.inf)


def _bound_shape(a, c1, c2):
    return -c1 * a + np.log(np.maximum(a + c2, 1e-300))


def uniform_integrability(phi: PotentialFunction, f: RationalMap, n_max: int = 8, alphas=None,
                          grid: AtlasGrid | None = None, seed: int = 0) -> ExperimentReport:
    """Tails ``int_{h < -alpha} -h dV`` of ``h = lambda^-n phi o f^n``.

    Reports ``sup_n`` per ``alpha`` and a fit of ``exp(-C1 alpha)(alpha + C2)``.
    """
    alphas = np.arange(1.0, 21.0) if alphas is None else np.asarray(alphas, dtype=float)
    grid = default_grid(f.space, 256 if f.space.kind is Kind.P1 else None) if grid is None else grid
    config = {"n_max": n_max, "alphas": alphas.tolist(), "grid": list(grid.key)}
    vals = _orbit_values(phi, f, grid, n_max)
    tails = np.array([[_tail(grid, h, a) for a in alphas] for h in vals])
    sup = tails.max(axis=0)
    rep = ExperimentReport("uniform_integrability", config, seed, map_hash=f.hash())
    rep.series = {"alpha": alphas.tolist(), "sup_tail": sup.tolist()}
    for n in range(tails.shape[0]):
        rep.series[f"tail_n{n}"] = tails[n].tolist()
    pos = sup > 1e-300
    monotone = bool(np.all(np.diff(sup) <= 1e-12 * np.maximum(sup[:-1], 1e-300)))
    if np.count_nonzero(pos) >= 3:
        a, y = alphas[pos], np.log(sup[pos])
        try:
            (c1, c2), cov = curve_fit(lambda a, c1, c2: _bound_shape(a, c1, c2), a, y,
                                      p0=(1.0, 1.0), maxfev=20000)
            pred = _bound_shape(a, c1, c2)
            r2 = 1.0 - np.sum((y - pred) ** 2) / max(np.sum((y - y.mean()) ** 2), 1e-300)
            err = np.sqrt(np.clip(np.diag(cov), 0, None))
            rep.constants = {"C1": Constant(float(c1), float(c1 - 2 * err[0]), float(c1 + 2 * err[0])),
                             "C2": Constant(float(c2), float(c2 - 2 * err[1]), float(c2 + 2 * err[1])),
                             "R2": float(r2)}
        except RuntimeError:
            rep.notes.append("bound fit did not converge")
    small = sup[alphas >= 15.0] if np.any(alphas >= 15.0) else sup[-1:]
    rep.verdict = "consistent" if monotone and np.all(small < 1e-3) else "inconsistent"
    return rep


# ---------------------------------------------------------------------------
# Skoda tail


def skoda_tail(phi: PotentialFunction, t_grid=None, grid: AtlasGrid | None = None, seed: int = 0,
               map_hash: str = "nomap") -> ExperimentReport:
    """Fit ``log Vol(phi < -t) = log A - B t`` over ``t_grid``."""
    t = np.linspace(1.0, 8.0, 15) if t_grid is None else np.asarray(t_grid, dtype=float)
    grid = default_grid(phi.space) if grid is None else grid
    L, A = grid_log_coords(grid)
    v = phi.eval_log(L, A)
    vols = np.array([integrate(grid.space, grid, (v < -tt).astype(float)) for tt in t])
    rep = ExperimentReport("skoda_tail", {"t_grid": t.tolist(), "grid": list(grid.key)}, seed,
                           map_hash=map_hash)
    rep.series = {"t": t.tolist(), "volume": vols.tolist()}
    pos = vols > 0
    if np.count_nonzero(pos) < 3:
        rep.verdict = "inconclusive"
        rep.notes.append("fewer than three nonzero sublevel volumes (bounded potential)")
        return rep
    (slope, icpt), cov = np.polyfit(t[pos], np.log(vols[pos]), 1, cov=True)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    B, logA = -slope, icpt
    rep.constants = {"B": Constant(float(B), float(B - 2 * err[0]), float(B + 2 * err[0])),
                     "A": Constant(float(math.exp(logA)), float(math.exp(logA - 2 * err[1])),
                                   float(math.exp(logA + 2 * err[1])))}
    rep.verdict = "consistent" if B > 0 else "inconsistent"
    return rep
