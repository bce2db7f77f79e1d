"""Images of points with small Jacobian under a bimeromorphic map."""

from __future__ import annotations

import math

import numpy as np

from ..errors import UsageError
from ..geometry import Kind, sample_fs_uniform
from ..maps import RationalMap, _NumPoly, _poly, compose, gens, indeterminacy_points
from ..parallel import trial_rng
from .measures import _batched_roots
from .report import ExperimentReport

DEFAULT_DELTAS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
EPS_TOL = 0.05


def check_inverse(f: RationalMap, finv: RationalMap) -> None:
    """Raise unless ``f o finv`` is the identity (exact, after cancellation)."""
    if f.space != finv.space:
        raise UsageError("map and inverse act on different spaces")
    h = compose(f, finv)
    g = gens(f.space)
    P = h.components
    for i in range(len(g)):
        for j in range(i + 1, len(g)):
            if not (P[i] * _poly(g[j], *g) - P[j] * _poly(g[i], *g)).is_zero:
                raise UsageError("inverse check failed: f o f^-1 is not the identity")


def near_critical_points(f: RationalMap, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points within ``10^-U(0, 8)`` of the critical set ``{J_h = 0}``.

    Critical points are the roots of ``J_h`` on random complex lines; the
    restriction to a line is recovered exactly by interpolation at
    ``deg J_h + 1`` roots of unity.
    """
    J = _NumPoly.from_poly(f.jacobian_poly())
    D = int(max(sum(e) for e in J.exps))
    k1 = f.space.n_homog
    if D == 0:
        return np.zeros((0, k1), dtype=complex)
    lines = -(-n // D)
    a = rng.standard_normal((lines, k1)) + 1j * rng.standard_normal((lines, k1))
    b = rng.standard_normal((lines, k1)) + 1j * rng.standard_normal((lines, k1))
    nodes = np.exp(2j * np.pi * np.arange(D + 1) / (D + 1))
    vals = np.stack([J(a + s * b) for s in nodes], axis=1)
    # values at roots of unity -> ascending coefficients (discrete Fourier transform)
    coeffs = np.fft.fft(vals, axis=1) / (D + 1)
    ok = np.abs(coeffs[:, -1]) > 1e-12 * np.max(np.abs(coeffs), axis=1)
    roots = _batched_roots(coeffs[ok])
    P = a[ok][:, None, :] + roots[..., None] * b[ok][:, None, :]
    P = f.space.normalize(P.reshape(-1, k1))[:n]
    scale = 10.0 ** -rng.uniform(0.0, 8.0, P.shape[0])
    g = rng.standard_normal(P.shape) + 1j * rng.standard_normal(P.shape)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return f.space.normalize(P + scale[:, None] * g)


def _distance_to(W: np.ndarray, I: np.ndarray) -> np.ndarray:
    if I.shape[0] == 0:
        return np.full(W.shape[0], np.inf)
    I = I / np.linalg.norm(I, axis=1, keepdims=True)
    ip = np.abs(W @ np.conj(I).T) ** 2
    return np.sqrt(np.clip(1.0 - ip, 0.0, None)).min(axis=1)


def jacobian_vs_indeterminacy(f: RationalMap, finv: RationalMap | None = None, deltas=DEFAULT_DELTAS,
                              samples: int = 10_000, seed: int = 0, near_fraction: float = 0.5,
                              eps_tol: float = EPS_TOL) -> ExperimentReport:
    """Chordal distance from ``f(p)`` to the indeterminacy set of ``f^-1``
    over sampled points ``p`` with ``|Jac f|^2(p) < delta``.

    ``eps(delta)`` is the maximum over those points, so it is monotone in
    ``delta`` by construction.  Half of the sample (``near_fraction``) is
    drawn next to the critical set so small thresholds are populated.
    ``finv`` defaults to ``f`` (involutions).
    """
    if f.space.kind is Kind.P1xP1:
        raise UsageError("Jacobian sampling is implemented on projective spaces")
    finv = f if finv is None else finv
    check_inverse(f, finv)
    n_near = int(round(samples * near_fraction))
    P = np.vstack([sample_fs_uniform(f.space, samples - n_near, trial_rng(seed, 0)),
                   near_critical_points(f, n_near, trial_rng(seed, 1))])
    jac = f.jacobian_norm_sq(P, strict=False)
    W, _, ok = f.apply(P)
    keep = ok & np.isfinite(jac)
    jac, W = jac[keep], W[keep]
    I = indeterminacy_points(finv).as_array(f.space.n_homog)
    dist = _distance_to(W, I)
    deltas = sorted((float(d) for d in deltas), reverse=True)
    eps, counts = [], []
    for d in deltas:
        m = jac < d
        counts.append(int(np.sum(m)))
        eps.append(float(np.max(dist[m])) if np.any(m) else 0.0)
    config = {"deltas": deltas, "samples": samples, "near_fraction": near_fraction, "eps_tol": eps_tol,
              "inverse": finv.hash()}
    rep = ExperimentReport("jacobian_vs_indeterminacy", config, seed, map_hash=f.hash())
    rep.series = {"delta": deltas, "epsilon": eps, "count": counts}
    rep.constants = {"samples_used": int(keep.sum()), "indeterminacy_points": int(I.shape[0]),
                     "min_jacobian": float(np.min(jac)) if jac.size else math.nan}
    if counts[-1] == 0:
        rep.notes.append("no sample below the smallest threshold (vacuous)")
        rep.verdict = "consistent"
    elif eps[-1] < eps_tol:
        rep.verdict = "consistent"
    else:
        rep.verdict = "inconclusive"
    return rep
