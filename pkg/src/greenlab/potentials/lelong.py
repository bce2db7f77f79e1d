"""Lelong numbers as slopes of maxima on small spheres."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError, UsageError
from ..geometry import space_from_name
from .functions import PotentialFunction
from .grid import GridPotential

DEFAULT_RADII = tuple(2.0 ** -j for j in range(4, 13))
CIRCLE_POINTS = 64
SPHERE_POINTS = 256


def _directions(dim: int) -> np.ndarray:
    if dim == 1:
        t = np.arange(CIRCLE_POINTS) * (2.0 * math.pi / CIRCLE_POINTS)
        return np.exp(1j * t)[:, None]
    rng = np.random.default_rng(12345)
    g = rng.standard_normal((SPHERE_POINTS, dim)) + 1j * rng.standard_normal((SPHERE_POINTS, dim))
    axes = np.eye(dim, dtype=complex)
    d = np.vstack([axes, g / np.linalg.norm(g, axis=1, keepdims=True)])
    return d


def _evaluator(phi):
    if isinstance(phi, GridPotential):
        return phi.space, phi.evaluate
    if isinstance(phi, PotentialFunction):
        return phi.space, phi
    raise UsageError("expected a PotentialFunction or GridPotential")


def lelong_number(phi, x, radii=DEFAULT_RADII, space=None) -> float:
    """Least-squares slope of ``r -> max_{|w - w_x| = r} phi`` against ``log r``.

    ``x`` is a point in homogeneous coordinates; spheres are taken in the
    affine chart where ``x`` has its largest coordinate.  The result is
    clamped below at zero.
    """
    sp_, ev = _evaluator(phi)
    if space is not None and space_from_name(space) != sp_:
        raise UsageError("point and potential live on different spaces")
    X = sp_.normalize(np.atleast_2d(np.asarray(x, dtype=complex)))
    chart = sp_.chart(int(sp_.owning_chart(X)[0]))
    wx = chart.to_chart(X)[0]
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size < 2 or np.any(r <= 0):
        raise UsageError("radii schedule needs at least two positive radii")
    if np.linalg.norm(wx) + r.max() > 2.0:
        raise DomainError("radii schedule leaves the chart")
    dirs = _directions(sp_.dim)
    pts = wx[None, None, :] + r[:, None, None] * dirs[None, :, :]
    vals = np.asarray(ev(chart.from_chart(pts.reshape(-1, sp_.dim))), dtype=float)
    m = vals.reshape(r.size, -1).max(axis=1)
    if not np.all(np.isfinite(m)):
        raise UsageError("potential is -inf on a whole sphere of the schedule")
    slope = np.polyfit(np.log(r), m, 1)[0]
    return max(float(slope), 0.0)
