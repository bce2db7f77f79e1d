"""Named experiments driven by a JSON config.

Each runner takes ``(map or None, config dict, seed)`` and returns an
:class:`ExperimentReport`; the config is echoed into the report.  Potentials
in a config are small dicts, for example::

    {"type": "log_point", "point": [1, 0], "weight": 1}
    {"type": "smooth_log_point", "point": [1, 0], "eps": 1e-6}
    {"type": "bump", "center": [1, 1], "amplitude": 0.3, "width": 0.5, "class": [1]}
    {"type": "zero", "class": [1]}

Complex coordinates may be written as ``[re, im]`` pairs.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import UsageError
from ..geometry import Kind, default_grid, p1_grid, space_from_name
from ..maps import RationalMap, load_map, map_from_json_dict
from ..potentials.functions import Bump, PotentialFunction, log_point, smooth_log_point, zero
from ..potentials.grid import CurrentRep
from .birational import jacobian_vs_indeterminacy
from .capacity import capacity_decay
from .dynamics import skoda_tail, uniform_integrability, volume_contraction
from .equidistribution import equidistribute_current, equidistribute_smooth, random_section_zeros
from .report import ExperimentReport


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise UsageError(f"complex number must be [re, im], got {x!r}")
        return complex(float(x[0]), float(x[1]))
    return complex(x)


def _point(x) -> np.ndarray:
    return np.array([_complex(v) for v in x], dtype=complex)


def potential_from_config(space, desc: dict) -> PotentialFunction:
    """Build a potential from its config dict (see the module docstring)."""
    space = space_from_name(space)
    if not isinstance(desc, dict) or "type" not in desc:
        raise UsageError("potential desc must be a dict with a 'type'")
    kind = desc["type"]
    factor = int(desc.get("factor", 0))
    if kind == "log_point":
        return log_point(space, _point(desc["point"]), float(desc.get("weight", 1.0)), factor)
    if kind == "smooth_log_point":
        return smooth_log_point(space, _point(desc["point"]), float(desc["eps"]),
                                float(desc.get("weight", 1.0)), factor)
    if kind == "bump":
        cls = desc.get("class", space.reference_class.tolist())
        return Bump(space, _point(desc["center"]), float(desc.get("amplitude", 0.3)),
                    float(desc.get("width", 0.5)), class_coeffs=cls)
    if kind == "zero":
        return zero(space, desc.get("class"))
    raise UsageError(f"unknown potential type {kind!r}")


# ---------------------------------------------------------------------------
# Config validation

_POSITIVE = ("n_max", "samples", "trials", "m", "resolution", "tol", "oracle_n", "p", "eps_tol")
_POSITIVE_LISTS = ("radii", "alphas", "t_grid", "deltas")


def _check_positive(config: dict) -> None:
    for k in _POSITIVE:
        if k in config:
            v = config[k]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise UsageError(f"config parameter {k!r} must be a positive number")
    for k in _POSITIVE_LISTS:
        if k in config:
            v = config[k]
            if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and x > 0 for x in v):
                raise UsageError(f"config parameter {k!r} must be a nonempty list of positive numbers")


def _take(config: dict, allowed: set) -> dict:
    extra = set(config) - allowed - {"space"}
    if extra:
        raise UsageError(f"unknown config parameters: {sorted(extra)}")
    _check_positive(config)
    return config


def _need_map(f: RationalMap | None) -> RationalMap:
    if f is None:
        raise UsageError("this experiment needs a map (--map)")
    return f


def _space(f: RationalMap | None, config: dict):
    if f is not None:
        return f.space
    if "space" in config:
        return space_from_name(config["space"])
    return space_from_name("P1")


def _grid(space, config: dict):
    return default_grid(space, config.get("resolution"))


def _hash(f):
    return "nomap" if f is None else f.hash()


# ---------------------------------------------------------------------------
# Runners


def _volume_contraction(f, config, seed):
    c = _take(config, {"radii", "n_max", "samples"})
    kw = {k: c[k] for k in ("n_max", "samples") if k in c}
    if "radii" in c:
        kw["radii"] = tuple(float(r) for r in c["radii"])
    return volume_contraction(_need_map(f), seed=seed, **kw)


def _uniform_integrability(f, config, seed):
    c = _take(config, {"phi", "n_max", "alphas", "resolution"})
    f = _need_map(f)
    phi = potential_from_config(f.space, c.get("phi", {"type": "log_point", "point": [1, 0]}))
    grid = _grid(f.space, c) if "resolution" in c else None
    return uniform_integrability(phi, f, int(c.get("n_max", 8)), c.get("alphas"), grid, seed)


def _skoda_tail(f, config, seed):
    c = _take(config, {"phi", "t_grid", "resolution"})
    space = _space(f, c)
    phi = potential_from_config(space, c.get("phi", {"type": "log_point", "point": [1, 0]}))
    return skoda_tail(phi, c.get("t_grid"), _grid(space, c), seed, _hash(f))


def _equidistribute_smooth(f, config, seed):
    c = _take(config, {"h", "n_max", "tol", "resolution", "probes"})
    f = _need_map(f)
    h = potential_from_config(f.space, c["h"]) if "h" in c else None
    probes = np.array([_point(p) for p in c["probes"]]) if "probes" in c else None
    return equidistribute_smooth(f, h, int(c.get("n_max", 12)), float(c.get("tol", 5e-4)),
                                 _grid(f.space, c), probes=probes, seed=seed)


def _equidistribute_current(f, config, seed):
    c = _take(config, {"current", "n_max", "tol", "resolution"})
    f = _need_map(f)
    phi = potential_from_config(f.space, c.get("current", {"type": "log_point", "point": [1, 0]}))
    S = CurrentRep.from_function(phi, _grid(f.space, c))
    return equidistribute_current(S, f, int(c.get("n_max", 16)), float(c.get("tol", 5e-4)), seed=seed)


def _random_section_zeros(f, config, seed):
    c = _take(config, {"m", "n_max", "trials", "section", "tol", "oracle_n", "resolution"})
    f = _need_map(f)
    section = [_complex(x) for x in c["section"]] if "section" in c else None
    return random_section_zeros(f, int(c.get("m", 2)), int(c.get("n_max", 10)), int(c.get("trials", 50)),
                                seed, section, float(c.get("tol", 0.05)), int(c.get("oracle_n", 12)),
                                grid=_grid(f.space, c))


def _capacity_decay(f, config, seed):
    c = _take(config, {"phi", "class", "t_grid", "p", "resolution"})
    space = _space(f, c)
    phi = potential_from_config(space, c.get("phi", {"type": "log_point", "point": [1, 0]}))
    grid = p1_grid(int(c["resolution"]), int(c["resolution"])) if "resolution" in c else None
    return capacity_decay(phi, c.get("class"), c.get("t_grid"), grid, float(c.get("p", 1.0)), seed, _hash(f))


def _jacobian_vs_indeterminacy(f, config, seed):
    c = _take(config, {"inverse", "deltas", "samples", "near_fraction"})
    f = _need_map(f)
    inv = c.get("inverse")
    if isinstance(inv, dict):
        inv = map_from_json_dict(inv)
    elif isinstance(inv, str):
        inv = load_map(inv)
    kw = {k: c[k] for k in ("samples", "near_fraction") if k in c}
    if "deltas" in c:
        kw["deltas"] = tuple(float(d) for d in c["deltas"])
    return jacobian_vs_indeterminacy(f, inv, seed=seed, **kw)


REGISTRY: dict[str, Callable[[RationalMap | None, dict, int], ExperimentReport]] = {
    "volume_contraction": _volume_contraction,
    "uniform_integrability": _uniform_integrability,
    "skoda_tail": _skoda_tail,
    "equidistribute_smooth": _equidistribute_smooth,
    "equidistribute_current": _equidistribute_current,
    "random_section_zeros": _random_section_zeros,
    "capacity_decay": _capacity_decay,
    "jacobian_vs_indeterminacy": _jacobian_vs_indeterminacy,
}


def run_experiment(name: str, f: RationalMap | None, config: dict | None = None, seed: int = 0) -> ExperimentReport:
    """Run a registered experiment; the config is echoed verbatim into the report."""
    if name not in REGISTRY:
        raise UsageError(f"unknown experiment {name!r}; known: {', '.join(sorted(REGISTRY))}")
    config = {} if config is None else dict(config)
    rep = REGISTRY[name](f, dict(config), int(seed))
    rep.config = {"input": config, "resolved": rep.config}
    return rep
