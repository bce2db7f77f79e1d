import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import IndeterminacyError, ResourceError, UsageError
from greenlab.geometry import P1, P2, p1_grid, sample_fs_uniform
from greenlab.maps import (RationalMap, compose, evaluate, indeterminacy_points, jacobian_norm_sq,
                           load_map, log_jacobian_qpsh_split, map_from_json_dict, p2_power,
                           quadratic_polynomial, raw_composition_degree, save_map, topological_degree)


def proj_close(a, b, tol=1e-10):
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    a = a / a[np.argmax(np.abs(a))]
    b = b / b[np.argmax(np.abs(b))]
    return np.max(np.abs(a - b)) < tol


# -- evaluation -------------------------------------------------------------


def test_evaluate_examples(sq, sigma):
    assert proj_close(evaluate(sq, [1, 2]), [1, 4])
    assert np.allclose(evaluate(sq, [1, 2]), [0.25, 1.0])
    assert proj_close(evaluate(sigma, [1, 1, 0]), [0, 0, 1])


def test_evaluate_indeterminacy(sigma):
    with pytest.raises(IndeterminacyError):
        evaluate(sigma, [1, 0, 0])


def test_cremona_value_near_perturbed_points(sigma):
    # continuity oracle: points close to (1:1:0) off the triangle map close to (0:0:1)
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = np.array([1, 1, 0], complex) + 1e-7 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
        w = evaluate(sigma, p)
        assert np.max(np.abs(w[:2])) / np.abs(w[2]) < 1e-5


# -- composition ------------------------------------------------------------


def test_compose_cremona_is_identity(sigma):
    h = compose(sigma, sigma)
    assert h.degree == 1
    assert raw_composition_degree(sigma, sigma) == 4
    assert h == RationalMap.identity(P2)


def test_compose_squaring(sq):
    h = compose(sq, sq)
    assert h.degree == 4
    assert h == RationalMap("P1", ["z0**4", "z1**4"])


def test_compose_with_identity(basilica, sigma):
    for f in (basilica, sigma):
        assert compose(f, RationalMap.identity(f.space)) == f
        assert compose(RationalMap.identity(f.space), f) == f


def test_compose_resource_cap(basilica):
    with pytest.raises(ResourceError):
        basilica.iterate(8, monomial_cap=5)


@pytest.mark.parametrize("pair", ["basilica", "sigma", "p2sq", "mixed"])
def test_composition_degree_bound(pair, basilica, sigma, p2sq):
    f, g = {"basilica": (basilica, basilica), "sigma": (sigma, sigma), "p2sq": (p2sq, p2sq),
            "mixed": (sigma, p2sq)}[pair]
    h = compose(f, g)
    raw = raw_composition_degree(f, g)
    assert raw == f.degree * g.degree
    assert h.degree <= raw
    # equality iff nothing cancelled
    cancelled = pair in ("sigma",)
    assert (h.degree < raw) == cancelled


def _generic_p2_quadratic():
    return RationalMap("P2", ["z0**2 + z1*z2", "z1**2 - 2*z0*z2 + z2**2", "z2**2 + z0*z1 + 3*z0**2"])


def _avoid(f, Z):
    W, _, ok = f.apply(Z)
    return Z[ok]


@pytest.mark.parametrize("which", ["basilica", "p2", "sigma"])
def test_evaluate_composition(which, basilica, sigma):
    f = {"basilica": basilica, "p2": _generic_p2_quadratic(), "sigma": sigma}[which]
    g = _generic_p2_quadratic() if which == "sigma" else f
    h = compose(f, g)
    Z = sample_fs_uniform(f.space, 100, np.random.default_rng(11))
    for p in Z:
        a = evaluate(h, p)
        b = evaluate(f, evaluate(g, p))
        assert proj_close(a, b, 1e-10)


@pytest.mark.parametrize("which", ["basilica", "p2"])
def test_jacobian_chain_rule(which, basilica):
    f = basilica if which == "basilica" else _generic_p2_quadratic()
    f2 = compose(f, f)
    Z = sample_fs_uniform(f.space, 100, np.random.default_rng(5))
    lhs = np.log(jacobian_norm_sq(f2, Z))
    W, _, _ = f.apply(Z)
    rhs = np.log(jacobian_norm_sq(f, Z)) + np.log(jacobian_norm_sq(f, W))
    # |Jac|^2 so the chain rule holds for twice the log
    assert np.max(np.abs(lhs - rhs)) < 2e-8


# -- indeterminacy and degrees ----------------------------------------------


def test_indeterminacy_examples(sq, sigma, p2sq):
    assert indeterminacy_points(sq).as_array(2).shape[0] == 0
    assert indeterminacy_points(p2sq).as_array(3).shape[0] == 0
    pts = indeterminacy_points(sigma).as_array(3)
    assert pts.shape[0] == 3
    for e in np.eye(3):
        assert any(proj_close(p, e) for p in pts)


def test_indeterminacy_points_kill_all_components(sigma):
    f = compose(sigma, _generic_p2_quadratic())
    pts = indeterminacy_points(f).as_array(3)
    for p in pts:
        p = p / np.max(np.abs(p))
        vals = [complex(c.as_expr().subs(dict(zip(c.gens, p)))) for c in f.components]
        assert max(abs(v) for v in vals) < 1e-10


def test_topological_degree_examples(sq, p2sq, mono21):
    assert topological_degree(sq) == 2
    assert topological_degree(p2sq) == 4
    assert topological_degree(mono21) == 1


@pytest.mark.parametrize("n", [1, 2, 3])
def test_topological_degree_of_iterates(n, basilica):
    assert topological_degree(basilica.iterate(n)) == 2**n
    if n <= 2:
        assert topological_degree(_generic_p2_quadratic().iterate(n)) == 4**n


# -- Jacobian ---------------------------------------------------------------


def test_jacobian_norm_examples(sq):
    assert jacobian_norm_sq(sq, [1, 1]) == pytest.approx(4.0, rel=1e-12)
    assert jacobian_norm_sq(sq, [1, 0]) == 0.0
    ident = RationalMap.identity(P2)
    Z = sample_fs_uniform(P2, 10, np.random.default_rng(0))
    assert np.allclose(jacobian_norm_sq(ident, Z), 1.0)


def test_jacobian_norm_matches_chart_formula(sq):
    z = 0.3 + 0.7j
    exact = abs(2 * z) ** 2 * ((1 + abs(z) ** 2) / (1 + abs(z) ** 4)) ** 2
    assert jacobian_norm_sq(sq, [1, z]) == pytest.approx(exact, rel=1e-12)


def test_jacobian_volume_ratio_oracle(sq):
    # FS area of f(D(z, r)) / FS area of D(z, r) -> |Jac|^2 as r -> 0
    z, r = 0.5 + 0.2j, 1e-4
    fs_area = lambda c, rad: rad**2 / (1 + abs(c) ** 2) ** 2
    ratio = fs_area(z**2, abs(2 * z) * r) / fs_area(z, r)
    assert jacobian_norm_sq(sq, [1, z]) == pytest.approx(ratio, rel=1e-3)


def test_jacobian_at_indeterminacy(sigma):
    with pytest.raises(IndeterminacyError):
        jacobian_norm_sq(sigma, [0, 0, 1])


def test_qpsh_split_examples(sq):
    g = p1_grid(64, 64)
    u1, u2 = log_jacobian_qpsh_split(sq, g)
    z = g.homog[:, 1] / np.where(g.homog[:, 0] == 0, 1, g.homog[:, 0])
    i = np.argmin(np.abs(z - 1) + (g.homog[:, 0] == 0))
    d = u1.values - u2.values
    expected = 0.5 * np.log(jacobian_norm_sq(sq, g.homog[i]))
    assert d[i] == pytest.approx(expected, abs=1e-12)
    ident = RationalMap.identity(P1)
    v1, v2 = log_jacobian_qpsh_split(ident, g)
    assert np.max(np.abs(v1.values - v2.values)) < 1e-12


def test_qpsh_split_cremona_vanishing_locus(sigma):
    from greenlab.geometry import default_grid

    g = default_grid(P2)
    u1, u2 = log_jacobian_qpsh_split(sigma, g)
    Z = g.homog
    d = u1.values - u2.values
    jac = sigma.jacobian_norm_sq(Z, strict=False)
    ok = np.isfinite(d)
    assert np.allclose(d[ok], 0.5 * np.log(jac[ok]), atol=1e-9)
    # det of the affine Jacobian is -2xyz: |Jac|^2 -> 0 along the triangle
    vals = [jacobian_norm_sq(sigma, [1, 0.7, t]) for t in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-10


# -- serialization ----------------------------------------------------------


def test_map_json_round_trip(tmp_path, sigma, mono21, basilica):
    for f in (sigma, mono21, basilica):
        p = tmp_path / f"{f.hash()}.json"
        save_map(f, p)
        assert load_map(p) == f
        assert load_map(p).hash() == f.hash()


def test_map_json_validation():
    good = {"space": "P1", "components": [[{"exponents": [2, 0], "coeff_re_num": 1, "coeff_re_den": 1,
                                             "coeff_im_num": 0, "coeff_im_den": 1}],
                                           [{"exponents": [0, 2], "coeff_re_num": 1, "coeff_re_den": 1,
                                             "coeff_im_num": 0, "coeff_im_den": 1}]]}
    assert map_from_json_dict(good).degree == 2
    bad = json.loads(json.dumps(good))
    bad["components"][1][0]["exponents"] = [0, 3]
    with pytest.raises(UsageError):
        map_from_json_dict(bad)
    with pytest.raises(UsageError):
        map_from_json_dict({"space": "P3", "components": []})


def test_gcd_reduction_on_load():
    f = RationalMap("P1", ["z0**3", "z0*z1**2"])
    assert f.degree == 2
    assert f == RationalMap("P1", ["z0**2", "z1**2"])


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(max_magnitude=4, allow_nan=False, allow_infinity=False))
def test_quadratic_family_degree_bound(c):
    c = complex(round(c.real, 2), round(c.imag, 2))
    f = quadratic_polynomial(c)
    h = compose(f, f)
    assert h.degree == 4 == f.degree**2
