import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import DomainError, UsageError
from greenlab.geometry import (P1, P2, P1xP1, chordal_distance, default_grid, fs_density, fs_potential,
                               integrate, p1_grid, sample_fs_uniform, space_from_name, volume_of_set)

SPACES = [P1, P2, P1xP1]


def test_space_metadata():
    assert (P1.dim, P1.n_homog, len(P1.charts)) == (1, 2, 2)
    assert (P2.dim, P2.n_homog, len(P2.charts)) == (2, 3, 3)
    assert (P1xP1.dim, P1xP1.n_homog, len(P1xP1.charts)) == (2, 4, 4)
    assert P1xP1.h11_rank == 2
    for sp in SPACES:
        assert sp.volume_of_class(sp.reference_class) == pytest.approx(1.0)
    assert space_from_name("P2") is P2 or space_from_name("P2") == P2


def test_fs_potential_examples():
    assert fs_potential(P1, 0, 0.0) == 0.0
    assert fs_potential(P1, 0, 1.0) == pytest.approx(0.5 * math.log(2), abs=1e-12)
    assert fs_potential(P1, 0, 1.0) == pytest.approx(0.34657, abs=1e-5)
    for R in (1e3, 1e4):
        assert fs_potential(P1, 0, R) - math.log(R) == pytest.approx(0.0, abs=1e-6)


def test_fs_potential_domain_error():
    with pytest.raises(DomainError):
        fs_potential(P1, 0, np.inf)


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind.value)
def test_quadrature_mass(sp):
    g = default_grid(sp)
    assert abs(g.weights.sum() - 1.0) < 1e-3
    assert integrate(sp, g, np.ones(g.n_nodes)) == pytest.approx(1.0, abs=1e-3)


def test_quadrature_converges_under_refinement():
    errs = [abs(p1_grid(n, n).weights.sum() - 1.0) for n in (16, 64, 256)]
    assert errs[-1] <= errs[0] + 1e-15
    assert errs[-1] < 1e-10


def test_integrate_unit_disk():
    g = p1_grid()
    z = g.homog[:, 1] / np.where(g.homog[:, 0] == 0, 1, g.homog[:, 0])
    ind = ((np.abs(z) < 1) & (g.homog[:, 0] != 0)).astype(float)
    assert integrate(P1, g, ind) == pytest.approx(0.5, abs=1e-3)


def test_integrate_fs_potential_stable_under_refinement():
    vals = []
    for n in (128, 256, 512):
        g = p1_grid(n, n)
        r = np.abs(g.homog[:, 1]) / np.maximum(np.abs(g.homog[:, 0]), 1e-300)
        vals.append(integrate(P1, g, 0.5 * np.log1p(np.minimum(r, 1e150) ** 2)))
    # closed form: int 1/2 log(1+|z|^2) dV_FS = 1/2
    assert abs(vals[-1] - vals[-2]) < 1e-3
    assert vals[-1] == pytest.approx(0.5, abs=1e-3)


def test_integrate_rejects_mismatched_grid():
    with pytest.raises(UsageError):
        integrate(P2, p1_grid(16, 16), np.ones(p1_grid(16, 16).n_nodes))


def test_chart_consistency_of_global_field():
    # |z0|^2/|Z|^2 is global; its integral is 1/2 by symmetry on P1 and 1/3 on P2
    for sp, exact in ((P1, 0.5), (P2, 1.0 / 3.0)):
        g = default_grid(sp)
        Z = g.homog
        field = np.abs(Z[:, 0]) ** 2 / np.sum(np.abs(Z) ** 2, axis=1)
        assert integrate(sp, g, field) == pytest.approx(exact, rel=1e-3)


def test_ddc_normalization_of_fs_potential():
    from greenlab.potentials import ddc_masses

    g = p1_grid(256, 256)
    r = np.abs(g.homog[:, 1]) / np.maximum(np.abs(g.homog[:, 0]), 1e-300)
    psi = 0.5 * np.log1p(np.minimum(r, 1e150) ** 2)
    mass = ddc_masses(g, psi)
    inner = g.chart_ids == 0
    # dd^c psi = omega on the chart owning |z| <= 1, whose omega-mass is 1/2
    assert mass[inner].sum() == pytest.approx(0.5, abs=1e-2)


def test_volume_of_set_examples():
    whole = volume_of_set(P1, lambda Z: np.ones(len(Z), bool), 20_000, seed=1)
    assert abs(whole.value - 1.0) <= 3 * whole.stderr + 1e-12
    disk = volume_of_set(P1, lambda Z: np.abs(Z[:, 1]) < np.abs(Z[:, 0]), 20_000, seed=1)
    assert abs(disk.value - 0.5) <= 3 * disk.stderr
    empty = volume_of_set(P2, lambda Z: np.zeros(len(Z), bool), 1000, seed=1)
    assert empty.value == 0.0


def test_volume_of_set_zero_budget():
    with pytest.raises(UsageError):
        volume_of_set(P1, lambda Z: np.ones(len(Z), bool), 0)


def test_volume_of_set_reproducible():
    pred = lambda Z: np.abs(Z[:, 1]) < 0.5 * np.abs(Z[:, 0])
    a = volume_of_set(P1, pred, 5000, seed=7)
    b = volume_of_set(P1, pred, 5000, seed=7)
    assert a.value == b.value
    # closed form r^2/(1+r^2) at r=1/2
    assert abs(a.value - 0.2) <= 4 * a.stderr


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind.value)
def test_fs_uniform_samples_are_normalized(sp):
    Z = sample_fs_uniform(sp, 100, np.random.default_rng(0))
    assert Z.shape == (100, sp.n_homog)
    for sl in sp.factor_slices:
        assert np.allclose(np.linalg.norm(Z[:, sl], axis=1), 1.0)


def test_chordal_distance_basic():
    a = np.array([[1, 0]], complex)
    b = np.array([[0, 1]], complex)
    assert chordal_distance(P1, a, a)[0] == pytest.approx(0.0, abs=1e-12)
    assert chordal_distance(P1, a, b)[0] == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_chart_transition_round_trip(a, b):
    c0, c1 = P2.charts[0], P2.charts[1]
    w = np.array([[a, b]])
    if abs(a) < 1e-6:
        return
    back = c1.transition(c0.transition(w, c1), c0)
    assert np.allclose(back, w, rtol=1e-10, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_fs_potential_transforms_like_a_potential(z):
    # psi_0 - psi_1 = log|z| on the overlap of the two P1 charts
    if abs(z) < 1e-6:
        return
    d = fs_potential(P1, 0, z) - fs_potential(P1, 1, 1 / z)
    assert d == pytest.approx(math.log(abs(z)), abs=1e-9)


def test_fs_density_positive():
    w = np.array([[0.0], [1.0], [10.0]], complex)
    d = fs_density(P1, w)
    assert np.all(d > 0)
    assert d[0] > d[1] > d[2]
