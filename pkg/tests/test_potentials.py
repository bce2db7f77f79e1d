import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import UsageError
from greenlab.geometry import P1, P2, integrate, p1_grid
from greenlab.maps import RationalMap
from greenlab.potentials import (Bump, CurrentRep, GridPotential, capacity, capacity_lp, chi_energy,
                                 disk_mass, envelope_grid, extremal_function, l1_distance, lelong_number,
                                 load_potential, log_point, pullback, relaxation_sweep, save_potential,
                                 smooth_log_point, solve_obstacle, sublevel_mask, theta_masses, v_theta,
                                 zero)

FINE_RADII = 2.0 ** -np.arange(20, 31)


@pytest.fixture(scope="module")
def eg():
    return envelope_grid()


def _modulus(grid):
    a, b = np.abs(grid.homog[:, 0]), np.abs(grid.homog[:, 1])
    return a, b


def _disk(grid, r):
    a, b = _modulus(grid)
    return b <= r * a


# -- pull-backs and L1 --------------------------------------------------------


def test_pullback_of_reference_form(sq, coarse):
    S = CurrentRep.from_function(zero(P1), coarse)
    T = pullback(S, sq)
    assert T.class_coeffs.tolist() == [2.0]
    Z = coarse.homog
    exact = 0.5 * np.log((np.abs(Z[:, 0]) ** 4 + np.abs(Z[:, 1]) ** 4) / np.sum(np.abs(Z) ** 2, 1) ** 2)
    assert np.max(np.abs(T.potential.values - exact)) < 1e-12
    assert T.is_positive()


def test_pullback_by_identity(coarse):
    ident = RationalMap.identity(P1)
    for func in (zero(P1), Bump(P1, [1, 1], 0.3, 0.5), log_point(P1, [1, 2])):
        S = CurrentRep.from_function(func, coarse)
        T = pullback(S, ident)
        ok = ~S.potential.pole
        assert np.max(np.abs(T.potential.values[ok] - S.potential.values[ok])) < 1e-12


def test_pullback_of_point_current_has_mass_two(sq, coarse):
    D = CurrentRep.from_function(log_point(P1, [1, 0]), coarse)
    T = pullback(D, sq)
    assert T.class_coeffs.tolist() == [2.0]
    for ring in (5, 20, 60):
        assert disk_mass(D.potential, ring) == pytest.approx(1.0, abs=1e-8)
        assert disk_mass(T.potential, ring) == pytest.approx(2.0, abs=1e-8)


def test_l1_distance_basics(coarse):
    a = GridPotential.sample(log_point(P1, [1, 0]), coarse, "sup_zero")
    b = GridPotential.sample(zero(P1), coarse, "sup_zero")
    assert l1_distance(a, a) == 0.0
    assert l1_distance(a, b) == pytest.approx(l1_distance(b, a))
    # closed form: int (1/2 log(1+|z|^2) - log|z|) dV_FS = 1/2
    assert l1_distance(a, b) == pytest.approx(0.5, abs=1e-3)


def test_l1_distance_stable_under_refinement():
    vals = []
    for n in (128, 256):
        g = p1_grid(n, n)
        vals.append(l1_distance(GridPotential.sample(log_point(P1, [1, 0]), g, "sup_zero"),
                                GridPotential.sample(zero(P1), g, "sup_zero")))
    assert abs(vals[0] - vals[1]) < 1e-3


def test_l1_normalization_mismatch(coarse):
    a = GridPotential.sample(zero(P1), coarse, "sup_zero")
    b = GridPotential.sample(zero(P1), coarse, "raw")
    with pytest.raises(UsageError):
        l1_distance(a, b)


def test_potential_round_trip(tmp_path, coarse):
    gp = GridPotential.sample(log_point(P1, [1, 0.5]), coarse, "sup_zero")
    save_potential(gp, tmp_path / "phi")
    back = load_potential(tmp_path / "phi")
    assert np.array_equal(back.pole, gp.pole)
    ok = ~gp.pole
    assert np.allclose(back.values[ok], gp.values[ok], rtol=0, atol=1e-15)
    assert back.normalization == gp.normalization


def test_theta_masses_sum_to_class(coarse):
    assert theta_masses(coarse, [1.0]).sum() == pytest.approx(1.0, abs=1e-9)
    assert theta_masses(coarse, [2.0]).sum() == pytest.approx(2.0, abs=1e-9)
    h = Bump(P1, [1, 1], 0.3, 0.5)
    assert theta_masses(coarse, [1.0], h).sum() == pytest.approx(1.0, abs=1e-6)


# -- Lelong numbers -----------------------------------------------------------


@pytest.mark.parametrize("c", [1.0, 2.0, 3.0])
def test_lelong_log_point(c):
    assert lelong_number(log_point(P1, [1, 0], c), [1, 0]) == pytest.approx(c, abs=0.05)


def test_lelong_smooth_approximation_is_zero():
    phi = smooth_log_point(P1, [1, 0], 1e-9)
    assert lelong_number(phi, [1, 0], radii=FINE_RADII) == pytest.approx(0.0, abs=0.05)


def test_lelong_off_the_pole():
    assert lelong_number(log_point(P1, [1, 0]), [1, 0.5]) == pytest.approx(0.0, abs=0.05)


def test_lelong_of_pullback(sq):
    phi = log_point(P1, [1, 0]).pullback(sq)
    assert lelong_number(phi, [1, 0]) == pytest.approx(2.0, abs=0.05)


def test_lelong_bad_schedule():
    with pytest.raises(UsageError):
        lelong_number(log_point(P1, [1, 0]), [1, 0], radii=[0.1])


# -- envelopes ---------------------------------------------------------------


def test_v_theta_semipositive(eg):
    for c in (1.0, 2.0):
        assert np.max(np.abs(v_theta([c], eg).values)) == 0.0


def test_v_theta_rejects_negative_class(eg):
    with pytest.raises(UsageError):
        v_theta([-1.0], eg)


def test_extremal_whole_space(eg):
    r = extremal_function(np.ones(eg.n_nodes, bool), [1.0], eg)
    assert np.max(np.abs(r.potential.values)) == 0.0
    assert r.M == 0.0


def test_extremal_of_disk_matches_closed_form(eg):
    K = _disk(eg, 1.0)
    a, b = _modulus(eg)
    s = np.log(b[1:-1] / a[1:-1])
    rho = np.exp(s[K[1:-1]].max())
    res = extremal_function(K, [1.0], eg)
    # V_K = log|z| + c - 1/2 log(1+|z|^2) off the disk of radius rho, 0 on it
    c = 0.5 * math.log1p(rho**2) - math.log(rho)
    z = np.exp(s)
    exact = np.where(z <= rho, 0.0, np.log(z) + c - 0.5 * np.log1p(z**2))
    assert res.M == pytest.approx(c, abs=1e-9)
    assert np.max(np.abs(res.potential.values[1:-1] - exact)) < 1e-9


def test_extremal_at_two_resolutions():
    Ms = [extremal_function(_disk(g, 1.0), [1.0], g).M for g in (p1_grid(96, 64), p1_grid(192, 64))]
    assert Ms[1] < Ms[0]
    assert abs(Ms[1] - 0.5 * math.log(2)) < abs(Ms[0] - 0.5 * math.log(2))


def test_extremal_monotone_and_blows_up(eg):
    radii = [1.0, 0.3, 0.1, 0.01, 1e-4]
    res = [extremal_function(_disk(eg, r), [1.0], eg) for r in radii]
    Ms = [r.M for r in res]
    assert all(b > a for a, b in zip(Ms, Ms[1:]))
    # K in K' gives V_K >= V_K' nodewise
    for big, small in zip(res, res[1:]):
        assert np.all(small.potential.values >= big.potential.values - 1e-9)


def test_envelope_idempotence(eg):
    mass = theta_masses(eg, [1.0])
    psi = np.where(_disk(eg, 0.5), 0.0, np.inf)
    u, _ = solve_obstacle(eg, mass, psi)
    u2 = relaxation_sweep(eg, mass, psi, u)
    assert np.max(np.abs(u2 - u)) < 1e-9


# -- capacity ----------------------------------------------------------------


def test_capacity_trivial_sets(eg):
    full = capacity(np.ones(eg.n_nodes, bool), [1.0], eg)
    assert full.value == pytest.approx(1.0, abs=1e-9)
    assert capacity(np.zeros(eg.n_nodes, bool), [1.0], eg).value == 0.0


def test_capacity_lp_oracle():
    g = p1_grid(8, 8)
    for r in (0.2, 0.5, 1.0, 3.0):
        B = _disk(g, r)
        assert capacity(B, [1.0], g).value == pytest.approx(capacity_lp(B, [1.0], g), abs=1e-9)


def test_capacity_volume_bounds(eg):
    caps = []
    for r in (2.0, 1.0, 0.3, 0.1, 0.01, 1e-4):
        B = _disk(eg, r)
        c = capacity(B, [1.0], eg)
        M = extremal_function(B, [1.0], eg).M
        # exact comparisons: both sides come from the same grid
        assert 0.0 <= c.value <= c.volume
        assert c.value >= c.volume / max(M, 1.0)
        caps.append(c.value)
    # nested sets: capacity is monotone
    assert all(b <= a for a, b in zip(caps, caps[1:]))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_capacity_monotone_property(r1, r2):
    g = p1_grid(16, 16)
    lo, hi = sorted((r1, r2))
    assert capacity(_disk(g, lo), [1.0], g).value <= capacity(_disk(g, hi), [1.0], g).value + 1e-12


def test_sublevel_mask(eg):
    gp = GridPotential.sample(log_point(P1, [1, 0]), eg, "sup_zero")
    m = sublevel_mask(gp, 3.0)
    assert m[0] and not m[-1]
    assert np.all(gp.values[m] < -3.0)


# -- energy ------------------------------------------------------------------


def test_energy_of_envelope_is_zero(eg):
    gp = GridPotential.sample(zero(P1), eg, "sup_zero")
    assert chi_energy(gp).value == 0.0


def test_energy_of_bounded_potential_stabilizes(eg):
    gp = GridPotential.sample(Bump(P1, [1, 1], 0.3, 0.5, [1.0]), eg, "sup_zero")
    r = chi_energy(gp)
    assert not r.divergent
    assert np.ptp(r.sequence) < 1e-6
    assert r.value == pytest.approx(r.sequence[0], abs=1e-6)


def test_energy_of_log_point(eg):
    gp = GridPotential.sample(log_point(P1, [1, 0]), eg, "sup_zero")
    r = chi_energy(gp)
    # the Dirac mass makes the full energy infinite; the non-pluripolar part
    # is 1/2 int -phi omega = 1/4 in closed form
    assert r.divergent and r.value == math.inf
    assert r.nonpluripolar == pytest.approx(0.25, abs=5e-3)


def test_energy_smooth_log_family_finite(eg):
    for a in (5, 10):
        gp = GridPotential.sample(smooth_log_point(P1, [1, 0], math.exp(-2 * a)), eg, "sup_zero")
        r = chi_energy(gp)
        assert not r.divergent and math.isfinite(r.value)


def test_energy_rejects_surfaces():
    from greenlab.errors import UnsupportedError
    from greenlab.geometry import default_grid

    gp = GridPotential.sample(zero(P2), default_grid(P2), "sup_zero")
    with pytest.raises(UnsupportedError):
        chi_energy(gp)
