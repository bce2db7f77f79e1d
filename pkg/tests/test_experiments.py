import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab import parallel
from greenlab.errors import UsageError
from greenlab.experiments import (REGISTRY, Constant, EmpiricalMeasure, ExperimentReport, SectionPotential,
                                  arc_measure, binary_zeros, brolin_measure_oracle, capacity_decay,
                                  check_inverse, default_bank, dual_lipschitz, equidistribute_current,
                                  equidistribute_smooth, green_measure, iterated_preimages,
                                  jacobian_vs_indeterminacy, potential_from_config, random_section_zeros,
                                  run_experiment, skoda_tail, strip_metadata, uniform_integrability,
                                  volume_contraction)
from greenlab.geometry import P1, P2, P1xP1, default_grid, p1_grid
from greenlab.green import green_potential
from greenlab.maps import RationalMap, compose
from greenlab.potentials import Bump, CurrentRep, GridPotential, log_point, smooth_log_point, zero

GOLD = (math.sqrt(5) - 1) / 2


def circle_probes(n=64):
    k = np.arange(n)
    return np.stack([np.ones(n), np.exp(2j * np.pi * ((k * GOLD) % 1))], axis=1)


def bump(space=P1, center=(1, 1)):
    return Bump(space, list(center), 0.3, 0.5, space.reference_class)


@pytest.fixture(scope="module")
def green_coarse(sq, coarse):
    return green_potential(sq, grid=coarse)


@pytest.fixture(scope="module")
def green_basilica(basilica, coarse):
    return green_potential(basilica, grid=coarse)


# -- volume contraction -------------------------------------------------------


def test_volume_contraction_squaring(sq):
    rep = volume_contraction(sq)
    assert rep.verdict == "consistent"
    assert 0.5 <= rep.constants["C1"].value <= 2.0
    assert 0.8 <= rep.constants["C2"].value <= 1.2


def test_volume_contraction_closed_form_images(sq):
    rep = volume_contraction(sq, radii=(0.5,), n_max=4, samples=2048)
    # f^n of {|z|<r} is {|z|<r^(2^n)} with FS area r^(2^(n+1)) / (1 + r^(2^(n+1)))
    for n, y, se in zip(rep.series["n"], rep.series["log_vol_image"], rep.series["rel_stderr"]):
        R = 0.5 ** (2**n)
        exact = math.log(R**2 / (1 + R**2))
        assert abs(y - exact) < 5 * max(se, 1e-3)


def test_volume_contraction_n0_trivial(sq):
    rep = volume_contraction(sq, n_max=0)
    assert rep.verdict == "consistent"


def test_volume_contraction_degenerate_omega(sq):
    with pytest.raises(UsageError):
        volume_contraction(sq, radii=(0.0,))


def test_volume_contraction_p2(p2sq):
    assert volume_contraction(p2sq, n_max=4, samples=2048).verdict != "inconsistent"


# -- uniform integrability and Skoda tails ------------------------------------


def test_uniform_integrability_log_point(sq):
    rep = uniform_integrability(log_point(P1, [1, 0]), sq)
    assert rep.verdict == "consistent"
    sup = np.array(rep.series["sup_tail"])
    alphas = np.array(rep.series["alpha"])
    assert np.all(np.diff(sup) <= 0)
    assert np.all(sup[alphas >= 15] < 1e-3)
    assert rep.constants["R2"] > 0.95
    # 2^-n phi o f^n and phi share the log|z| singularity and differ by a
    # bounded term, so deep tails coincide for every n
    t0, t5 = np.array(rep.series["tail_n0"]), np.array(rep.series["tail_n5"])
    deep = alphas >= 5
    assert np.allclose(t0[deep], t5[deep], rtol=1e-3, atol=1e-15)


def test_uniform_integrability_off_fixed_point(sq):
    rep = uniform_integrability(log_point(P1, [1, 2]), sq)
    assert rep.verdict == "consistent"


def test_uniform_integrability_bounded(sq):
    rep = uniform_integrability(bump(), sq, alphas=[1.0, 2.0, 5.0])
    assert max(rep.series["sup_tail"]) == 0.0


@pytest.mark.parametrize("weight,B", [(1.0, 2.0), (2.0, 1.0)])
def test_skoda_exponent(weight, B):
    rep = skoda_tail(log_point(P1, [1, 0], weight))
    assert rep.verdict == "consistent"
    assert abs(rep.constants["B"].value - B) < 0.1


def test_skoda_bounded_is_inconclusive():
    rep = skoda_tail(bump())
    assert rep.verdict == "inconclusive"


# -- smooth forms and currents ------------------------------------------------


def test_equidistribute_smooth_bump(sq, coarse, green_coarse):
    rep = equidistribute_smooth(sq, bump(), grid=coarse, green=green_coarse, probes=circle_probes())
    assert rep.verdict == "consistent"
    assert rep.constants["final_distance"] < 5e-4
    assert rep.constants["final_gap"] < 5e-4
    assert abs(rep.constants["probe_rate"] - 0.5) < 0.05
    # gap to the reference pull-back is 2^-n |bump o f^n| <= 2^-n sup|bump|
    for n, g in enumerate(rep.series["probe_gap"]):
        assert g <= 0.3 / 2**n + 1e-15


def test_equidistribute_smooth_reference_is_green_increment(sq, coarse, green_coarse):
    rep = equidistribute_smooth(sq, None, grid=coarse, green=green_coarse)
    assert rep.verdict == "consistent"
    assert rep.series["gap"] == [0.0] * len(rep.series["gap"])


def test_equidistribute_smooth_class_drift(mono21):
    h = zero(P1xP1, [1.0, 0.0])
    rep = equidistribute_smooth(mono21, h, n_max=6)
    drift = rep.series["class_drift"]
    assert drift[0] > 0.1
    assert drift[-1] < drift[0] * 0.01
    assert rep.constants["projection"] > 0


def test_equidistribute_smooth_class_mismatch(sq):
    with pytest.raises(UsageError):
        equidistribute_smooth(sq, Bump(P1, [1, 1], 0.3, 0.5), grid=p1_grid(32, 32))


def test_equidistribute_current_point_mass(sq, coarse, green_coarse):
    S = CurrentRep.from_function(log_point(P1, [1, 0]), coarse)
    rep = equidistribute_current(S, sq, n_max=12, green=green_coarse)
    assert rep.verdict == "inconsistent"
    assert min(rep.series["distance"]) > 0.1
    assert any("hypothesis violated: Lelong" in n for n in rep.notes)


def test_equidistribute_current_zero_lelong(sq, coarse, green_coarse):
    S = CurrentRep.from_function(smooth_log_point(P1, [1, 0], 1e-6), coarse)
    rep = equidistribute_current(S, sq, green=green_coarse)
    assert rep.verdict == "consistent"
    assert rep.constants["lelong_max"] < 0.05


def test_equidistribute_current_green_itself(sq, green_coarse):
    gp = green_coarse.green_potential
    rep = equidistribute_current(CurrentRep(gp.class_coeffs, gp), sq, n_max=4, green=green_coarse)
    assert max(rep.series["distance"]) < 1e-12


# -- measures and zeros of sections -------------------------------------------


def test_binary_zeros():
    # z0^2 - z1^2 has zeros (1:1) and (1:-1); z0 * z1 has (1:0) and (0:1)
    P = np.array([[1, 0, -1], [0, 1, 0]], complex)
    R = binary_zeros(P).reshape(2, 2, 2)
    ratios0 = sorted(np.real(R[0][:, 1] / R[0][:, 0]))
    assert np.allclose(ratios0, [-1, 1])
    assert np.allclose(sorted(np.abs(R[1][:, 0])), [0, 1])
    assert np.all(np.isfinite(R))
    assert np.all(np.isnan(binary_zeros(np.zeros((1, 3), complex))))


def test_brolin_roots_of_unity(sq):
    mu = brolin_measure_oracle(sq, 12, start=[1, 1])
    assert mu.points.shape[0] == 4096
    assert np.allclose(np.abs(mu.points[:, 1] / mu.points[:, 0]), 1.0)
    assert dual_lipschitz(mu, arc_measure()) < 0.02


def test_brolin_exceptional_start(sq):
    with pytest.raises(UsageError):
        brolin_measure_oracle(sq, 12, start=[1, 0])


def test_brolin_basilica_self_consistency(basilica):
    assert dual_lipschitz(brolin_measure_oracle(basilica, 12), brolin_measure_oracle(basilica, 13)) < 0.03


def test_green_measure_matches_brolin(sq, green_coarse):
    mu = green_measure(green_coarse)
    assert mu.total_mass == pytest.approx(1.0, abs=1e-9)
    assert dual_lipschitz(mu, arc_measure()) < 0.05


def test_iterated_preimages_count(basilica):
    pts = iterated_preimages(basilica, [1, 0.3], 6)
    assert pts.shape[0] == 64


_mass_points = st.lists(st.complex_numbers(max_magnitude=50, allow_nan=False, allow_infinity=False),
                        min_size=1, max_size=12)


@settings(max_examples=40, deadline=None)
@given(_mass_points, _mass_points, _mass_points)
def test_dual_lipschitz_is_a_pseudometric(a, b, c):
    mu, nu, xi = (EmpiricalMeasure.from_affine(np.array(x)) for x in (a, b, c))
    bank = default_bank()
    d = lambda p, q: dual_lipschitz(p, q, bank)
    assert d(mu, mu) == 0.0
    assert d(mu, nu) == pytest.approx(d(nu, mu), abs=1e-15)
    assert d(mu, xi) <= d(mu, nu) + d(nu, xi) + 1e-12
    assert d(mu, nu) >= 0.0


def test_dual_lipschitz_mass_mismatch():
    mu = EmpiricalMeasure(np.array([[1, 0]], complex), np.array([1.0]))
    nu = EmpiricalMeasure(np.array([[1, 0]], complex), np.array([2.0]))
    with pytest.raises(UsageError):
        dual_lipschitz(mu, nu)


def test_section_zeros_linear_squaring(sq, green_coarse):
    rep = random_section_zeros(sq, m=1, n_max=10, trials=5, green=green_coarse)
    assert rep.verdict == "consistent"
    assert rep.constants["zeros_vs_brolin"].value < 0.05
    assert rep.constants["violations"] == 0


def test_section_zeros_exceptional_section(sq, green_coarse):
    rep = random_section_zeros(sq, m=1, n_max=8, trials=2, section=[1, 0], green=green_coarse)
    assert rep.verdict == "inconsistent"
    assert any("exceptional section" in n for n in rep.notes)


def test_section_zeros_basilica_decreasing(basilica, green_basilica):
    rep = random_section_zeros(basilica, m=2, n_max=10, trials=10, green=green_basilica)
    d = rep.series["mean_distance_brolin"]
    assert d[-1] < d[0]
    assert rep.constants["violations"] == 0
    assert rep.verdict == "consistent"


def test_section_potential():
    s = SectionPotential(P2, [(1, 0, 0), (0, 1, 0)], [1.0, 0.0])
    Z = np.array([[1, 2, 3]], complex)
    # zero coefficients are dropped: log|z0| - log|Z|
    assert s(Z)[0] == pytest.approx(-0.5 * math.log(14), abs=1e-12)
    with pytest.raises(UsageError):
        SectionPotential(P2, [(1, 0, 0)], [0.0])


def test_section_zeros_p2(p2sq):
    rep = random_section_zeros(p2sq, m=1, n_max=6, trials=4)
    assert rep.verdict == "consistent"
    exc = random_section_zeros(p2sq, m=1, n_max=6, trials=1, section=[0, 0, 1])
    assert exc.verdict == "inconsistent"


# -- capacity decay -----------------------------------------------------------


def test_capacity_decay_bounded():
    rep = capacity_decay(bump())
    assert rep.verdict == "consistent"
    assert rep.series["capacity"][-1] == 0.0


@pytest.mark.parametrize("a", [5, 10])
def test_capacity_decay_smooth_log_family(a):
    rep = capacity_decay(smooth_log_point(P1, [1, 0], math.exp(-2 * a)))
    assert rep.verdict == "consistent"
    tc = rep.series["t_capacity"]
    assert tc[-1] < 0.1 * max(tc)
    # Cap(phi - V < -t) <= MA_V(sublevel) + I / (t |chi(-t)|)
    assert all(c <= b + 1e-9 for c, b in zip(rep.series["lemma_capacity"], rep.series["lemma_bound"]))


def test_capacity_decay_positive_lelong():
    rep = capacity_decay(log_point(P1, [1, 0]), t_grid=[1, 2, 4, 8, 12, 16, 20])
    assert rep.verdict == "inconclusive"
    assert any("expected failure: positive Lelong" in n for n in rep.notes)
    assert min(rep.series["t_capacity"][2:]) > 0.5


# -- small Jacobian versus indeterminacy --------------------------------------


def test_jacobian_cremona(sigma):
    rep = jacobian_vs_indeterminacy(sigma, samples=4000)
    eps = rep.series["epsilon"]
    assert rep.verdict == "consistent"
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    assert eps[2] < eps[0]
    assert eps[-1] < 0.05


def test_jacobian_linear_automorphism_vacuous():
    A = RationalMap("P2", ["z0", "2*z1", "3*z2"])
    Ainv = RationalMap("P2", ["6*z0", "3*z1", "2*z2"])
    rep = jacobian_vs_indeterminacy(A, Ainv, samples=500)
    assert rep.verdict == "consistent"
    assert rep.series["count"][-1] == 0


def test_jacobian_conjugated_cremona(sigma):
    L = RationalMap("P2", ["z0 + z1", "z1 + z2", "z2"])
    Linv = RationalMap("P2", ["z0 - z1 + z2", "z1 - z2", "z2"])
    f = compose(sigma, L)
    finv = compose(Linv, sigma)
    check_inverse(f, finv)
    rep = jacobian_vs_indeterminacy(f, finv, samples=4000)
    assert rep.verdict == "consistent"


def test_jacobian_inverse_check_fails(sigma, p2sq):
    with pytest.raises(UsageError):
        jacobian_vs_indeterminacy(sigma, p2sq, samples=10)


# -- registry and reports -----------------------------------------------------


def test_potential_from_config():
    phi = potential_from_config("P1", {"type": "log_point", "point": [1, [0, 0]], "weight": 2})
    assert phi.class_coeffs.tolist() == [2.0]
    b = potential_from_config("P1", {"type": "bump", "center": [1, 1]})
    assert b.class_coeffs.tolist() == [1.0]
    with pytest.raises(UsageError):
        potential_from_config("P1", {"type": "nope"})
    with pytest.raises(UsageError):
        potential_from_config("P1", {"point": [1, 0]})


def test_registry_ids():
    assert set(REGISTRY) == {"volume_contraction", "uniform_integrability", "skoda_tail",
                             "equidistribute_smooth", "equidistribute_current", "random_section_zeros",
                             "capacity_decay", "jacobian_vs_indeterminacy"}


def test_run_experiment_validation(sq):
    with pytest.raises(UsageError):
        run_experiment("nope", sq, {})
    with pytest.raises(UsageError):
        run_experiment("volume_contraction", sq, {"n_max": -1})
    with pytest.raises(UsageError):
        run_experiment("volume_contraction", sq, {"bogus": 1})
    with pytest.raises(UsageError):
        run_experiment("volume_contraction", None, {})


def test_run_experiment_echoes_config(sq):
    cfg = {"phi": {"type": "bump", "center": [1, 1]}, "t_grid": [1, 2, 3]}
    rep = run_experiment("skoda_tail", sq, cfg, seed=3)
    assert rep.config["input"] == cfg
    assert rep.verdict == "inconclusive"
    assert json.loads(rep.to_json())["config"]["input"] == cfg


def test_report_validation():
    with pytest.raises(ValueError):
        ExperimentReport("x", {}, 0, verdict="maybe")
    with pytest.raises(ValueError):
        ExperimentReport("x", {}, 0, series={"a": [1], "b": [1, 2]})


def test_report_write_and_strip(tmp_path):
    rep = ExperimentReport("demo", {"k": 1}, 7, series={"n": [0, 1], "v": [0.5, 0.25]},
                           verdict="consistent", constants={"C": Constant(1.0, 0.5, 2.0)})
    jp, cp = rep.write(tmp_path)
    text = jp.read_text()
    assert "metadata" in json.loads(text)
    assert strip_metadata(text) == strip_metadata(rep.to_json())
    assert cp.read_text().splitlines()[0] == "n,v"
    assert jp.name == "demo-nomap-7.json"


@pytest.mark.parametrize("name,cfg", [
    ("random_section_zeros", {"m": 1, "n_max": 6, "trials": 4, "resolution": 64}),
    ("volume_contraction", {"n_max": 3, "samples": 512}),
    ("jacobian_vs_indeterminacy", {"samples": 400}),
])
def test_reports_identical_across_thread_counts(name, cfg, sq, sigma):
    f = sigma if name == "jacobian_vs_indeterminacy" else sq
    outs = []
    try:
        for t in (1, 4, 8):
            parallel.set_threads(t)
            outs.append(run_experiment(name, f, cfg, seed=12345).to_json())
    finally:
        parallel.set_threads(None)
    assert outs[0] == outs[1] == outs[2]


def test_seed_changes_monte_carlo(sq):
    a = run_experiment("volume_contraction", sq, {"n_max": 2, "samples": 256}, seed=1).to_json()
    b = run_experiment("volume_contraction", sq, {"n_max": 2, "samples": 256}, seed=2).to_json()
    assert a != b
