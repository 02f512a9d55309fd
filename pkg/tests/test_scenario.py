from dataclasses import replace

import numpy as np
import pytest

from fimrate.bca import epa_powers
from fimrate.rate import nats_to_bits, sum_rate
from fimrate.scenario import (SCHEMES, ScenarioParams, SweepSpec, apply_axis, build_scenario, drop_users,
                              element_gain, initial_morph, noise_power, path_gain, run_drop, run_sweep,
                              solve_scheme, summarize)
from fimrate.units import dbm_to_watts, watts_to_dbm
from conftest import LAM, small_params


def test_zero_radius_puts_users_at_center():
    np.testing.assert_array_equal(drop_users(5, 0.0, 50.0, 0), 50.0)


def test_disk_second_moment():
    # |c + offset|^2 averages to D^2 + E|offset|^2 = D^2 + R^2 / 2 for a uniform disk
    # the cross term 2 D r sin(theta) has zero mean but dominates the spread, so bound by 4 standard errors
    x = drop_users(100_000, 20.0, 50.0, 1) ** 2 - 50.0**2
    se = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(x.mean() - 20.0**2 / 2) < 4 * se


def test_distances_within_disk_bounds():
    d = drop_users(10_000, 20.0, 50.0, 2)
    assert np.all((d >= 30.0) & (d <= 70.0))


def test_disk_must_sit_in_front():
    with pytest.raises(ValueError):
        drop_users(2, 60.0, 50.0, 0)
    with pytest.raises(ValueError):
        drop_users(2, -1.0, 50.0, 0)


def test_path_gain_values():
    assert path_gain(1.0) == pytest.approx(1e-3, rel=1e-14)
    assert path_gain(10.0) == pytest.approx(10**-5.8, rel=1e-14)
    assert path_gain(100.0) == pytest.approx(10**-8.6, rel=1e-14)
    np.testing.assert_allclose(path_gain([1.0, 10.0]), [1e-3, 10**-5.8], rtol=1e-14)
    with pytest.raises(ValueError):
        path_gain(0.5)


def test_noise_power_values():
    assert watts_to_dbm(noise_power(1.0)) == pytest.approx(-174.0, abs=1e-12)
    assert watts_to_dbm(noise_power(10.0)) == pytest.approx(-164.0, abs=1e-12)
    assert watts_to_dbm(noise_power(20e6)) == pytest.approx(-100.98970004336019, abs=1e-9)
    with pytest.raises(ValueError):
        noise_power(0.0)


@pytest.mark.parametrize("dbm", [-174.0, -30.0, 0.0, 10.0, 30.0, 47.3])
def test_dbm_round_trip(dbm):
    assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, rel=1e-12, abs=1e-12)
    w = dbm_to_watts(dbm)
    assert dbm_to_watts(watts_to_dbm(w)) == pytest.approx(w, rel=1e-12)


def test_dbm_reference_points():
    assert dbm_to_watts(30.0) == 1.0
    assert dbm_to_watts(10.0) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        watts_to_dbm(0.0)


def test_element_gain_scales_with_area():
    assert element_gain(2e-6, LAM / 4, LAM / 4, LAM) == pytest.approx(2e-6)
    assert element_gain(2e-6, LAM / 2, LAM / 2, LAM) == pytest.approx(8e-6)


def test_default_parameters():
    p = ScenarioParams()
    assert (p.n_x * p.n_z, p.n_users, p.tau_c, p.pilot_length) == (256, 8, 200, 8)
    assert (p.r_min_bps_hz, p.p_max_dbm, p.p_train_dbm) == (1.0, 30.0, 10.0)
    assert (p.spacing_h_wavelengths, p.spacing_v_wavelengths, p.y_max_wavelengths) == (0.25, 0.25, 0.3)
    assert (p.carrier_hz, p.bandwidth_hz) == (3.5e9, 20e6)


@pytest.mark.parametrize("kw", [dict(n_users=0), dict(tau=2, n_users=3), dict(tau=300),
                                dict(init_morph="bumpy"), dict(noise_dbm_override=[-90.0])])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ScenarioParams(**kw).validate()


def test_scenario_is_pure_function_of_params_and_seed():
    params = small_params(k=3)
    a, b = build_scenario(params, 7, 2), build_scenario(params, 7, 2)
    np.testing.assert_array_equal(a.distances, b.distances)
    np.testing.assert_array_equal(a.geometry.y, b.geometry.y)
    assert [u.element_gain for u in a.users] == [u.element_gain for u in b.users]
    c = build_scenario(params, 7, 3)
    assert not np.array_equal(a.distances, c.distances)


def test_scenario_fields():
    sc = build_scenario(small_params(k=3, tau=5), 0)
    assert sc.prelog == pytest.approx(195 / 200)
    assert sc.regularizer == pytest.approx(noise_power(20e6) / (5 * 0.01))
    assert sc.p_max == pytest.approx(1.0)
    assert all(u.noise_power == pytest.approx(noise_power(20e6)) for u in sc.users)
    over = build_scenario(small_params(k=2, noise_dbm_override=[-90.0, -80.0]), 0)
    assert [u.noise_power for u in over.users] == pytest.approx([1e-12, 1e-11])


def test_initial_morphs():
    geo = build_scenario(small_params(), 0).geometry
    np.testing.assert_array_equal(initial_morph(geo, "flat", 0), 0.0)
    cb = initial_morph(geo, "checkerboard", 0)
    assert set(cb) == {0.0, geo.y_max} and cb[0] != cb[1] and cb[0] != cb[geo.n_x]
    r = initial_morph(geo, "random", 3)
    np.testing.assert_array_equal(r, initial_morph(geo, "random", 3))
    assert np.all((r >= 0) & (r <= geo.y_max))
    with pytest.raises(ValueError):
        initial_morph(geo, "bumpy", 0)


def test_apply_axis():
    p = small_params()
    assert apply_axis(p, "p_max_dbm", 20).p_max_dbm == 20.0
    assert (apply_axis(p, "n_elements", 36).n_x, apply_axis(p, "n_elements", 36).n_z) == (6, 6)
    s = apply_axis(p, "spacing", 0.5)
    assert s.spacing_h_wavelengths == s.spacing_v_wavelengths == 0.5
    assert apply_axis(p, "morph_range", 0.1).y_max_wavelengths == 0.1
    assert apply_axis(p, "user_radius", 5).user_radius_m == 5.0
    with pytest.raises(ValueError):
        apply_axis(p, "n_elements", 10)


@pytest.mark.parametrize("kw", [dict(axis="colour", values=(1,)), dict(axis="p_max_dbm", values=()),
                                dict(axis="p_max_dbm", values=(1,), schemes=()),
                                dict(axis="p_max_dbm", values=(1,), schemes=("FIM-XYZ",)),
                                dict(axis="p_max_dbm", values=(1,), drops=0)])
def test_sweep_spec_validation(kw):
    with pytest.raises(ValueError):
        SweepSpec(**kw)


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError):
        solve_scheme(build_scenario(small_params(), 0), "FIM-XYZ")


def test_rigid_epa_is_closed_form():
    params = small_params(k=3, r_min_bps_hz=0.0)
    out = run_drop(params, ("RAA-EPA",), 5, 0, 30.0)
    sc = build_scenario(params, 5, 0)
    problem = sc.problem(y_max=0.0)
    ctx = problem.context(np.zeros(problem.geometry.n_elements))
    expected = nats_to_bits(sum_rate(epa_powers(ctx, problem.p_max), ctx))
    assert out.sum_rates["RAA-EPA"] == pytest.approx(expected, rel=1e-12)
    assert out.feasible and out.attempt == 0


def test_single_drop_sweep_reproducible():
    spec = SweepSpec("p_max_dbm", (20.0,), SCHEMES, drops=1)
    params = small_params(3, 3, 2, r_min_bps_hz=0.2)
    a, _ = run_sweep(params, spec, seed=4)
    b, _ = run_sweep(params, spec, seed=4)
    assert a == b
    assert len(a) == 4 and all(r["drops_used"] == 1 and r["stderr"] == 0.0 for r in a)


def test_sweep_orderings_per_drop():
    spec = SweepSpec("p_max_dbm", (20.0, 30.0), SCHEMES, drops=3)
    rows, outcomes = run_sweep(small_params(3, 3, 2, r_min_bps_hz=0.2), spec, seed=1)
    for o in outcomes:
        assert o.error is None
        if not o.feasible:
            continue
        sr, ok = o.sum_rates, o.scheme_feasible
        assert sr["FIM-OPA"] >= sr["RAA-OPA"] - 1e-9
        if ok["FIM-OPA"] and ok["FIM-EPA"]:
            assert sr["FIM-OPA"] >= sr["FIM-EPA"] - 1e-9
        assert sr["RAA-OPA"] >= sr["RAA-EPA"] - 1e-9 or not ok["RAA-EPA"]
    assert len(rows) == 2 * 4


def test_rigid_results_ignore_morph_range():
    schemes = ("RAA-OPA", "RAA-EPA")
    a = run_drop(small_params(3, 3, 2, y_max_wavelengths=0.1), schemes, 3, 0, 0.1)
    b = run_drop(small_params(3, 3, 2, y_max_wavelengths=0.5), schemes, 3, 0, 0.5)
    assert a.sum_rates == b.sum_rates


def test_drops_shared_across_schemes():
    params = small_params(3, 3, 2)
    for drop in range(3):
        a = build_scenario(params, 9, drop)
        b = build_scenario(apply_axis(params, "p_max_dbm", 10), 9, drop)
        np.testing.assert_array_equal(a.distances, b.distances)


def test_infeasible_drop_excluded_for_all_schemes():
    out = run_drop(small_params(3, 3, 2, r_min_bps_hz=50.0), SCHEMES, 0, 0, 1.0)
    assert not out.feasible and out.attempt == 1
    spec = SweepSpec("p_max_dbm", (1.0,), SCHEMES, drops=1)
    rows = summarize(spec, [out])
    assert all(r["drops_used"] == 0 and r["infeasible_drops"] == 1 for r in rows)
    assert all(np.isnan(r["mean_sum_rate_bps_hz"]) for r in rows)


def test_solver_errors_are_recorded():
    bad = replace(small_params(3, 3, 2), init_morph="bumpy")
    out = run_drop(bad, ("RAA-EPA",), 0, 0, 1.0)
    assert not out.feasible and "bumpy" in out.error


def test_parallel_sweep_matches_serial():
    spec = SweepSpec("morph_range", (0.1, 0.3), ("FIM-OPA", "RAA-OPA"), drops=2)
    params = small_params(3, 3, 2, r_min_bps_hz=0.2)
    serial, _ = run_sweep(params, spec, seed=2)
    parallel, _ = run_sweep(params, spec, seed=2, jobs=2)
    assert serial == parallel
