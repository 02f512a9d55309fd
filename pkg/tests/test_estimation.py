import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fimrate.correlation import build_sigma_fim
from fimrate.estimation import PilotConfig, complex_gaussian, lmmse_bundle, simulate_pilot_estimation
from fimrate.geometry import SurfaceGeometry
from oracles import naive_lmmse

LAM = 0.1


def sigma_for(seed, n_x=2, n_z=4, gain=1.0, spacing=0.25):
    rng = np.random.default_rng(seed)
    geo = SurfaceGeometry(n_x, n_z, spacing * LAM, spacing * LAM, LAM, 0.3 * LAM)
    geo = geo.with_morph(rng.uniform(0, geo.y_max, geo.n_elements))
    return gain * build_sigma_fim(geo)


def test_regularizer():
    pilot = PilotConfig(tau=8, p_train=0.01, noise_power=1e-13)
    assert pilot.regularizer == pytest.approx(1e-13 / 0.08)


@pytest.mark.parametrize("kw", [dict(tau=0, p_train=1, noise_power=1), dict(tau=1, p_train=0, noise_power=1),
                                dict(tau=1, p_train=1, noise_power=-1)])
def test_pilot_config_validation(kw):
    with pytest.raises(ValueError):
        PilotConfig(**kw)


def test_scaled_identity_closed_form():
    c, rho, n = 2.0, 0.5, 5
    b = lmmse_bundle(c * np.eye(n), rho)
    np.testing.assert_allclose(b.sigma_hat, c**2 / (c + rho) * np.eye(n), rtol=1e-14)
    np.testing.assert_allclose(b.err_cov, c * rho / (c + rho) * np.eye(n), rtol=1e-13)
    np.testing.assert_allclose(b.q, np.eye(n) / (c + rho), rtol=1e-14)


def test_perfect_csi_limit():
    s = sigma_for(0, spacing=0.5)
    b = lmmse_bundle(s, 1e-12 * np.trace(s) / len(s))
    np.testing.assert_allclose(b.sigma_hat, s, atol=1e-9)
    assert np.abs(b.err_cov).max() < 1e-9


def test_weak_training_limit():
    """Eigenvalue map l -> l^2/(l + rho) gives tr(sigma_hat) ~ tr(sigma^2)/rho."""
    s = sigma_for(1)
    rho = 1e8
    b = lmmse_bundle(s, rho)
    lam = np.linalg.eigvalsh(s)
    assert b.tr_sigma_hat == pytest.approx(np.sum(lam**2 / (lam + rho)), rel=1e-10)
    assert b.tr_sigma_hat == pytest.approx(np.trace(s @ s) / rho, rel=1e-6)
    assert b.tr_sigma_hat / np.trace(s) < 1e-6


def test_matches_explicit_inverse():
    s = sigma_for(2, 3, 3, gain=3e-9)
    rho = 1e-10
    q, sh, e = naive_lmmse(s, rho)
    b = lmmse_bundle(s, rho)
    np.testing.assert_allclose(b.sigma_hat, sh, rtol=1e-9, atol=1e-22)
    np.testing.assert_allclose(b.q @ (s + rho * np.eye(9)), np.eye(9), atol=1e-8)


def test_rejects_non_positive_regularizer():
    with pytest.raises(ValueError):
        lmmse_bundle(np.eye(2), 0.0)


def test_ill_conditioned_eighth_wavelength_grid():
    s = sigma_for(3, 4, 4, spacing=0.125)
    assert np.linalg.cond(s) > 1e4
    b = lmmse_bundle(s, 1e-9)
    np.testing.assert_array_equal(b.sigma_hat, b.sigma_hat.T)
    assert np.linalg.eigvalsh(b.err_cov).min() >= -1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 10.0))
def test_loewner_order_and_traces(seed, rho):
    s = sigma_for(seed)
    b = lmmse_bundle(s, rho)
    for m in (b.sigma_hat, b.err_cov):
        np.testing.assert_array_equal(m, m.T)
        assert np.linalg.eigvalsh(m).min() >= -1e-9
    np.testing.assert_array_equal(b.err_cov, b.sigma - b.sigma_hat)
    assert 0 <= b.tr_sigma_hat <= np.trace(s) + 1e-12
    assert b.tr_sigma_hat == np.trace(b.sigma_hat)


def test_trace_monotone_in_training_power():
    s = sigma_for(5)
    traces = [lmmse_bundle(s, PilotConfig(4, p, 1e-3)).tr_sigma_hat for p in np.logspace(-6, 2, 40)]
    assert np.all(np.diff(traces) >= -1e-12)


def test_complex_gaussian_real_imag_split():
    rng = np.random.default_rng(0)
    c = sigma_for(6, 2, 2)
    x = complex_gaussian(c, 200_000, rng)
    re, im = x.real, x.imag
    n = x.shape[1]
    np.testing.assert_allclose(re @ re.T / n, c / 2, atol=0.01)
    np.testing.assert_allclose(im @ im.T / n, c / 2, atol=0.01)
    np.testing.assert_allclose(re @ im.T / n, 0.0, atol=0.01)


def test_complex_gaussian_handles_rank_deficiency():
    v = np.ones((3, 1))
    x = complex_gaussian(v @ v.T, 10, np.random.default_rng(1))
    assert np.all(np.isfinite(x))
    np.testing.assert_allclose(x[0], x[1], atol=1e-6)


def test_pilot_simulation_moments():
    s = sigma_for(7)
    pilot = PilotConfig(tau=4, p_train=1.0, noise_power=1.0)  # rho = 0.25, error not negligible
    b = lmmse_bundle(s, pilot)
    n = 100_000
    m = simulate_pilot_estimation(s, pilot, n, seed=11)
    scale = np.linalg.norm(b.sigma_hat)
    assert np.linalg.norm(m.hat_cov - b.sigma_hat) / scale < 0.05
    assert np.linalg.norm(m.cross_cov) / scale < 0.05
    assert np.linalg.norm(m.err_cov - b.err_cov) / np.linalg.norm(b.err_cov) < 0.05
    assert np.all(np.abs(m.hat_mean) < 5 * np.sqrt(b.tr_sigma_hat / n))


def test_pilot_simulation_seeded():
    s = sigma_for(8, 2, 2)
    pilot = PilotConfig(2, 1.0, 1.0)
    a = simulate_pilot_estimation(s, pilot, 500, seed=3)
    b = simulate_pilot_estimation(s, pilot, 500, seed=3)
    np.testing.assert_array_equal(a.hat_cov, b.hat_cov)
    with pytest.raises(ValueError):
        simulate_pilot_estimation(s, pilot, 0, seed=3)
