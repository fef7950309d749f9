import math

import numpy as np
import pytest

from diffsched.kl_engine import TimeGrid, kl_divergence, output_eigenvalues, reference_eigenvalues
from diffsched.oracle import (MatrixModel, McConfig, kl_matrix_form, monte_carlo_covariance,
                              propagate_covariance, propagated_eigenvalues, random_orthogonal)
from diffsched.schedule import VEGeometric, VPCosine, tangent_schedule
from diffsched.spectrum import Spectrum, default_spectrum

COS = VPCosine()


def test_random_orthogonal():
    u = random_orthogonal(12, 4)
    np.testing.assert_allclose(u.T @ u, np.eye(12), atol=1e-12)
    np.testing.assert_array_equal(u, random_orthogonal(12, 4))
    assert not np.allclose(u, random_orthogonal(12, 5))


def test_model_sigma_spd():
    m = MatrixModel.from_spectrum(default_spectrum(9), 1)
    s = m.sigma_x
    np.testing.assert_array_equal(s, s.T)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(s))[::-1], m.mu, rtol=1e-12)


def test_scalar_case_is_gain_product():
    sp = Spectrum([1.7])
    g = TimeGrid.uniform(9)
    model = MatrixModel(np.eye(1), sp.mu.copy())
    a, s = COS.alpha_sigma(g.times)
    d = (a[:-1] * a[1:] * 1.7 + s[:-1] * s[1:]) / (a[1:] ** 2 * 1.7 + s[1:] ** 2)
    np.testing.assert_allclose(propagate_covariance(model, COS, g)[0, 0], np.prod(d) ** 2, rtol=1e-13)


@pytest.mark.parametrize("s", [COS, VEGeometric(), tangent_schedule(0.5), tangent_schedule(2.0, 80.0)],
                         ids=["cosine", "ve", "tangent", "tangent-ve"])
def test_propagation_matches_closed_form(s):
    sp = default_spectrum(8)
    model = MatrixModel.from_spectrum(sp, 3)
    g = TimeGrid.uniform(32)
    np.testing.assert_allclose(propagated_eigenvalues(model, s, g), output_eigenvalues(s, g, sp), rtol=1e-10)


def test_zero_width_grid_keeps_prior():
    ve = VEGeometric()
    model = MatrixModel.from_spectrum(default_spectrum(4), 0)
    g = TimeGrid([0.6] * 5)
    np.testing.assert_allclose(propagate_covariance(model, ve, g), ve.sigma(0.6) ** 2 * np.eye(4), rtol=1e-14,
                               atol=1e-14)


def test_kl_matrix_form_examples():
    q = np.diag([1.0, 2.0, 3.0])
    assert kl_matrix_form(q, q) == pytest.approx(0.0, abs=1e-15)
    n = np.array([0.5, 2.0, 3.0])
    np.testing.assert_allclose(kl_matrix_form(np.diag(math.e * n), np.diag(n)), 3 * (math.e - 2) / 2, rtol=1e-14)
    u = random_orthogonal(3, 9)
    p = np.diag(n * np.array([1.3, 0.7, 1.1]))
    np.testing.assert_allclose(kl_matrix_form(u @ p @ u.T, u @ np.diag(n) @ u.T),
                               kl_matrix_form(p, np.diag(n)), rtol=1e-10)


def test_kl_matrix_form_singular_and_invalid():
    assert math.isinf(kl_matrix_form(np.diag([1.0, 0.0]), np.eye(2)))
    with pytest.raises(ValueError):
        kl_matrix_form(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        kl_matrix_form(np.eye(2), np.eye(3))


def test_kl_matrix_form_equals_eigen_form_random_bases():
    rng = np.random.default_rng(0)
    for i in range(20):
        k = int(rng.integers(1, 17))
        sp = Spectrum(np.exp(rng.uniform(-6, 2, k)))
        model = MatrixModel.from_spectrum(sp, i)
        g = TimeGrid.uniform(int(rng.integers(2, 65)))
        m = output_eigenvalues(COS, g, sp)
        n = reference_eigenvalues(COS, g.end, sp)
        ref = kl_divergence(m, n)
        np.testing.assert_allclose(kl_matrix_form(propagate_covariance(model, COS, g), model.conjugate(n)), ref,
                                   rtol=1e-9)


def test_monte_carlo_within_five_se():
    sp = default_spectrum(4)
    model = MatrixModel.from_spectrum(sp, 2)
    g = TimeGrid.uniform(16)
    cov, se = monte_carlo_covariance(model, COS, g, McConfig(200_000, 7, 50_000))
    m = output_eigenvalues(COS, g, sp)
    assert np.all(np.abs(model.mode_variances(cov) - m) <= 5 * se)
    # the eigen-decomposition of the sample covariance agrees too
    ev = np.sort(np.linalg.eigvalsh(cov))[::-1]
    assert np.all(np.abs(ev - m) <= 5 * se)


def test_monte_carlo_small_sample():
    sp = default_spectrum(4)
    model = MatrixModel.from_spectrum(sp, 2)
    g = TimeGrid.uniform(16)
    cov, se = monte_carlo_covariance(model, COS, g, McConfig(1000, 1, 300))
    assert np.all(np.abs(model.mode_variances(cov) - output_eigenvalues(COS, g, sp)) <= 10 * se)


def test_monte_carlo_degenerate_grid_is_zero():
    model = MatrixModel.from_spectrum(default_spectrum(3), 0)
    cov, _ = monte_carlo_covariance(model, COS, TimeGrid([0.0, 1.0]), McConfig(2000, 0, 1000))
    assert np.linalg.norm(cov) <= 1e-20


def test_monte_carlo_deterministic_across_threads():
    model = MatrixModel.from_spectrum(default_spectrum(5), 0)
    g = TimeGrid.uniform(8)
    cfg = McConfig(30_000, 123, 4_000)
    a, _ = monte_carlo_covariance(model, COS, g, cfg, threads=1)
    b, _ = monte_carlo_covariance(model, COS, g, cfg, threads=4)
    c, _ = monte_carlo_covariance(model, COS, g, cfg, threads=3)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_monte_carlo_z_statistics_over_seeds():
    sp = default_spectrum(8)
    model = MatrixModel.from_spectrum(sp, 0)
    g = TimeGrid.uniform(12)
    m = output_eigenvalues(COS, g, sp)
    zs = []
    for seed in range(40):
        cov, se = monte_carlo_covariance(model, COS, g, McConfig(5_000, seed, 5_000))
        zs.append((model.mode_variances(cov) - m) / se)
    z = np.concatenate(zs)
    assert abs(z.mean()) <= 0.2
    assert np.mean(np.abs(z) > 3) <= 0.01


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(999, 0, 10)
    with pytest.raises(ValueError):
        McConfig(1000, 0, 0)
    with pytest.raises(ValueError):
        McConfig(1000, -1, 10)
