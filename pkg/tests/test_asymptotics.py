import json
import math

import numpy as np
import pytest

from diffsched import asymptotics as asy
from diffsched.discretize import power_uniform_grid, power_uniform_path, default_lambda_bounds
from diffsched.errors import DomainError
from diffsched.kl_engine import TimeGrid, exact_kl
from diffsched.schedule import HALF_PI, DDPMLinear, FlowLinear, VEGeometric, VPCosine, tangent_schedule
from diffsched.spectrum import Spectrum, default_spectrum

COS = VPCosine()
PI2_8 = math.pi ** 2 / 8


def test_integral_I_examples():
    for mu in (0.1, 1.0, 7.0):
        np.testing.assert_allclose(asy.integral_I(COS, mu), 0.5 * math.log(mu), rtol=1e-15, atol=1e-16)
    assert asy.integral_I(COS, 2.0, 0.3, 0.3) == 0.0
    ve = VEGeometric(0.01, 80.0)
    np.testing.assert_allclose(asy.integral_I(ve, 1.0), 0.5 * math.log((1 + 1e-4) / 6401), rtol=1e-14)


@pytest.mark.parametrize("s", [COS, VEGeometric(), tangent_schedule(0.7), FlowLinear()],
                         ids=["cosine", "ve", "tangent", "flow"])
@pytest.mark.parametrize("mu", [0.01, 1.0, 30.0])
def test_integral_I_quadrature(s, mu):
    t0, t1 = (0.0, 1.0) if s is not COS else (0.0, 0.999)
    assert abs(asy.integral_I(s, mu, t0, t1) - asy.integral_I_quadrature(s, mu, t0, t1)) <= 1e-8


def test_integral_I_domain_error():
    with pytest.raises(DomainError):
        asy.integral_I(COS, 0.0)


def test_e1_examples():
    np.testing.assert_allclose(asy.e1_quadrature(tangent_schedule(1.0), 1.0), -PI2_8, rtol=1e-10)
    np.testing.assert_allclose(asy.e1_quadrature(COS, 1.0), -PI2_8, rtol=1e-12)


def test_e1_vanishes_for_small_mu_when_sigma0_positive():
    ve = VEGeometric(0.01, 80.0)
    small = [abs(asy.e1_quadrature(ve, mu)) for mu in (1e-6, 1e-8, 1e-10)]
    assert small[0] > small[1] > small[2]
    np.testing.assert_allclose(small[1] / small[2], 100.0, rtol=1e-3)


def test_e1_grows_for_small_mu_when_sigma0_zero():
    # sigma(0) = 0: the integrand concentrates near t = 0 and E1 ~ mu^(-1/2)
    for mu in (1e-2, 1e-4):
        np.testing.assert_allclose(asy.e1_quadrature(COS, mu),
                                   asy.e1_tangent_closed(1.0, mu, HALF_PI), rtol=1e-8)
    assert abs(asy.e1_quadrature(COS, 1e-4)) > abs(asy.e1_quadrature(COS, 1e-2))


def test_e1_closed_examples():
    assert asy.e1_tangent_closed(2.0, 2.0, HALF_PI) == pytest.approx(-PI2_8, rel=1e-15)
    assert asy.e1_tangent_closed(0.3, 5.0, HALF_PI) == asy.e1_tangent_closed(5.0, 0.3, HALF_PI)
    th = math.atan(80 / math.sqrt(2))
    q = asy.e1_quadrature(tangent_schedule(2.0, 80.0), 5.0)
    np.testing.assert_allclose(asy.e1_tangent_closed(2.0, 5.0, th), q, rtol=1e-8)


def test_e1_closed_general_theta_vs_quadrature():
    for g in (0.05, 1.0, 9.0):
        for mu in (0.02, 0.8, 40.0):
            for eta1 in (0.5, 10.0, 80.0):
                s = tangent_schedule(g, eta1)
                np.testing.assert_allclose(asy.e1_tangent_closed(g, mu, s.theta), asy.e1_quadrature(s, mu),
                                           rtol=1e-8)


@pytest.mark.parametrize("s", [COS, VEGeometric(), tangent_schedule(0.2), tangent_schedule(3.0, 50.0),
                               FlowLinear()], ids=["cosine", "ve", "tan", "tan-ve", "flow"])
def test_e1_nonpositive(s):
    for mu in np.geomspace(1e-3, 1e2, 9):
        assert asy.e1_quadrature(s, float(mu)) <= 0.0


def test_e1_direct_g_oracle():
    # log d_j = h F(t_j) + h^2 G(t_j) + O(h^3) with G = (a a'' mu + s s'') / (2 den) - F^2 / 2;
    # the right-endpoint sum of h F adds h (F(t1) - F(t0)) / 2, so E1 = int G + (F(t1) - F(t0)) / 2
    s = tangent_schedule(0.5)
    mu = 2.0
    f = asy.f_integrand(s, mu)
    h = 1e-4

    def g(t):
        a, sg = s.alpha_sigma(t)
        ap, sp = s.alpha_sigma(t + h)
        am, sm = s.alpha_sigma(t - h)
        add = (ap - 2 * a + am) / h ** 2
        sdd = (sp - 2 * sg + sm) / h ** 2
        den = a * a * mu + sg * sg
        return (a * add * mu + sg * sdd) / (2 * den) - 0.5 * f(t) ** 2

    from diffsched.quadrature import integrate_adaptive
    lo, hi = 1e-3, 1 - 1e-3
    direct = (hi - lo) * (integrate_adaptive(g, lo, hi, epsabs=1e-10, epsrel=1e-8) + 0.5 * (f(hi) - f(lo)))
    np.testing.assert_allclose(direct, asy.e1_quadrature(s, mu, lo, hi), rtol=1e-6)


def test_residual_examples():
    n = 1024
    np.testing.assert_allclose(n * asy.residual(COS, n, 1.0), -PI2_8, rtol=1e-2)
    assert asy.residual(COS, 8, 1.0, 0.4, 0.4) == 0.0


RESIDUAL_CASES = [(COS, 1.0, 0.0, 1.0), (COS, 2.0, 0.0, 1.0), (VEGeometric(), 2.0, 0.0, 1.0),
                  (tangent_schedule(4.0), 1.5, 0.0, 1.0), (FlowLinear(), 0.5, 0.0, 1.0)]
RESIDUAL_IDS = ["cos1", "cos2", "ve", "tan4", "flow"]


def _inner_errors(s, mu, t0, t1, ns):
    e1 = asy.e1_quadrature(s, mu, t0, t1)
    return np.array([abs(n * asy.residual(s, n, mu, t0, t1) - e1) for n in ns])


@pytest.mark.parametrize("s,mu,t0,t1", RESIDUAL_CASES, ids=RESIDUAL_IDS)
def test_residual_dyadic_ratio_second_order(s, mu, t0, t1):
    d = _inner_errors(s, mu, t0, t1, [2048, 4096])
    np.testing.assert_allclose(d[0] / d[1], 4.0, rtol=1e-3)


@pytest.mark.parametrize("s,mu,t0,t1", RESIDUAL_CASES, ids=RESIDUAL_IDS)
def test_residual_at_least_first_order(s, mu, t0, t1):
    ns = [64, 128, 256, 512, 1024, 2048, 4096]
    slope = asy.slope_loglog(ns, _inner_errors(s, mu, t0, t1, ns))[0]
    assert slope <= -0.7
    assert -2.1 <= slope <= -1.9


def test_predicted_kl_examples():
    np.testing.assert_allclose(asy.predicted_kl(Spectrum([1.0]), COS, 100), PI2_8 ** 2 / 1e4, rtol=1e-10)
    assert round(PI2_8 ** 2 / 1e4, 8) == 1.5220e-4 or abs(PI2_8 ** 2 / 1e4 - 1.5224e-4) < 5e-7
    sp = default_spectrum(6)
    a, b = asy.predicted_kl(sp, COS, np.array([50, 100]))
    assert a == 4 * b


def test_predicted_vs_exact_default_spectrum():
    sp = default_spectrum(16)
    ratio = exact_kl(COS, TimeGrid.uniform(3200), sp) / asy.predicted_kl(sp, COS, 3200)
    assert 0.95 <= ratio <= 1.05


def test_report():
    sp = default_spectrum(5)
    rep = asy.asymptotic_report(COS, sp)
    assert np.all(rep.E1 <= 0)
    assert rep.predicted_kl_at(10) == pytest.approx(np.sum(rep.E1 ** 2) / 100, rel=1e-12)
    doc = json.loads(rep.to_json())
    assert set(doc) == {"I", "E1"} and len(doc["E1"]) == 5
    assert rep.to_csv().splitlines()[0] == "mode,I,E1"


def test_lambda_path_e1_matches_power_uniform_residual():
    # per mode, N (S - I) on a power-uniform grid tends to the lambda-path E1
    from diffsched.kl_engine import log_gain_sum
    lo, hi = default_lambda_bounds(COS)
    lam, lam_dot = power_uniform_path(lo, hi, 1.5)
    for mu in (0.01, 1.0, 5.0):
        e1 = asy.e1_lambda_path(lam, lam_dot, mu)
        errs = []
        for n in (1000, 2000, 4000):
            grid, _ = power_uniform_grid(COS, n, 1.5)
            r = log_gain_sum(COS, grid, mu) - asy.integral_I(COS, mu, grid.end, grid.start)
            errs.append(abs(n * r / e1 - 1.0))
        assert errs[2] < 2e-6
        assert errs[0] > errs[1] > errs[2]


def test_clipped_vp_grid_has_kl_floor():
    # starting a clipped VP grid from N(0, I) leaves a fixed mismatch, so N^2 KL eventually grows
    sp = default_spectrum(8)
    vals = []
    for n in (4000, 16000):
        grid, _ = power_uniform_grid(COS, n, 1.5)
        vals.append(n * n * exact_kl(COS, grid, sp))
    assert vals[1] > vals[0]


def test_lambda_path_equals_time_form():
    # a uniform-t grid expressed through lambda(u) = lambda(t) gives the same E1
    s = tangent_schedule(0.6)
    lo, hi = 1e-3, 1 - 1e-3

    def lam(u):
        return float(s.half_logsnr(lo + u * (hi - lo)))

    def lam_dot(u):
        t = lo + u * (hi - lo)
        a, sg, ad, sd, _, _ = s.derivatives(t)
        return (ad / a - sd / sg) * (hi - lo)

    np.testing.assert_allclose(asy.e1_lambda_path(lam, lam_dot, 1.7), asy.e1_quadrature(s, 1.7, lo, hi),
                               rtol=1e-9)


def test_functional_J_examples():
    for mu in (0.1, 1.0, 9.0):
        np.testing.assert_allclose(asy.functional_J(asy.tangent_trajectory(mu), mu), math.pi ** 2 / (4 * mu),
                                   rtol=1e-8)
    const = asy.EtaTrajectory(lambda t: 2.0, lambda t: 0.0, 2.0, 2.0)
    assert asy.functional_J(const, 1.0) == 0.0
    mu = 1.3
    traj, energy = asy.perturbed_tangent(mu, [0.1])
    np.testing.assert_allclose(energy, 0.01 * math.pi ** 2 / 2, rtol=1e-15)
    np.testing.assert_allclose(asy.functional_J(traj, mu), math.pi ** 2 / (4 * mu) + 0.01 * math.pi ** 2 / 2,
                               rtol=1e-8)


def test_variational_optimality_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        mu = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        coeffs = rng.standard_normal(5) * 0.1 / np.arange(1, 6) ** 2
        j0 = asy.functional_J(asy.tangent_trajectory(mu), mu)
        traj, energy = asy.perturbed_tangent(mu, coeffs)
        j1 = asy.functional_J(traj, mu)
        assert j1 >= j0
        assert abs((j1 - j0) - energy) <= 1e-7


def test_q_transform_examples():
    mu = 2.5
    assert asy.q_transform(0.0, mu) == 0.0
    np.testing.assert_allclose(asy.q_transform(math.inf, mu), math.pi / (2 * math.sqrt(mu)), rtol=1e-15)
    np.testing.assert_allclose(asy.q_transform(math.sqrt(mu), mu), math.pi / (4 * math.sqrt(mu)), rtol=1e-15)
    vals = [asy.q_transform(e, mu) for e in np.linspace(0, 50, 30)]
    assert np.all(np.diff(vals) > 0)


def test_objective_J_gamma_examples():
    sp = Spectrum([1.0, 4.0])
    assert asy.objective_J_gamma(sp, 2.0) == 5.0
    rng = np.random.default_rng(2)
    gs = np.exp(rng.uniform(-5, 5, 1000))
    assert np.all(asy.objective_J_gamma(sp, gs) >= asy.objective_J_gamma(sp, 2.0))
    for a in (0.1, 0.7, 3.0):
        np.testing.assert_allclose(asy.objective_J_gamma(sp, 2.0 * a), asy.objective_J_gamma(sp, 2.0 / a),
                                   rtol=1e-14)


def test_objective_convex_and_argmin():
    sp = default_spectrum(64)
    from diffsched.spectrum import gamma_star
    g = gamma_star(sp)
    for x in np.geomspace(1e-3 * g, 1e3 * g, 200):
        assert asy.fd_second_derivative(lambda v: asy.objective_J_gamma(sp, v), float(x)) > 0
    best, grid = asy.log_grid_argmin(lambda v: asy.objective_J_gamma(sp, v), g / 50, g * 50, 2048)
    assert abs(math.log(best / g)) <= math.log(grid[1] / grid[0])


def test_loss_gamma_proportional_to_objective():
    # sum E1(gamma)^2 in the VP limit is (pi^2/16)^2 (J(gamma) + 2k)
    sp = default_spectrum(10)
    for g in (0.05, 0.5, 5.0):
        np.testing.assert_allclose(asy.loss_gamma(sp, g),
                                   (math.pi ** 2 / 16) ** 2 * (asy.objective_J_gamma(sp, g) + 2 * sp.k),
                                   rtol=1e-13)


def test_ve_tangent_law_examples():
    tr = asy.ve_tangent_law(1.0, 1.0)
    np.testing.assert_allclose(tr.eta(0.5), math.tan(math.pi / 8), rtol=1e-15)
    assert round(tr.eta(0.5), 5) == 0.41421
    assert asy.ve_tangent_law(3.0, 80.0).eta(1.0) == 80.0
    vp = asy.tangent_trajectory(2.0)
    t = np.linspace(0.0, 0.95, 20)
    gaps = [max(abs(asy.ve_tangent_law(2.0, sm).eta(x) - vp.eta(x)) for x in t) for sm in (1e2, 1e4, 1e6)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_ve_tangent_law_minimises_J():
    mu, smax = 0.8, 20.0
    base = asy.ve_tangent_law(mu, smax)
    j0 = asy.functional_J(base, mu)
    q1 = asy.q_transform(smax, mu)
    for c in (0.05, -0.05, 0.02):
        tr = asy.EtaTrajectory.from_q(lambda t: q1 * t + c * math.sin(math.pi * t),
                                      lambda t: q1 + c * math.pi * math.cos(math.pi * t), mu)
        assert asy.functional_J(tr, mu) > j0


def test_ddpm_e1_diverges_at_origin():
    # sigma ~ sqrt(t) near 0 makes the E1 integrand ~ 1/t
    near = [asy.e1_quadrature(DDPMLinear(), 1.0, t0, 1.0) for t0 in (1e-2, 1e-4, 1e-6)]
    assert near[0] > near[1] > near[2]


def test_slope_loglog_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, intercept, r2 = asy.slope_loglog(x, 3.0 * x ** -2)
    np.testing.assert_allclose([slope, intercept, r2], [-2.0, math.log(3.0), 1.0], atol=1e-12)
