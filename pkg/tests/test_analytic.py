"""
Unit tests for the closed-form exposure and coverage metrics.
"""
import numpy as np
import pytest
from scipy import integrate

from emf_sg import analytic
from emf_sg.errors import DomainError
from emf_sg.geometry import serving_distance_cdf, serving_distance_pdf
from emf_sg.schemas import MetricSpec
from emf_sg.units import path_gain, ue_tx_power


def radial_quad(f, lo, hi, breaks=()):
    """int_lo^hi f(r) dr over log-spaced pieces."""
    edges = np.unique(np.concatenate(([lo, hi], np.geomspace(lo, hi, 40), list(breaks))))
    edges = edges[(edges >= lo) & (edges <= hi)]
    return sum(integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]))


def test_mean_dl_interference_matches_campbell(params):
    r0 = 150.0
    lam = params.derived.lambda_r
    expected = 2 * np.pi * lam * params.p_d * radial_quad(
        lambda r: path_gain("dl", r, params) * r, r0, params.tau)
    assert analytic.mean_dl_interference(r0, params) == pytest.approx(expected, rel=1e-8)


def test_mean_dl_exposure_adds_serving_bs(params):
    lo, hi, lam_b = params.r_e, params.tau, params.lambda_b
    mass = serving_distance_cdf(hi, lam_b) - serving_distance_cdf(lo, lam_b)
    serving = radial_quad(
        lambda r: params.p_d * path_gain("dl", r, params) * serving_distance_pdf(r, lam_b), lo, hi)
    # an active BS at rho counts when r_e <= R0 <= rho
    beyond = radial_quad(
        lambda rho: 2 * np.pi * params.derived.lambda_r * params.p_d * path_gain("dl", rho, params) * rho
        * (serving_distance_cdf(rho, lam_b) - serving_distance_cdf(lo, lam_b)), lo, hi)
    assert analytic.mean_dl_exposure(params) == pytest.approx((serving + beyond) / mass, rel=1e-3)
    assert analytic.mean_exposure("dl", params) == analytic.mean_dl_exposure(params)


def test_mean_exposure_total_and_unknown_link(params):
    total = analytic.mean_exposure("total", params)
    assert total == pytest.approx(analytic.mean_dl_exposure(params) + analytic.mean_ul_exposure(params))
    with pytest.raises(DomainError):
        analytic.mean_exposure("sideways", params)


def test_near_field_clip_adds_inner_disc(params):
    excluded = params.model_copy(update={"near_field": "exclude"})
    disc = (np.pi * params.lambda_u * params.r_e ** 2 * path_gain("ul-ue", params.r_e, params)
            * analytic.mean_ue_power(params))
    clipped = analytic.mean_ul_exposure(params)
    assert clipped == pytest.approx(analytic.mean_ul_exposure(excluded) + disc, rel=1e-12)
    # the disc carries (alpha - 2) / 2 of the annulus when tau >> r_e
    ratio = disc / analytic.mean_ul_exposure(excluded)
    assert ratio == pytest.approx((params.alpha - 2) / 2, rel=1e-3)


def test_mean_ue_power_matches_quadrature(params):
    r_m = params.derived.r_m
    expected = radial_quad(lambda r: ue_tx_power(r, params) * serving_distance_pdf(r, params.lambda_b),
                           params.r_e, params.tau, breaks=(r_m,))
    assert analytic.mean_ue_power(params) == pytest.approx(expected, rel=1e-8)
    assert analytic.mean_ue_power(params, "inner") != pytest.approx(expected, rel=1e-3)
    with pytest.raises(DomainError):
        analytic.mean_ue_power(params, "other")


def test_mean_ul_exposure_below_dl(params):
    mean_ul = analytic.mean_ul_exposure(params)
    assert 0 < mean_ul < analytic.mean_dl_exposure(params)
    doubled = params.model_copy(update={"lambda_u": 2 * params.lambda_u})
    # linear in the UE density at fixed per-UE power law
    assert analytic.mean_ul_exposure(doubled) == pytest.approx(2 * mean_ul, rel=1e-12)


def test_dl_exposure_cf_slope_is_mean(params):
    mean = analytic.mean_dl_exposure(params)
    q = 1e-6 / mean
    slope = (analytic.cf_dl_exposure(q, params) - 1.0) / (1j * q)
    assert slope.real == pytest.approx(mean, rel=1e-3)


def test_dl_exposure_cf_bounded(params):
    mean = analytic.mean_dl_exposure(params)
    phi = analytic.cf_dl_exposure(np.geomspace(1e-2, 1e3, 8) / mean, params)
    assert np.all(np.abs(phi) <= 1.0 + 1e-9)
    assert abs(phi[-1]) < abs(phi[0])


@pytest.mark.parametrize("near_field", ["clip", "exclude"])
def test_ul_exposure_cf_slope_is_mean(params, near_field):
    params = params.model_copy(update={"near_field": near_field})
    mean = analytic.mean_ul_exposure(params)
    q = 1e-9 / mean
    slope = (analytic.cf_ul_exposure(q, params)[0] - 1.0) / (1j * q)
    assert slope.real == pytest.approx(mean, rel=1e-3)


def test_ul_exposure_cf_bounded(params):
    q = np.geomspace(1e2, 1e12, 25)
    phi = analytic.cf_ul_exposure(q, params)
    assert np.all(np.abs(phi) <= 1.0 + 1e-12)
    no_users = params.model_copy(update={"lambda_u": 0.0})
    np.testing.assert_array_equal(analytic.cf_ul_exposure(q, no_users), np.ones_like(q))


def test_laplace_dl_interference_matches_quadrature(params):
    r0 = 150.0
    lam = params.derived.lambda_r
    s = 1.0 / (params.p_d * path_gain("dl", r0, params))

    def integrand(r):
        x = s * params.p_d * path_gain("dl", r, params)
        return x / (1.0 + x) * r

    expected = np.exp(-2 * np.pi * lam * radial_quad(integrand, r0, params.tau))
    assert analytic.laplace_dl_interference(s, r0, params) == pytest.approx(expected, rel=1e-7)
    assert analytic.laplace_dl_interference(0.0, r0, params) == 1.0
    with pytest.raises(DomainError):
        analytic.laplace_dl_interference(s, 0.1, params)


def test_laplace_ul_interference_is_decreasing(params):
    s = np.geomspace(1e8, 1e13, 6)
    values = analytic.laplace_ul_interference(s, 100.0, params)
    assert np.all(values <= 1.0)
    assert np.all(values > 0.0)
    assert np.all(np.diff(values) <= 0)
    assert analytic.laplace_ul_interference(0.0, 100.0, params) == 1.0


def test_cdf_exposure_curves(params):
    for link in ("ul", "dl", "total"):
        mean = analytic.exposure_cf(link, params).scale
        curve = analytic.cdf_exposure(link, mean * np.geomspace(1e-3, 1e2, 8), params)
        assert curve.metric == f"cdf-exposure-{link}"
        values = np.asarray(curve.values)
        assert np.all((values >= 0) & (values <= 1))
        assert np.all(np.diff(values) >= 0)
        assert values[-1] > 0.9


def test_total_exposure_scale_is_sum_of_means(params):
    total = analytic.exposure_cf("total", params)
    expected = analytic.mean_ul_exposure(params) + analytic.mean_dl_exposure(params)
    assert total.scale == pytest.approx(expected)
    with pytest.raises(DomainError):
        analytic.exposure_cf("sideways", params)


def test_median_exposure(params):
    median = analytic.median_exposure("ul", params)
    assert analytic.cdf_exposure("ul", [median], params).values[0] == pytest.approx(0.5, abs=1e-4)
    # heavy right tail
    assert median < analytic.mean_ul_exposure(params)


def test_exposure_thresholds_must_be_positive(params):
    with pytest.raises(DomainError):
        analytic.cdf_exposure("dl", [0.0, 1e-6], params)


def test_coverage_curves(params):
    t = 10 ** (np.arange(-40, 21, 10) / 10)
    for curve in (analytic.coverage_ul(t, params), analytic.coverage_dl(t, params)):
        values = np.asarray(curve.values)
        assert curve.kind == "ccdf"
        assert np.all(np.diff(values) <= 0)
        assert values[0] > 0.9
        assert values[-1] < values[0]


def test_coverage_dl_conditional_without_noise(params):
    quiet = params.model_copy(update={"noise_dl": 0.0})
    r0 = np.array([50.0, 400.0])
    t = np.array([1.0])
    s = t[:, None] / (quiet.p_d * path_gain("dl", r0, quiet))[None, :]
    np.testing.assert_allclose(analytic.coverage_dl_conditional(t, r0, quiet),
                               analytic.laplace_dl_interference(s, r0[None, :], quiet))


def test_coverage_dl_averages_over_uniform_user_distance(params):
    t = np.array([0.5, 2.0])
    r0, w0 = analytic.serving_nodes(params.r_e, params.tau, params.lambda_b, beta=analytic.UNIFORM_USER_BETA)
    expected = analytic.coverage_dl_conditional(t, r0, params) @ w0
    np.testing.assert_allclose(analytic.coverage_dl(t, params).values, expected, rtol=1e-12)


def test_coverage_dl_interference_limited_closed_form(params):
    quiet = params.model_copy(update={"z": 0.0, "noise_dl": 0.0})
    a = quiet.alpha
    lam_ratio = quiet.derived.lambda_r / quiet.lambda_b

    def rho(t):
        tail, _ = integrate.quad(lambda u: 1.0 / (1.0 + u ** (a / 2)), t ** (-2 / a), np.inf)
        return t ** (2 / a) * tail

    t = np.array([1.0, 4.0])
    expected = [1.0 / (1.0 + lam_ratio * rho(x)) for x in t]
    np.testing.assert_allclose(analytic.coverage_dl(t, quiet).values, expected, rtol=1e-3)


def test_joint_uec_is_product_of_marginals(params):
    t_cov, t_exp = 1.0, 1e-8
    joint = analytic.joint_uec(t_cov, t_exp, params)
    exposure = analytic.cdf_exposure("ul", [t_exp], params).values[0]
    coverage = analytic.coverage_ul([t_cov], params).values[0]
    assert joint == pytest.approx(exposure * coverage, abs=1e-9)


def test_joint_emp_udc_bounds(params):
    t_cov_ul, t_cov_dl = 1.0, 2.0
    t_low, t_high = 1e-7, 1e-6
    low = analytic.joint_emp_udc(t_cov_ul, t_low, t_cov_dl, params)
    high = analytic.joint_emp_udc(t_cov_ul, t_high, t_cov_dl, params)
    r0, w0 = analytic.serving_nodes(params.r_e, params.tau, params.lambda_b)
    both = np.sum(analytic.coverage_ul_conditional([t_cov_ul], r0, params)[0]
                  * analytic.coverage_dl_conditional([t_cov_dl], r0, params)[0] * w0)
    assert 0.0 <= low <= high + 1e-4
    assert high <= both + 1e-4
    assert analytic.joint_emp_udc(t_cov_ul, 0.0, t_cov_dl, params) == 0.0


def test_conditional_emp_udc_divides_by_coverages(params):
    value = analytic.conditional_emp_udc(1e-6, 1.0, 2.0, params)
    joint = analytic.joint_emp_udc(1.0, 1e-6, 2.0, params)
    cov_ul = analytic.coverage_ul([1.0], params).values[0]
    cov_dl = analytic.coverage_dl([2.0], params).values[0]
    assert value >= 0.0
    assert value == pytest.approx(joint / (cov_ul * cov_dl), rel=1e-12)


def test_evaluate_scalar_metric(params):
    curve = analytic.evaluate(MetricSpec(metric="mean-exposure-dl"), params)
    assert curve.kind == "value"
    assert curve.axis == [params.lambda_b]
    assert curve.values[0] == pytest.approx(analytic.mean_dl_exposure(params))
    spec = MetricSpec(metric="joint-uec", t_cov_ul=1.0, t_exp=1e-8)
    assert analytic.evaluate(spec, params).kind == "prob"


def test_evaluate_ul_mean_cap_mass(params):
    outer = analytic.evaluate(MetricSpec(metric="mean-exposure-ul"), params).values[0]
    inner = analytic.evaluate(MetricSpec(metric="mean-exposure-ul", cap_mass="inner"), params).values[0]
    assert outer == pytest.approx(analytic.mean_ul_exposure(params, "outer"))
    assert inner == pytest.approx(analytic.mean_ul_exposure(params, "inner"))
    assert inner != pytest.approx(outer, rel=1e-3)


if __name__ == "__main__":
    pytest.main([__file__])
