"""
Unit tests for the Monte-Carlo oracle.
"""
import io

import numpy as np
import pytest

from emf_sg import analytic
from emf_sg.config import NetworkConfig
from emf_sg.errors import DomainError
from emf_sg.geometry import NetworkRealization
from emf_sg.schemas import MetricSpec
from emf_sg.simulate import McSamples, measure_realization, nearfield_clip, run_mc, simulate, write_samples
from emf_sg.units import path_gain, ue_tx_power


def single_cell(ue_points, typical=0):
    ue_points = np.asarray(ue_points, dtype=float)
    return NetworkRealization(
        bs_points=np.zeros((1, 2)),
        ue_points=ue_points,
        association=np.zeros(len(ue_points), dtype=np.intp),
        selected_ue=np.array([typical]),
        typical_ue_index=typical,
        window_radius=1000.0,
    )


def test_nearfield_clip():
    assert nearfield_clip(0.0, 0.3) == 0.3
    assert nearfield_clip(0.6, 0.3) == 0.6
    with pytest.raises(DomainError):
        nearfield_clip(-1.0, 0.3)


def test_single_cell_sinr_is_snr(params):
    realization = single_cell([[120.0, 0.0]])
    record = measure_realization(realization, params, np.random.default_rng(5))

    # replay the draws in the same order
    rng = np.random.default_rng(5)
    rng.exponential(size=0)
    h0_ul = rng.exponential()
    rng.exponential(size=0)
    h0_dl = rng.exponential()
    rng.exponential(size=0)
    h_exp_dl = rng.exponential(size=1)

    s_ul = ue_tx_power(120.0, params) * params.g_b * path_gain("ul", 120.0, params) * h0_ul
    s_dl = params.p_d * path_gain("dl", 120.0, params)
    assert record.sinr_ul == pytest.approx(s_ul / params.noise_ul, rel=1e-12)
    assert record.sinr_dl == pytest.approx(s_dl * h0_dl / params.noise_dl, rel=1e-12)
    assert record.exp_ul_w == 0.0
    assert record.exp_dl_w == pytest.approx(s_dl * h_exp_dl[0], rel=1e-12)
    assert record.r0_m == pytest.approx(120.0)


def test_nearfield_exposure_is_clipped(params):
    # second UE on the same circle around the BS, so its transmit power is unchanged
    def exposure(chord):
        theta = 2 * np.arcsin(chord / 200.0)
        points = [[100.0, 0.0], [100.0 * np.cos(theta), 100.0 * np.sin(theta)]]
        return measure_realization(single_cell(points), params, np.random.default_rng(9)).exp_ul_w

    assert exposure(0.1) == pytest.approx(exposure(params.r_e), rel=1e-9)
    assert exposure(0.6) < exposure(params.r_e)


def test_nearfield_exposure_can_be_excluded(params):
    excluded = params.model_copy(update={"near_field": "exclude"})
    theta = 2 * np.arcsin(0.1 / 200.0)
    points = [[100.0, 0.0], [100.0 * np.cos(theta), 100.0 * np.sin(theta)]]
    assert measure_realization(single_cell(points), excluded, np.random.default_rng(9)).exp_ul_w == 0.0
    assert measure_realization(single_cell(points), params, np.random.default_rng(9)).exp_ul_w > 0.0


def test_fading_has_unit_mean():
    draws = np.random.default_rng(0).exponential(size=100_000)
    assert abs(draws.mean() - 1.0) < 3.0 / np.sqrt(len(draws))


def test_simulation_independent_of_threads(small_params):
    one = simulate(small_params, 12, seed=4, threads=1, chunk_size=3)
    four = simulate(small_params, 12, seed=4, threads=4, chunk_size=3)
    np.testing.assert_array_equal(one.sinr_ul, four.sinr_ul)
    np.testing.assert_array_equal(one.exp_dl_w, four.exp_dl_w)
    assert one.n_rejected == four.n_rejected
    other = simulate(small_params, 12, seed=5, threads=1, chunk_size=3)
    assert not np.array_equal(one.exp_ul_w, other.exp_ul_w)


def test_realization_measurements_are_positive(small_params):
    samples = simulate(small_params, 6, seed=8, threads=1)
    assert np.all(samples.exp_dl_w > 0)
    assert np.all(samples.dl_coupled_w > 0)
    assert np.all(samples.r0_m > 0)


def make_samples(**overrides):
    base = dict(
        sinr_ul=np.array([0.5, 2.0, 3.0, 4.0]),
        sinr_dl=np.array([5.0, 0.1, 3.0, 4.0]),
        exp_ul_w=np.array([1e-9, 2e-9, 3e-9, 4e-9]),
        exp_dl_w=np.array([1e-7, 2e-7, 3e-7, 4e-7]),
        r0_m=np.array([10.0, 20.0, 30.0, 40.0]),
        dl_coupled_w=np.array([1e-7, 2e-7, 3e-7, 4e-7]),
        n_rejected=1,
        seed=0,
    )
    base.update(overrides)
    return McSamples(**base)


def test_estimates_and_half_widths():
    samples = make_samples()
    coverage = samples.estimate(MetricSpec(metric="coverage-ul", thresholds=[1.0, 3.5]))
    assert coverage.kind == "ccdf"
    assert coverage.values == [0.75, 0.25]
    assert coverage.half_width_95[0] == pytest.approx(1.96 * np.sqrt(0.75 * 0.25 / 4))
    assert coverage.n_rejected == 1

    cdf = samples.estimate(MetricSpec(metric="cdf-exposure-total", thresholds=[2.5e-7]))
    assert cdf.values == [0.5]

    mean = samples.estimate(MetricSpec(metric="mean-exposure-ul"))
    assert mean.values[0] == pytest.approx(2.5e-9)
    assert mean.half_width_95[0] == pytest.approx(1.96 * np.std(samples.exp_ul_w, ddof=1) / 2.0)

    joint = samples.estimate(MetricSpec(metric="joint-uec", t_cov_ul=1.0, t_exp=3.5e-9))
    assert joint.kind == "joint-prob"
    assert joint.values == [0.5]


def test_conditional_estimate_uses_covered_realizations():
    samples = make_samples()
    spec = MetricSpec(metric="conditional-emp-udc", t_cov_ul=1.0, t_cov_dl=1.0, t_exp=3.5e-7)
    # covered realizations: indices 2 and 3; total power below T_e only for index 2
    assert samples.estimate(spec).values == [0.5]
    strict = MetricSpec(metric="conditional-emp-udc", t_cov_ul=10.0, t_cov_dl=1.0, t_exp=1.0)
    with pytest.raises(DomainError):
        samples.estimate(strict)


def test_single_realization_gives_step_cdf(small_params):
    estimates = run_mc(small_params, [MetricSpec(metric="cdf-exposure-dl", thresholds=[1e-12, 1e3])],
                       n=1, seed=2, threads=1)
    assert estimates["cdf-exposure-dl"].values == [0.0, 1.0]
    assert estimates["cdf-exposure-dl"].half_width_95 == [0.0, 0.0]


def test_write_samples():
    out = io.StringIO()
    assert write_samples(make_samples(), out) == 4
    lines = out.getvalue().splitlines()
    assert lines[0] == "realization_id,sinr_ul,sinr_dl,exp_ul_w,exp_dl_w,r0_m"
    assert lines[1] == "0,0.5,5,1e-09,1e-07,10"


@pytest.mark.slow
def test_mean_dl_exposure_matches_closed_form(small_params):
    samples = simulate(small_params, 100_000, seed=17)
    estimate = samples.mean(samples.exp_dl_w)
    # neighbours of the typical cell sit denser than a PPP beyond R0
    assert estimate.values[0] == pytest.approx(analytic.mean_dl_exposure(small_params), rel=0.2)


@pytest.fixture(scope="module")
def capped_params():
    # epsilon 0 with P0 above the cap: every UE transmits at P_max
    return NetworkConfig(tau_m=2000.0, r_e_m=20.0, epsilon=0.0, p_u_0_dbm=30.0).to_params()


@pytest.mark.slow
@pytest.mark.parametrize("near_field", ["clip", "exclude"])
def test_mean_ul_exposure_matches_closed_form(capped_params, near_field):
    params = capped_params.model_copy(update={"near_field": near_field})
    samples = simulate(params, 40_000, seed=23)
    estimate = samples.mean(samples.exp_ul_w)
    assert estimate.values[0] == pytest.approx(analytic.mean_ul_exposure(params), rel=0.05)


@pytest.fixture(scope="module")
def sparse_samples():
    params = NetworkConfig(lambda_b_per_km2=3.2, lambda_u_per_km2=32.0, tau_m=3000.0).to_params()
    return params, simulate(params, 20_000, seed=29)


@pytest.mark.slow
def test_coverage_matches_closed_form(sparse_samples):
    params, samples = sparse_samples
    t = 10 ** (np.array([-10.0, -5.0, 0.0, 5.0, 10.0]) / 10)
    mc_dl = (samples.sinr_dl[:, None] > t[None, :]).mean(axis=0)
    np.testing.assert_allclose(analytic.coverage_dl(t, params).values, mc_dl, atol=0.02)
    mc_ul = np.mean(samples.sinr_ul > 1.0)
    assert analytic.coverage_ul([1.0], params).values[0] == pytest.approx(mc_ul, abs=0.02)


@pytest.mark.slow
def test_dl_exposure_cdf_matches_closed_form(sparse_samples):
    params, samples = sparse_samples
    levels = np.linspace(0.05, 0.95, 10)
    thresholds = np.quantile(samples.exp_dl_w, levels)
    analytic_cdf = np.asarray(analytic.cdf_exposure("dl", thresholds, params).values)
    assert np.max(np.abs(analytic_cdf - levels)) <= 0.03


@pytest.mark.slow
def test_median_below_mean_ul_exposure(small_params):
    samples = simulate(small_params, 2_000, seed=21)
    assert np.median(samples.exp_ul_w) <= np.mean(samples.exp_ul_w)


if __name__ == "__main__":
    pytest.main([__file__])
