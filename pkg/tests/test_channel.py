import numpy as np
import pytest
from scipy import integrate

from hapnet import channel
from hapnet.channel import (
    FsoLinkState,
    FsoParams,
    RfParams,
    approx_link_power,
    attenuation,
    fso_power_for_rate,
    fso_rate,
    free_space_path_loss,
    kruse_coefficient,
    link_gain_factor,
    pointing_pdf,
    pointing_support_max,
    sample_fso_links,
    sample_pointing,
    sample_rf,
    sample_turbulence,
    turbulence_cdf,
    turbulence_pdf,
)
from hapnet.topology import GeometryConfig, build_topology


class TestKruse:
    def test_clear_air(self):
        assert kruse_coefficient(60.0) == 1.6

    def test_mid_visibility(self):
        assert kruse_coefficient(10.0) == 1.3

    def test_low_visibility(self):
        assert kruse_coefficient(1.0) == 0.585 * 1.0 ** (1.0 / 3.0)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            kruse_coefficient(0.0)


class TestAttenuation:
    def test_zero_distance(self, fso_params):
        assert attenuation(0.0, fso_params) == 1.0

    def test_strictly_decreasing(self, fso_params):
        assert attenuation(1_000.0, fso_params) > attenuation(2_000.0, fso_params)

    def test_against_high_precision_oracle(self):
        # arbitrary-precision evaluation of the same closed form
        import mpmath

        mpmath.mp.dps = 50
        params = FsoParams(visibility_km=60.0, wavelength_nm=1550.0)
        expected = mpmath.exp(
            -(mpmath.mpf("0.0009") / 60) * (mpmath.mpf(1550) / 550) ** mpmath.mpf("1.6") * 1000
        )
        got = attenuation(1_000.0, params)
        assert abs(got - float(expected)) <= 1e-12 * float(expected)


class TestTurbulence:
    def test_plain_weibull_reduction(self):
        # with phi = 1 the law is plain Weibull: u = 1 - e^-1 maps to the scale
        params = FsoParams(weibull_phi=1.0, weibull_varsigma=1.25, weibull_scale=0.94)

        class FixedRng:
            def uniform(self, size=None):
                return 1.0 - np.exp(-1.0)

        h = sample_turbulence(params, FixedRng())
        assert h == pytest.approx(params.weibull_scale, rel=1e-12)

    def test_left_tail(self, fso_params):
        class TinyRng:
            def uniform(self, size=None):
                return 1e-300

        assert sample_turbulence(fso_params, TinyRng()) >= 0.0

    def test_density_normalizes(self, fso_params):
        total, err = integrate.quad(lambda h: turbulence_pdf(h, fso_params), 0.0, np.inf)
        assert abs(total - 1.0) <= 1e-6

    def test_cdf_matches_pdf(self, fso_params):
        total, _ = integrate.quad(lambda h: turbulence_pdf(h, fso_params), 0.0, 2.0)
        assert total == pytest.approx(float(turbulence_cdf(2.0, fso_params)), abs=1e-8)

    def test_monte_carlo_mean_matches_quadrature(self, fso_params, rng):
        mean_q, _ = integrate.quad(lambda h: h * turbulence_pdf(h, fso_params), 0.0, np.inf)
        draws = sample_turbulence(fso_params, rng, size=200_000)
        assert abs(draws.mean() - mean_q) <= 0.01 * mean_q


class TestPointing:
    def test_support(self, fso_params, rng):
        upsilon = 50_000.0
        h_max = pointing_support_max(fso_params, upsilon)
        draws = sample_pointing(fso_params, upsilon, rng, size=10_000)
        assert np.all(draws >= 0.0) and np.all(draws < h_max)

    def test_right_limit(self, fso_params):
        class OneRng:
            def uniform(self, size=None):
                return 1.0 - 1e-12

        upsilon = 50_000.0
        h = sample_pointing(fso_params, upsilon, OneRng())
        assert h == pytest.approx(pointing_support_max(fso_params, upsilon), rel=1e-9)

    def test_density_normalizes(self, fso_params):
        upsilon = 50_000.0
        h_max = pointing_support_max(fso_params, upsilon)
        total, _ = integrate.quad(lambda h: pointing_pdf(h, fso_params, upsilon), 0.0, h_max)
        assert abs(total - 1.0) <= 1e-6

    def test_rejects_zero_distance(self, fso_params, rng):
        with pytest.raises(ValueError):
            sample_pointing(fso_params, 0.0, rng)


class TestPowerRateMaps:
    def test_zero_rate_zero_power(self, fso_params):
        assert fso_power_for_rate(0.0, 0.5, 2.0, fso_params) == 0.0

    def test_round_trip(self, fso_params, rng):
        for _ in range(200):
            gamma = rng.uniform(1e5, 5e9)
            tau = rng.uniform(0.05, 1.0)
            g = rng.uniform(1e-4, 1e4)
            p = fso_power_for_rate(gamma, tau, g, fso_params)
            back = fso_rate(p, tau, g, fso_params)
            assert abs(back - gamma) <= 1e-9 * gamma

    def test_longer_fraction_needs_less_power_at_high_snr(self, fso_params):
        # power decreases in tau once gamma exceeds ~B/ln2 (high-SNR regime)
        gamma, g = 2.0 * fso_params.bandwidth_hz, 3.0
        assert fso_power_for_rate(gamma, 1.0, g, fso_params) < fso_power_for_rate(gamma, 0.5, g, fso_params)

    def test_infeasible_rate_without_time(self, fso_params):
        with pytest.raises(ValueError):
            fso_power_for_rate(1e6, 0.0, 1.0, fso_params)


class TestApproxPower:
    def test_zero_branches(self, fso_params):
        assert approx_link_power(0.0, 0.5, 2.0, fso_params) == 0.0
        assert approx_link_power(1e6, 0.0, 2.0, fso_params) == 0.0

    def test_midpoint_convexity(self, fso_params, rng):
        B = fso_params.bandwidth_hz
        for _ in range(500):
            g = rng.uniform(0.01, 100.0)
            g1, t1 = rng.uniform(0.01, 3.0) * B, rng.uniform(0.01, 1.0)
            g2, t2 = rng.uniform(0.01, 3.0) * B, rng.uniform(0.01, 1.0)
            mid = approx_link_power((g1 + g2) / 2, (t1 + t2) / 2, g, fso_params)
            avg = (approx_link_power(g1, t1, g, fso_params) + approx_link_power(g2, t2, g, fso_params)) / 2
            assert mid <= avg + 1e-9

    def test_high_snr_agreement(self, fso_params, rng):
        for _ in range(200):
            tau = rng.uniform(0.1, 1.0)
            g = rng.uniform(0.1, 10.0)
            gamma = rng.uniform(0.5, 3.0) * fso_params.bandwidth_hz
            exact = fso_power_for_rate(gamma, tau, g, fso_params)
            if g * (exact / tau) ** 2 < 100.0:
                continue
            approx = approx_link_power(gamma, tau, g, fso_params)
            assert abs(approx - exact) <= 0.01 * exact


class TestComposite:
    def test_gain_product_and_g(self, fso_params, rng):
        topo = build_topology(GeometryConfig(n_haps=3, n_dcs=1, n_users=0), rng)
        state = sample_fso_links(topo, fso_params, rng)
        assert np.allclose(state.h, state.h_al * state.h_at * state.h_pl, rtol=0, atol=0)
        assert np.allclose(state.g, link_gain_factor(state.h, fso_params), rtol=1e-15)

    def test_reproducible_under_seed(self, fso_params):
        topo = build_topology(GeometryConfig(n_haps=3, n_dcs=1, n_users=0), np.random.default_rng(7))
        a = sample_fso_links(topo, fso_params, np.random.default_rng(99))
        b = sample_fso_links(topo, fso_params, np.random.default_rng(99))
        assert np.array_equal(a.h, b.h) and np.array_equal(a.g, b.g)


class TestRf:
    def make_topo(self, seed=3):
        return build_topology(GeometryConfig(n_haps=2, n_dcs=1, n_users=8), np.random.default_rng(seed))

    def test_default_rician_factor(self):
        assert RfParams().rician_k == 5.0

    def test_pure_los_limit(self, rng):
        topo = self.make_topo()
        params = RfParams(n_antennas=4, rician_k=1e12)
        state = sample_rf(topo, params, rng)
        for u in range(topo.n_users):
            mags = np.abs(state.h[u]) / np.sqrt(state.path_loss[u])
            assert np.allclose(mags, 1.0, atol=1e-5)

    def test_mean_power_matches_path_loss(self):
        topo = self.make_topo()
        params = RfParams(n_antennas=4, rician_k=5.0)
        rng = np.random.default_rng(0)
        norms = np.zeros(topo.n_users)
        n_draws = 3000
        for _ in range(n_draws):
            state = sample_rf(topo, params, rng)
            norms += np.linalg.norm(state.h, axis=1) ** 2
        norms /= n_draws
        expected = params.n_antennas * free_space_path_loss(
            np.linalg.norm(topo.user_pos - topo.hap_pos[topo.user_hap], axis=1), params.carrier_hz
        )
        assert np.all(np.abs(norms - expected) <= 0.02 * expected)

    def test_noise_power_default_and_override(self):
        params = RfParams(bandwidth_hz=10e6, noise_figure_db=7.0)
        expected = 1.380649e-23 * 290.0 * 10e6 * 10 ** 0.7
        assert params.noise_power() == pytest.approx(expected, rel=1e-12)
        assert RfParams(sigma2_rf=1e-13).noise_power() == 1e-13


def test_fso_params_validation():
    with pytest.raises(ValueError):
        FsoParams(visibility_km=-1.0).validate()
    FsoParams().validate()


def test_fso_state_invariant_bounds(fso_params, rng):
    topo = build_topology(GeometryConfig(n_haps=4, n_dcs=2, n_users=0), rng)
    state = sample_fso_links(topo, fso_params, rng)
    h_max = pointing_support_max(fso_params, topo.link_distances())
    assert np.all(state.h_al > 0) and np.all(state.h_al <= 1.0)
    assert np.all(state.h_at > 0)
    assert np.all(state.h_pl >= 0) and np.all(state.h_pl < h_max)
    assert np.all(state.g >= 0)
