"""
Unit tests for the outage threshold and the CLT, CLT-BC and CLT-IID estimators.
"""
import math

import numpy as np
import pytest
from scipy import stats

from fasris.corr import PortGeometry
from fasris.moments import RHO0, EtaCoefficients, LinkBudget, gamma_moments
from fasris.outage import (
    DegenerateBlockModelError,
    Estimator,
    EstimatorSettings,
    RadioParams,
    TruncationPolicy,
    block_conditional_cdf,
    block_correlation_cdf,
    iid_block_cdf,
    link_threshold,
    outage_clt,
    outage_clt_bc,
    outage_clt_iid,
    outage_threshold,
    resolve_block_spec,
)
from fasris.quad import MvnProblem, chebyshev_rule, mvn_cdf

GAIN = 200.0**-2
PORT_GRID = tuple(range(5, 55, 5))


def _univariate(budget: LinkBudget, radio: RadioParams) -> float:
    moments = gamma_moments(budget)
    return stats.norm.cdf((outage_threshold(radio) - moments.mean) / moments.std)


class TestThreshold:

    def test_reference_value(self, reference_radio):
        assert outage_threshold(reference_radio) == pytest.approx(math.sqrt(7e-7), rel=1e-12)
        assert outage_threshold(reference_radio) == pytest.approx(8.3666e-4, abs=1e-8)

    def test_small_rate_limit(self):
        assert outage_threshold(RadioParams(0.1, 1e-8, 1e-12)) < 1e-9

    def test_doubling_power(self, reference_radio):
        doubled = RadioParams(0.2, 1e-8, 3.0)
        assert outage_threshold(doubled) == pytest.approx(outage_threshold(reference_radio) / math.sqrt(2))

    def test_mean_mode(self, reference_budget):
        radio = RadioParams(0.1, 1e-8, 3.0, threshold_mode="mean", threshold_scale=1.5)
        assert link_threshold(radio, reference_budget) == pytest.approx(1.5 * gamma_moments(reference_budget).mean)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="transmit_power"):
            RadioParams(0.0, 1e-8, 3.0)
        with pytest.raises(ValueError, match="threshold_mode"):
            RadioParams(0.1, 1e-8, 3.0, threshold_mode="median")


class TestSettings:

    def test_mu_bounds(self):
        with pytest.raises(ValueError, match="mu"):
            EstimatorSettings(mu=1.0)

    def test_nodes_bounds(self):
        with pytest.raises(ValueError, match="chebyshev_nodes"):
            EstimatorSettings(chebyshev_nodes=0)

    def test_fixed_truncation_needs_width(self):
        with pytest.raises(ValueError, match="half_width"):
            TruncationPolicy(mode="fixed")

    def test_mu_mode_choices(self):
        assert EstimatorSettings().mu_mode == "matched"
        with pytest.raises(ValueError, match="mu_mode"):
            EstimatorSettings(mu_mode="adaptive")


class TestBlockConditionalCdf:

    def setup_method(self):
        self.moments = gamma_moments(LinkBudget(40, GAIN, GAIN))

    def test_large_threshold(self):
        assert block_conditional_cdf(1.0, 0.0, 0.0, self.moments, RHO0, 0.88) == pytest.approx(1.0)

    def test_conditional_median(self):
        x_d, x_0 = 1e-5, -2e-5
        y = x_d + x_0 + self.moments.mean
        assert block_conditional_cdf(y, x_d, x_0, self.moments, RHO0, 0.88) == pytest.approx(0.5, abs=1e-12)

    def test_matches_gaussian_cdf(self):
        """Conditional law is N(x_d + x_0 + E, V (1 - rho1))."""
        y, x_d, x_0 = 8.5e-4, 2e-5, -1e-5
        scale = math.sqrt(self.moments.variance * (1 - 0.88))
        expected = stats.norm.cdf(y, loc=x_d + x_0 + self.moments.mean, scale=scale)
        assert block_conditional_cdf(y, x_d, x_0, self.moments, RHO0, 0.88) == pytest.approx(expected, abs=1e-12)

    def test_nondecreasing_in_y(self):
        y = np.linspace(5e-4, 1.1e-3, 50)
        values = block_conditional_cdf(y, 0.0, 0.0, self.moments, RHO0, 0.88)
        assert np.all(np.diff(values) >= 0)


class TestKernels:

    def setup_method(self):
        self.moments = gamma_moments(LinkBudget(40, GAIN, GAIN))
        self.rule = chebyshev_rule(100)

    def test_single_block_of_one_is_univariate(self):
        y = 8.3666e-4
        coeffs = EtaCoefficients(RHO0, 0.883)
        expected = stats.norm.cdf((y - self.moments.mean) / self.moments.std)
        value = block_correlation_cdf(y, self.moments, coeffs, [1], self.rule)
        assert value == pytest.approx(expected, abs=1e-4)

    def test_singleton_blocks_match_iid_near_rho0(self):
        y = 8.3666e-4
        coeffs = EtaCoefficients(RHO0, RHO0 + 1e-6)
        bc = block_correlation_cdf(y, self.moments, coeffs, [1, 1, 1, 1], self.rule)
        iid = iid_block_cdf(y, self.moments, RHO0, 4, self.rule)
        assert bc == pytest.approx(iid, abs=1e-4)

    def test_degenerate_block_model(self):
        with pytest.raises(DegenerateBlockModelError):
            block_correlation_cdf(8e-4, self.moments, EtaCoefficients(0.5, 0.5), [2], self.rule)

    def test_iid_single_block_is_univariate(self):
        y = 8.3666e-4
        expected = stats.norm.cdf((y - self.moments.mean) / self.moments.std)
        assert iid_block_cdf(y, self.moments, RHO0, 1, self.rule) == pytest.approx(expected, abs=1e-4)

    def test_iid_independent_medians(self):
        assert iid_block_cdf(self.moments.mean, self.moments, 0.0, 2, self.rule) == pytest.approx(0.25, abs=1e-4)

    def test_iid_decreasing_in_blocks(self):
        values = [iid_block_cdf(8.3666e-4, self.moments, RHO0, d, self.rule) for d in range(1, 7)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_fixed_truncation_agrees_with_adaptive(self):
        y = 8.3666e-4
        coeffs = EtaCoefficients(RHO0, 0.883)
        rule = chebyshev_rule(400)
        fixed = TruncationPolicy(mode="fixed", half_width=2e-3)
        adaptive = block_correlation_cdf(y, self.moments, coeffs, [5, 3], rule)
        windowed = block_correlation_cdf(y, self.moments, coeffs, [5, 3], rule, fixed)
        assert windowed == pytest.approx(adaptive, abs=1e-4)

    @pytest.mark.parametrize("rho1", [0.6, 0.9999])
    def test_matches_dense_block_covariance(self, rho1):
        """Both inner forms (over r_d and over the block maximum) agree with the MVN CDF."""
        y = 8.3666e-4
        sizes = [3, 2]
        labels = np.repeat(np.arange(len(sizes)), sizes)
        corr = np.where(labels[:, None] == labels[None, :], rho1, RHO0)
        np.fill_diagonal(corr, 1.0)
        expected = mvn_cdf(MvnProblem(
            upper_limit=y, mean=np.full(5, self.moments.mean), covariance=self.moments.variance * corr, rng_seed=5,
        ))
        value = block_correlation_cdf(y, self.moments, EtaCoefficients(RHO0, rho1), sizes, self.rule)
        assert abs(value - expected.value) <= 3 * expected.error_estimate + 1e-4


class TestEstimators:

    def test_clt_single_port(self, reference_budget, reference_radio):
        result = outage_clt(PortGeometry(1, 1.0), reference_budget, reference_radio)
        assert result.estimator is Estimator.CLT
        assert result.probability == pytest.approx(_univariate(reference_budget, reference_radio), abs=1e-12)

    def test_clt_two_uncorrelated_ports_match_bivariate_oracle(self, reference_budget, reference_radio):
        moments = gamma_moments(reference_budget)
        y = outage_threshold(reference_radio)
        cov = moments.variance * np.array([[1.0, RHO0], [RHO0, 1.0]])
        expected = stats.multivariate_normal(mean=[moments.mean] * 2, cov=cov).cdf([y, y])
        result = outage_clt(PortGeometry(2, 2.0), reference_budget, reference_radio)
        assert result.probability == pytest.approx(expected, abs=1e-4)

    def test_bc_single_port(self, reference_budget, reference_radio):
        result = outage_clt_bc(PortGeometry(1, 1.0), reference_budget, reference_radio)
        assert result.block_spec.block_sizes == (1,)
        assert result.probability == pytest.approx(_univariate(reference_budget, reference_radio), abs=1e-4)

    def test_iid_single_port(self, reference_budget, reference_radio):
        result = outage_clt_iid(PortGeometry(1, 1.0), reference_budget, reference_radio)
        assert result.probability == pytest.approx(_univariate(reference_budget, reference_radio), abs=1e-4)

    def test_probabilities_in_unit_interval(self, reference_budget, reference_radio):
        geometry = PortGeometry(10, 1.0)
        for estimator in (outage_clt, outage_clt_bc, outage_clt_iid):
            result = estimator(geometry, reference_budget, reference_radio)
            assert 0.0 <= result.probability <= 1.0
            assert result.error_estimate >= 0.0
            assert result.wall_time >= 0.0

    @pytest.mark.parametrize("n", [10, 20, 50])
    def test_bc_quadrature_converged(self, n, reference_budget, reference_radio):
        geometry = PortGeometry(n, 1.0)
        coarse = outage_clt_bc(geometry, reference_budget, reference_radio, EstimatorSettings(chebyshev_nodes=100))
        fine = outage_clt_bc(geometry, reference_budget, reference_radio, EstimatorSettings(chebyshev_nodes=200))
        assert abs(coarse.probability - fine.probability) < 1e-4
        assert coarse.error_estimate < 1e-3

    def test_iid_quadrature_converged(self, reference_budget, reference_radio):
        geometry = PortGeometry(20, 1.0)
        coarse = outage_clt_iid(geometry, reference_budget, reference_radio, EstimatorSettings(chebyshev_nodes=100))
        fine = outage_clt_iid(geometry, reference_budget, reference_radio, EstimatorSettings(chebyshev_nodes=200))
        assert abs(coarse.probability - fine.probability) < 1e-3

    def test_monotone_in_power_and_rate(self, reference_budget):
        geometry = PortGeometry(10, 1.0)
        low_power = RadioParams(0.05, 1e-8, 3.0)
        high_power = RadioParams(0.2, 1e-8, 3.0)
        high_rate = RadioParams(0.05, 1e-8, 3.5)
        for estimator in (outage_clt, outage_clt_bc, outage_clt_iid):
            p_low = estimator(geometry, reference_budget, low_power).probability
            p_high = estimator(geometry, reference_budget, high_power).probability
            p_rate = estimator(geometry, reference_budget, high_rate).probability
            assert p_high <= p_low + 1e-6
            assert p_rate >= p_low - 1e-6

    def test_bc_nonincreasing_in_ports(self, reference_budget, reference_radio):
        values = [
            outage_clt_bc(PortGeometry(n, 1.0), reference_budget, reference_radio).probability
            for n in PORT_GRID
        ]
        assert all(b <= a + 1e-3 for a, b in zip(values, values[1:]))

    def test_bc_nonincreasing_in_aperture(self, reference_budget, reference_radio):
        values = [
            outage_clt_bc(PortGeometry(20, w), reference_budget, reference_radio).probability
            for w in (1.0, 2.0, 3.0, 4.0, 5.0)
        ]
        assert all(b <= a + 1e-3 for a, b in zip(values, values[1:]))

    def test_iid_bounds_bc_from_above(self, reference_budget, reference_radio):
        """Each fitted block contains at least one port with the i.i.d. block law."""
        geometry = PortGeometry(20, 1.0)
        bc = outage_clt_bc(geometry, reference_budget, reference_radio)
        iid = outage_clt_iid(geometry, reference_budget, reference_radio)
        assert bc.probability <= iid.probability + 1e-4


class TestBlockModelAccuracy:
    """CLT-BC against the full surrogate and along the port and aperture sweeps."""

    @pytest.mark.parametrize("n", [5, 10])
    def test_close_to_full_surrogate(self, n, reference_budget, reference_radio):
        geometry = PortGeometry(n, 1.0)
        bc = outage_clt_bc(geometry, reference_budget, reference_radio)
        clt = outage_clt(geometry, reference_budget, reference_radio)
        assert abs(bc.probability - clt.probability) < 0.03

    def test_saturates_in_ports(self, reference_budget, reference_radio):
        values = {
            n: outage_clt_bc(PortGeometry(n, 1.0), reference_budget, reference_radio).probability
            for n in PORT_GRID
        }
        assert abs(values[30] - values[50]) < 0.01
        assert values[5] - values[10] > values[30] - values[50]
        assert values[50] > 0.3

    def test_largest_aperture_gain_within_three_wavelengths(self, reference_budget, reference_radio):
        values = [
            outage_clt_bc(PortGeometry(20, w), reference_budget, reference_radio).probability
            for w in (1.0, 2.0, 3.0, 4.0, 5.0)
        ]
        drops = np.diff(values) * -1.0
        assert int(np.argmax(drops)) <= 1

    def test_fixed_mu_mode_keeps_configured_mu(self, reference_budget, reference_radio):
        geometry = PortGeometry(20, 1.0)
        fixed = outage_clt_bc(geometry, reference_budget, reference_radio, EstimatorSettings(mu_mode="fixed"))
        matched = outage_clt_bc(geometry, reference_budget, reference_radio)
        assert fixed.block_spec.intra_block_mu == 0.9
        assert fixed.block_spec.block_sizes == (10, 7, 2, 1)
        assert matched.block_spec.block_sizes == (9, 7, 3, 1)
        assert fixed.probability < matched.probability


class TestBlockResolution:

    def test_explicit_sizes(self):
        spec = resolve_block_spec(PortGeometry(6, 1.0), EstimatorSettings(block_sizes=(4, 2)))
        assert spec.block_sizes == (4, 2)
        assert math.isnan(spec.distance)

    def test_explicit_sizes_must_cover_ports(self):
        with pytest.raises(ValueError, match="sum"):
            resolve_block_spec(PortGeometry(6, 1.0), EstimatorSettings(block_sizes=(4, 1)))

    def test_mass_mode_uses_at_least_threshold_blocks(self):
        geometry = PortGeometry(20, 1.0)
        by_threshold = resolve_block_spec(geometry, EstimatorSettings())
        by_mass = resolve_block_spec(geometry, EstimatorSettings(block_count_mode="mass", mass_fraction=0.999999))
        assert by_mass.num_blocks >= by_threshold.num_blocks
        assert by_mass.num_ports == 20

    def test_matched_mu_from_spectrum(self):
        spec = resolve_block_spec(PortGeometry(20, 1.0), EstimatorSettings())
        assert spec.intra_block_mu == pytest.approx(0.99903178, abs=1e-7)
        assert spec.num_blocks == 4

    def test_explicit_sizes_keep_configured_mu(self):
        settings = EstimatorSettings(block_sizes=(4, 2), mu=0.8)
        assert resolve_block_spec(PortGeometry(6, 1.0), settings).intra_block_mu == 0.8

    def test_uncorrelated_ports_fall_back_to_configured_mu(self):
        spec = resolve_block_spec(PortGeometry(5, 2.0), EstimatorSettings(mu=0.7))
        assert spec.block_sizes == (1, 1, 1, 1, 1)
        assert spec.intra_block_mu == 0.7
