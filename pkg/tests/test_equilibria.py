import math

import numpy as np
import pytest

from zrplab.environment import (
    FiniteSupport,
    RateField,
    ShiftedBeta,
    UniformInterval,
    capped_linear_rate,
    delta_law,
    indicator_rate,
    sample_rate_field,
)
from zrplab.equilibria import (
    FluxTable,
    QuenchedProductLaw,
    SingleSiteLaw,
    build_flux_table,
    critical_density,
    density_rho,
    flux_f,
    mean_occupancy,
    mean_occupancy_inverse,
    partition_function,
    sample_product_measure,
)
from zrplab.equilibria import _critical_density_quadrature

from conftest import brute_series

GEO = indicator_rate()
MIN2 = capped_linear_rate(2)


class TestPartitionFunction:
    def test_zero_fugacity(self):
        assert partition_function(0.0, GEO) == 1.0
        assert partition_function(0.0, MIN2) == 1.0

    def test_geometric_closed_form(self):
        assert partition_function(0.5, GEO) == pytest.approx(2.0, abs=1e-12)

    def test_min2_hand_value(self):
        # 1 + psi + (psi^2/2)/(1 - psi/2) at psi = 1
        assert partition_function(1.0, MIN2) == pytest.approx(3.0, abs=1e-12)

    def test_against_series_oracle(self):
        for psi in (0.3, 0.9, 1.7):
            Z, _ = brute_series(psi, MIN2)
            assert partition_function(psi, MIN2) == pytest.approx(Z, abs=1e-10)

    def test_divergence_rejected(self):
        with pytest.raises(ValueError):
            partition_function(1.0, GEO)
        with pytest.raises(ValueError):
            partition_function(-0.1, GEO)

    def test_strictly_increasing(self):
        grid = np.linspace(0.0, 0.99, 50)
        vals = [partition_function(p, GEO) for p in grid]
        assert np.all(np.diff(vals) > 0)


class TestMeanOccupancy:
    def test_zero(self):
        assert mean_occupancy(0.0, GEO) == 0.0

    def test_geometric_closed_form(self):
        assert mean_occupancy(0.5, GEO) == pytest.approx(1.0, abs=1e-12)

    def test_min2_against_series_oracle(self):
        _, M = brute_series(1.0, MIN2)
        assert mean_occupancy(1.0, MIN2) == pytest.approx(M, abs=1e-10)

    def test_strictly_increasing(self):
        grid = np.linspace(0.0, 1.95, 60)
        vals = [mean_occupancy(p, MIN2) for p in grid]
        assert np.all(np.diff(vals) > 0)

    def test_inverse(self):
        for rho in (0.2, 1.0, 5.0):
            psi = mean_occupancy_inverse(rho, GEO)
            assert mean_occupancy(psi, GEO) == pytest.approx(rho, rel=1e-10)
        assert mean_occupancy_inverse(0.5, GEO) == pytest.approx(1 / 3, abs=1e-10)


class TestDensityRho:
    def test_zero(self):
        assert density_rho(0.0, delta_law(1.0), GEO) == 0.0

    def test_no_disorder_reduces_to_mean(self):
        assert density_rho(0.5, delta_law(1.0), GEO) == pytest.approx(1.0, abs=1e-12)

    def test_two_point_closed_form(self):
        law = FiniteSupport((0.5, 1.0), (0.5, 0.5))
        # 0.5 M(0.5) + 0.5 M(0.25) = 0.5 + 0.5/3
        assert density_rho(0.25, law, GEO) == pytest.approx(2 / 3, abs=1e-12)

    def test_continuous_law_quadrature(self):
        law = ShiftedBeta(0.5, 2.0, 1.0)
        # E[M(phi/alpha)] = int 8(a-c) * phi/(a-phi) da for the unit-rate case
        phi = 0.3
        from scipy.integrate import quad
        val, _ = quad(lambda a: 8 * (a - 0.5) * phi / (a - phi), 0.5, 1.0)
        assert density_rho(phi, law, GEO) == pytest.approx(val, rel=1e-9)

    def test_out_of_range_rejected(self):
        law = FiniteSupport((0.5, 1.0), (0.5, 0.5))
        with pytest.raises(ValueError):
            density_rho(0.5, law, GEO)  # needs phi < r_inf * c = 0.5

    def test_strictly_increasing(self):
        law = ShiftedBeta(0.5, 2.0, 1.0)
        grid = np.linspace(0.0, 0.49, 25)
        vals = [density_rho(p, law, GEO) for p in grid]
        assert np.all(np.diff(vals) > 0)


class TestCriticalDensity:
    def test_atom_at_c_infinite(self):
        law = FiniteSupport((0.5, 1.0), (0.5, 0.5))
        assert critical_density(law, GEO) == math.inf

    def test_no_disorder_infinite(self):
        assert critical_density(delta_law(1.0), GEO) == math.inf

    def test_uniform_interval_infinite(self):
        assert critical_density(UniformInterval(0.5), GEO) == math.inf

    def test_shifted_beta_closed_form(self):
        # rho* = c (a+b-1) / ((a-1)(1-c)) = 2 for (c,a,b) = (0.5, 2, 1)
        assert critical_density(ShiftedBeta(0.5, 2, 1), GEO) == pytest.approx(2.0)
        assert critical_density(ShiftedBeta(0.5, 1.0, 1.0), GEO) == math.inf

    def test_quadrature_matches_closed_form(self):
        val = _critical_density_quadrature(ShiftedBeta(0.5, 2, 1), GEO)
        assert val == pytest.approx(2.0, abs=1e-6)

    def test_quadrature_detects_divergence(self):
        assert _critical_density_quadrature(UniformInterval(0.5), GEO) == math.inf

    def test_general_rate_quadrature(self):
        # min(k,2) rate: critical fugacity is 2c; finite for thin beta tail
        val = critical_density(ShiftedBeta(0.5, 2, 1), MIN2)
        assert math.isfinite(val) and val > 0
        assert critical_density(ShiftedBeta(0.5, 0.5, 1.0), MIN2) == math.inf


class TestFlux:
    def test_zero(self):
        assert flux_f(0.0, delta_law(1.0), GEO) == 0.0

    def test_no_disorder_inversion(self):
        # rho = f/(1-f)  =>  f = rho/(1+rho)
        assert flux_f(1.0, delta_law(1.0), GEO) == pytest.approx(0.5, abs=1e-9)

    def test_flat_extension(self):
        law = ShiftedBeta(0.5, 2, 1)
        assert flux_f(3.0, law, GEO) == 0.5
        assert flux_f(2.0, law, GEO) == 0.5

    def test_closed_form_pointwise(self):
        law = delta_law(1.0)
        for rho in np.linspace(0.1, 4.0, 14):
            assert flux_f(rho, law, GEO) == pytest.approx(rho / (1 + rho), abs=1e-8)

    def test_flux_density_identity(self):
        law = ShiftedBeta(0.5, 2, 1)
        for phi in np.linspace(0.02, 0.48, 8):
            rho = density_rho(phi, law, GEO)
            assert flux_f(rho, law, GEO) == pytest.approx(phi, abs=1e-8)


class TestFluxTable:
    def test_shape_invariants(self):
        law = ShiftedBeta(0.5, 2, 1)
        table = build_flux_table(law, GEO, 4.0, 801)
        assert table.is_nondecreasing()
        assert table.is_concave(2.0 * table.grid_step)
        assert table.rho_star == pytest.approx(2.0)
        # flat at c on and above the critical density
        assert np.all(table.f[table.rho >= 2.0] == 0.5)

    def test_no_disorder_matches_closed_form(self):
        table = build_flux_table(delta_law(1.0), GEO, 3.0, 601)
        assert np.max(np.abs(table.f - table.rho / (1 + table.rho))) < 1e-6

    def test_csv_round_trip(self, tmp_path):
        table = build_flux_table(delta_law(1.0), GEO, 2.0, 201)
        p = tmp_path / "flux.csv"
        table.to_csv(p)
        rows = p.read_text().strip().split("\n")
        assert rows[0] == "rho,f"
        assert len(rows) == 202


class TestSingleSiteLaw:
    def test_probabilities_sum_to_one(self):
        for psi, rate in ((0.5, GEO), (1.7, MIN2)):
            law = SingleSiteLaw(psi, rate)
            assert abs(law.probabilities.sum() - 1.0) <= 1e-12

    def test_mean_matches(self):
        law = SingleSiteLaw(0.5, GEO)
        assert law.probabilities @ np.arange(len(law.probabilities)) == \
            pytest.approx(law.mean, abs=1e-10)

    def test_general_rate_sampler(self, rng):
        law = SingleSiteLaw(1.5, MIN2)
        draws = law.sample(np.random.default_rng(1), 200_000)
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean() - law.mean) < 3 * se


class TestProductMeasure:
    def test_zero_fugacity(self):
        field = sample_rate_field(delta_law(1.0), 100, 1)
        q = QuenchedProductLaw(0.0, field, GEO)
        assert np.array_equal(sample_product_measure(q, 2), np.zeros(100))

    def test_geometric_mean(self):
        field = sample_rate_field(delta_law(1.0), 10**6, 1)
        q = QuenchedProductLaw(0.5, field, GEO)
        occ = sample_product_measure(q, 3)
        # geometric with mean 1, variance 2
        se = math.sqrt(2.0 / 10**6)
        assert abs(occ.mean() - 1.0) < 3 * se

    def test_stochastic_domination(self):
        # the quenched marginal dominates mu_{r_inf * theta} when phi >= r_inf theta
        law = ShiftedBeta(0.5, 2, 1)
        field = sample_rate_field(law, 64, 9)
        phi, theta = 0.4, 0.35
        mu = SingleSiteLaw(theta * GEO.r_inf, GEO)
        for x in (0, 31, 63):
            marginal = SingleSiteLaw(phi / float(field.alphas[x]), GEO)
            for k in range(30):
                assert marginal.cdf(k) <= mu.cdf(k) + 1e-12

    def test_bad_fugacity_rejected(self):
        field = sample_rate_field(ShiftedBeta(0.5, 2, 1), 32, 1)
        with pytest.raises(ValueError):
            QuenchedProductLaw(float(field.alphas.min()), field, GEO)

    def test_general_rate_product_sampler(self):
        law = FiniteSupport((0.8, 1.0), (0.5, 0.5))
        field = sample_rate_field(law, 100_000, 3)
        q = QuenchedProductLaw(1.2, field, MIN2)
        occ = sample_product_measure(q, 5)
        expect = np.array([mean_occupancy(1.2 / a, MIN2) for a in field.alphas])
        pooled = expect.mean()
        se = occ.std(ddof=1) / math.sqrt(len(occ))
        assert abs(occ.mean() - pooled) < 4 * se
