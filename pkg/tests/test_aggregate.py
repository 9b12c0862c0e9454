"""Compound distributions: Monte Carlo, Panjer, FFT and closed-form approximations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from oplda.aggregate import (
    CompoundResult,
    DiscreteDensity,
    compound_quantiles,
    discrete_quantile,
    discretize_severity,
    fft_compound,
    mc_compound,
    mc_quantile_ci,
    moment_match_quantile,
    panjer_recursion,
    read_density_csv,
    single_loss_var,
    write_density_csv,
    write_quantile_report,
)
from oplda.distlib import GPD, InsurancePolicy, Lognormal, NegBinomial, PointMass, Poisson, RiskCell
from oplda.errors import (
    CIUndefinedError,
    DegenerateModelError,
    GridError,
    InsufficientGridError,
    MomentError,
    ParameterDomainError,
)
from oplda.io import read_rows

STEP = 0.3
M = 2**16


@pytest.fixture(scope="module")
def ln_lattice():
    return discretize_severity(Lognormal(1.0, 2.0), STEP, M)


class TestMonteCarlo:
    def test_unit_severity_counts(self):
        z = mc_compound(RiskCell("n", Poisson(4.0), PointMass(1.0)), 100_000, seed=1)
        assert np.all(z == np.round(z))
        assert z.mean() == pytest.approx(4.0, abs=3 * np.sqrt(4.0 / 1e5))

    def test_zero_intensity(self):
        assert np.all(mc_compound(RiskCell("0", Poisson(0.0), Lognormal(0, 1)), 1000, seed=1) == 0)

    def test_wald_identity(self, ln_cell):
        z = mc_compound(ln_cell, 100_000, seed=11)
        # E[Z] = 10 e^3, Var[Z] = 10 E[X^2] = 10 e^10
        se = np.sqrt(10 * np.exp(10.0) / z.size)
        assert abs(z.mean() - 10 * np.exp(3.0)) < 3 * se

    def test_thread_count_does_not_matter(self, ln_cell):
        a = mc_compound(ln_cell, 50_000, seed=5, threads=1, block=4096)
        b = mc_compound(ln_cell, 50_000, seed=5, threads=4, block=4096)
        np.testing.assert_array_equal(a, b)

    def test_insurance_applied_per_event(self):
        pol = InsurancePolicy(1.0, 5.0)
        gross = mc_compound(RiskCell("g", Poisson(3.0), Lognormal(1.0, 1.0)), 20_000, seed=2)
        net = mc_compound(RiskCell("n", Poisson(3.0), Lognormal(1.0, 1.0), pol), 20_000, seed=2)
        assert np.all(net <= gross + 1e-12)
        assert net.mean() < gross.mean()

    def test_invalid_size(self, ln_cell):
        with pytest.raises(ValueError):
            mc_compound(ln_cell, 0, seed=1)


class TestQuantileInterval:
    def test_order_statistics(self):
        e = mc_quantile_ci(np.arange(100_000, dtype=float), 0.999, 0.95)
        assert (e.lower_index, e.upper_index) == (99880, 99920)
        assert e.point_index == 99901
        assert (e.lower, e.point, e.upper) == (99879.0, 99900.0, 99919.0)

    def test_zero_confidence_collapses(self):
        e = mc_quantile_ci(np.arange(100_000, dtype=float), 0.999, 0.0)
        assert e.lower_index == e.upper_index == 99900
        assert e.lower <= e.point <= e.upper
        assert e.upper - e.lower == 1.0

    def test_undefined_for_small_samples(self):
        with pytest.warns(UserWarning):
            with pytest.raises(CIUndefinedError):
                mc_quantile_ci(np.arange(100.0), 0.999)

    def test_warns_when_tail_is_thin(self):
        with pytest.warns(UserWarning, match="Kq"):
            mc_quantile_ci(np.arange(20_000.0), 0.999)

    @pytest.mark.slow
    def test_coverage_against_fft(self):
        cell = RiskCell("c", Poisson(5.0), Lognormal(0.0, 1.0))
        dist = fft_compound(cell.frequency, discretize_severity(cell.severity, 0.005, 2**14))
        # the lattice quantile is within a step of the true one; use the midpoint
        truth = discrete_quantile(dist, 0.99) - 0.0025
        hits = sum(mc_quantile_ci(mc_compound(cell, 20_000, seed=s), 0.99).contains(truth) for s in range(200))
        assert 0.90 <= hits / 200 <= 0.99


class TestDiscretization:
    @given(st.floats(-2.0, 3.0), st.floats(0.2, 2.5), st.floats(0.01, 5.0), st.sampled_from([16, 256, 4096]))
    @settings(max_examples=40, deadline=None)
    def test_total_mass(self, mu, sigma, step, m):
        d = discretize_severity(Lognormal(mu, sigma), step, m)
        assert d.masses.sum() + d.tail_mass == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_at_step(self):
        d = discretize_severity(PointMass(0.25), 0.25, 64)
        assert d.masses[1] == 1.0
        assert d.masses.sum() == 1.0

    def test_lognormal_mean(self):
        d = discretize_severity(Lognormal(0.0, 1.0), 0.01, 2**16)
        assert d.mean() == pytest.approx(np.exp(0.5), rel=1e-3)

    @pytest.mark.parametrize("step,m", [(0.0, 16), (-1.0, 16), (1.0, 1)])
    def test_bad_grid(self, step, m):
        with pytest.raises(GridError):
            discretize_severity(Lognormal(0, 1), step, m)


class TestPanjer:
    def test_no_mass_above_zero(self):
        d = discretize_severity(PointMass(0.1), 1.0, 32)
        h = panjer_recursion(Poisson(3.0), d)
        assert h.masses[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("freq", [Poisson(2.5), NegBinomial(3.0, 0.4)], ids=str)
    def test_unit_severity_returns_counts(self, freq):
        d = discretize_severity(PointMass(1.0), 1.0, 128)
        h = panjer_recursion(freq, d)
        np.testing.assert_allclose(h.masses[:60], freq.pmf(np.arange(60)), rtol=1e-10, atol=1e-300)

    def test_matches_fft(self, ln_lattice):
        qp = discrete_quantile(panjer_recursion(Poisson(10.0), ln_lattice), 0.999)
        qf = discrete_quantile(fft_compound(Poisson(10.0), ln_lattice), 0.999)
        assert abs(qp - qf) <= STEP

    @pytest.mark.parametrize("freq", [Poisson(3.0), NegBinomial(2.0, 0.5)], ids=str)
    def test_mean_preservation(self, freq):
        d = discretize_severity(Lognormal(0.0, 0.5), 0.01, 2**14)
        h = panjer_recursion(freq, d)
        assert h.mean() == pytest.approx(freq.mean() * d.mean(), rel=1e-10)


class TestFFT:
    def test_untilted_unit_severity(self):
        d = discretize_severity(PointMass(1.0), 1.0, 128)
        h = fft_compound(Poisson(4.0), d, theta=0.0)
        np.testing.assert_allclose(h.masses[:40], stats.poisson(4.0).pmf(np.arange(40)), atol=1e-15)

    def test_default_tilt(self, ln_lattice):
        assert fft_compound(Poisson(10.0), ln_lattice).diagnostics["theta"] == 20.0 / M

    def test_mean_preservation_without_tilt(self):
        d = discretize_severity(Lognormal(0.0, 0.5), 0.01, 2**14)
        h = fft_compound(Poisson(3.0), d, theta=0.0)
        assert h.mean() == pytest.approx(3.0 * d.mean(), rel=1e-10)

    def test_tilting_suppresses_aliasing(self):
        freq, sev = Poisson(10.0), Lognormal(1.0, 2.0)
        m = 2**12
        step = 8000.0 / m
        short = discretize_severity(sev, step, m)
        oracle = discrete_quantile(fft_compound(freq, discretize_severity(sev, step, 4 * m)), 0.999)
        plain = fft_compound(freq, short, theta=0.0)
        tilted = fft_compound(freq, short)
        # wrapped mass piles onto the low end of the untilted lattice
        assert plain.cdf()[m // 4] > tilted.cdf()[m // 4]
        err_plain = abs(discrete_quantile(plain, 0.999) - oracle)
        err_tilted = abs(discrete_quantile(tilted, 0.999) - oracle)
        assert err_plain > 0
        assert 10 * err_tilted <= err_plain

    def test_size_must_be_power_of_two(self):
        with pytest.raises(GridError):
            fft_compound(Poisson(1.0), DiscreteDensity(1.0, np.full(12, 1 / 12)))


class TestDiscreteQuantile:
    def test_point_mass_at_zero(self):
        d = DiscreteDensity(1.0, np.r_[1.0, np.zeros(15)])
        assert all(discrete_quantile(d, q) == 0.0 for q in (0.01, 0.5, 0.999))

    def test_uniform(self):
        d = DiscreteDensity(1.0, np.r_[0.0, np.full(10, 0.1), np.zeros(5)])
        assert discrete_quantile(d, 0.5) == 5.0

    def test_grid_too_short(self):
        d = discretize_severity(Lognormal(1.0, 2.0), 0.01, 1024)
        with pytest.raises(InsufficientGridError):
            discrete_quantile(fft_compound(Poisson(10.0), d), 0.999)

    def test_refinement_converges_to_exponential_compound(self):
        lam, q = 3.0, 0.99

        def cdf(z):
            n = np.arange(1, 80)
            return np.exp(-lam) + np.sum(stats.poisson(lam).pmf(n) * stats.gamma(n).cdf(z))

        exact = optimize.brentq(lambda z: cdf(z) - q, 0.1, 50.0, xtol=1e-13)
        errors = []
        for step in (0.1, 0.01, 0.001):
            m = 1 << int(np.ceil(np.log2(60.0 / step)))
            d = discretize_severity(GPD(0.0, 1.0), step, m)
            errors.append(abs(discrete_quantile(panjer_recursion(Poisson(lam), d), q) - exact))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 0.002


class TestApproximations:
    def test_single_loss_one_event(self):
        sev = Lognormal(1.0, 2.0)
        assert single_loss_var(Poisson(1.0), sev, 0.99) == pytest.approx(float(sev.ppf(0.99)), rel=1e-12)

    def test_single_loss_value(self):
        # exp(1 + 2 z_0.9999), 30-digit oracle
        assert single_loss_var(Poisson(10.0), Lognormal(1.0, 2.0), 0.999) == pytest.approx(4619.45943080783654, rel=1e-12)

    def test_single_loss_ratio_tends_to_one(self, ln_lattice):
        dist = fft_compound(Poisson(10.0), ln_lattice)
        levels = (0.99, 0.999, 0.9999)
        ratios = [single_loss_var(Poisson(10.0), Lognormal(1.0, 2.0), q) / discrete_quantile(dist, q) for q in levels]
        gaps = [abs(1 - r) for r in ratios]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_single_loss_whitelist(self):
        with pytest.raises(ParameterDomainError):
            single_loss_var(Poisson(1.0), PointMass(1.0), 0.99)

    def test_normal_on_degenerate_severity(self):
        lam, c, q = 4.0, 2.5, 0.9
        expected = lam * c + np.sqrt(lam * c * c) * stats.norm.ppf(q)
        assert moment_match_quantile(Poisson(lam), PointMass(c), "normal", q) == pytest.approx(expected, rel=1e-12)

    def test_normal_median_is_mean(self):
        assert moment_match_quantile(Poisson(7.0), Lognormal(0.0, 1.0), "normal", 0.5) == pytest.approx(
            7.0 * np.exp(0.5), rel=1e-10
        )

    def test_normal_light_tail(self):
        freq, sev = Poisson(100.0), Lognormal(1.0, 0.5)
        d = discretize_severity(sev, 0.02, 2**15)
        fft = discrete_quantile(fft_compound(freq, d), 0.999)
        assert moment_match_quantile(freq, sev, "normal", 0.999) == pytest.approx(fft, rel=0.05)

    def test_translated_gamma_between_normal_and_fft(self):
        freq, sev = Poisson(100.0), Lognormal(1.0, 0.5)
        fft = discrete_quantile(fft_compound(freq, discretize_severity(sev, 0.02, 2**15)), 0.999)
        tg = moment_match_quantile(freq, sev, "translated-gamma", 0.999)
        assert abs(tg - fft) < abs(moment_match_quantile(freq, sev, "normal", 0.999) - fft)

    def test_infinite_moment(self):
        with pytest.raises(MomentError):
            moment_match_quantile(Poisson(1.0), GPD(0.6, 1.0), "normal", 0.99)

    def test_zero_intensity(self):
        with pytest.raises(DegenerateModelError):
            single_loss_var(Poisson(0.0), Lognormal(0, 1), 0.99)


class TestOrchestration:
    @pytest.mark.parametrize("method", ["MC", "Panjer", "FFT", "SingleLoss", "Normal", "TranslatedGamma"])
    def test_monotone_in_level(self, ln_cell, method):
        res = compound_quantiles(ln_cell, [0.9, 0.99, 0.999], method, M=M, step=STEP, K=100_000, seed=3)
        vals = [row[2] for row in res.rows()]
        assert vals == sorted(vals)

    def test_non_monotone_rejected(self):
        with pytest.raises(DegenerateModelError):
            CompoundResult("x", {0.9: 2.0, 0.99: 1.0})

    def test_report_columns(self, tmp_path, ln_cell):
        res = compound_quantiles(ln_cell, [0.999], "FFT", M=M, step=STEP)
        path = write_quantile_report(tmp_path / "q.csv", [res])
        header, rows = read_rows(path)
        assert header == ["method", "q", "estimate", "lo", "hi"]
        assert rows[0][0] == "FFT"

    def test_density_round_trip(self, tmp_path, ln_lattice):
        dist = fft_compound(Poisson(10.0), ln_lattice)
        back = read_density_csv(write_density_csv(tmp_path / "d.csv", dist))
        np.testing.assert_array_equal(back.masses, dist.masses)
        assert back.step == pytest.approx(dist.step, rel=1e-12)
