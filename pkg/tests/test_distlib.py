"""Frequency and severity models, truncation, splicing and per-event insurance."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from oplda.distlib import (
    GB2,
    GCD,
    GPD,
    Binomial,
    Empirical,
    GandH,
    InsurancePolicy,
    LeftTruncated,
    Lognormal,
    NegBinomial,
    NetOfInsurance,
    PointMass,
    Poisson,
    RiskCell,
    Shifted,
    apply_insurance,
    freq_panjer_coeffs,
    freq_pmf,
    severity_cdf,
    severity_quantile,
    severity_sample,
    splice_gpd_tail,
    truncate_left,
)
from oplda.errors import (
    DegenerateBodyError,
    ParameterDomainError,
    SupportError,
)

CONTINUOUS = [
    Lognormal(1.0, 2.0),
    Lognormal(0.0, 0.5),
    GPD(0.5, 2.0),
    GPD(0.0, 1.0),
    GandH(1.0, 1.0, 0.5, 0.2),
    GB2(2.0, 3.0, 1.5, 2.5),
    GCD(2.0, 5.0, 1.0),
    LeftTruncated(Lognormal(0.0, 1.0), 1.0),
    Shifted(Lognormal(0.0, 1.0), 1.0),
]
LEVELS = np.array([1e-6, 0.01, 0.3, 0.5, 0.9, 0.999, 1 - 1e-9])


def _ids(models):
    return [type(m).__name__ for m in models]


class TestFrequency:
    def test_poisson_zero(self):
        assert freq_pmf(Poisson(1.0), 0) == pytest.approx(np.exp(-1.0), rel=1e-14)

    def test_poisson_two(self):
        # 0.6^2 e^-0.6 / 2, frozen from a 30-digit evaluation
        assert freq_pmf(Poisson(0.6), 2) == pytest.approx(0.0987860944969247578, rel=1e-13)

    def test_binomial_certain_success(self):
        assert freq_pmf(Binomial(3, 1.0), 3) == 1.0

    def test_negative_count_rejected(self):
        with pytest.raises(SupportError):
            freq_pmf(Poisson(1.0), -1)

    def test_fractional_count_rejected(self):
        with pytest.raises(SupportError):
            freq_pmf(Poisson(1.0), 1.5)

    @pytest.mark.parametrize(
        "bad",
        [lambda: Poisson(-1.0), lambda: NegBinomial(0.0, 0.5), lambda: NegBinomial(2.0, 1.0), lambda: Binomial(0, 0.5)],
    )
    def test_domain(self, bad):
        with pytest.raises(ParameterDomainError):
            bad()

    def test_poisson_coefficients(self):
        a, b, p0, p1 = freq_panjer_coeffs(Poisson(3.5))
        assert (a, b) == (0.0, 3.5)
        assert p0 == pytest.approx(np.exp(-3.5))

    def test_binomial_one_trial(self):
        a, b, p0, p1 = freq_panjer_coeffs(Binomial(1, 0.3))
        assert p0 == pytest.approx(0.7)
        assert p1 == pytest.approx(0.3)

    def test_negbinomial_second_term(self):
        m = NegBinomial(2.0, 0.5)
        a, b, p0, p1 = freq_panjer_coeffs(m)
        assert freq_pmf(m, 2) == pytest.approx((a + b / 2) * p1, rel=1e-12)

    @pytest.mark.parametrize("model", [Poisson(7.0), NegBinomial(2.5, 0.3), Binomial(60, 0.2)], ids=str)
    def test_panjer_relation(self, model):
        a, b, p0, p1 = freq_panjer_coeffs(model)
        p = model.pmf(np.arange(51))
        assert p[0] == pytest.approx(p0, rel=1e-12)
        assert p[1] == pytest.approx(p1, rel=1e-12)
        n = np.arange(2, 51)
        live = p[1:50] > 0
        np.testing.assert_allclose(p[2:][live], ((a + b / n) * p[1:50])[live], rtol=1e-12)

    @pytest.mark.parametrize("model", [Poisson(10.0), NegBinomial(3.0, 0.4), Binomial(20, 0.3)], ids=str)
    def test_sampling_matches_pmf(self, model):
        draws = model.sample(np.random.default_rng(3), 200_000)
        k = np.arange(draws.max() + 1)
        observed = np.bincount(draws, minlength=k.size)
        expected = model.pmf(k) * draws.size
        keep = expected > 20
        chi2 = ((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum()
        assert stats.chi2.sf(chi2, keep.sum() - 1) > 0.001

    def test_poisson_zero_intensity_is_degenerate(self):
        assert np.all(Poisson(0.0).sample(np.random.default_rng(0), 100) == 0)


@pytest.mark.parametrize("model", CONTINUOUS, ids=_ids(CONTINUOUS))
class TestSeverityContract:
    def test_cdf_monotone(self, model):
        x = model.ppf(np.linspace(1e-4, 1 - 1e-4, 400))
        assert np.all(np.diff(model.cdf(x)) >= 0)

    def test_quantile_round_trip(self, model):
        x = model.ppf(LEVELS)
        assert np.max(np.abs(model.cdf(x) - LEVELS) / LEVELS) < 1e-8

    def test_upper_tail_round_trip(self, model):
        p = 1 - LEVELS
        x = model.isf(p)
        assert np.max(np.abs(model.sf(x) - p) / p) < 1e-8

    def test_density_integrates_to_one(self, model):
        lo = max(model.lower, 0.0) if np.isfinite(model.lower) else -np.inf
        total = integrate.quad(lambda t: float(model.pdf(t)), lo, np.inf, limit=500)[0]
        assert total == pytest.approx(1.0, abs=1e-6)


class TestSeverityValues:
    def test_lognormal_median(self):
        assert severity_cdf(Lognormal(1.3, 0.7), np.exp(1.3)) == pytest.approx(0.5, abs=1e-15)

    def test_gpd_closed_form(self):
        assert severity_cdf(GPD(1.0, 1.0), 1.0) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("alpha,M,c", [(2.0, 5.0, 1.0), (0.7, 100.0, 0.0), (3.0, 1.0, 10.0)])
    def test_gcd_median_is_M(self, alpha, M, c):
        assert severity_cdf(GCD(alpha, M, c), M) == pytest.approx(0.5, abs=1e-14)

    def test_gcd_cdf_matches_density_integral(self):
        m = GCD(2.0, 5.0, 1.0)
        area = integrate.quad(lambda t: float(m.pdf(t)), 0, 5.0)[0]
        assert area == pytest.approx(0.5, abs=1e-10)

    def test_exponential_gpd_quantile(self):
        assert severity_quantile(GPD(0.0, 3.0), 1 - np.exp(-1.0)) == pytest.approx(3.0, rel=1e-14)

    def test_gandh_median(self):
        assert severity_quantile(GandH(2.5, 1.0, 0.4, 0.1), 0.5) == pytest.approx(2.5, abs=1e-12)

    def test_lognormal_extreme_quantile(self):
        # exp(1 + 2 z_0.9999), 30-digit oracle
        assert severity_quantile(Lognormal(1.0, 2.0), 0.9999) == pytest.approx(4619.45943080783654, rel=1e-12)

    def test_gb2_matches_beta_prime(self):
        m = GB2(1.0, 1.0, 1.5, 2.5)
        x = np.array([0.1, 1.0, 7.0])
        np.testing.assert_allclose(m.cdf(x), stats.betaprime(1.5, 2.5).cdf(x), rtol=1e-12)
        assert m.mean() == pytest.approx(stats.betaprime(1.5, 2.5).mean(), rel=1e-10)

    def test_gpd_mean(self):
        assert GPD(0.5, 2.0).mean() == pytest.approx(stats.genpareto(0.5, scale=2.0).mean(), rel=1e-12)

    def test_gpd_infinite_moment(self):
        assert GPD(0.5, 1.0).moment(2) == np.inf

    def test_gpd_divergent_moment_sample_growth(self):
        # xi = 1/2: the second moment diverges, so the sample mean of x^2 keeps growing
        m = GPD(0.5, 1.0)
        rng = np.random.default_rng(0)
        logs = [np.log(np.mean(m.sample(rng, n) ** 2)) for n in (10**3, 10**5, 10**7)]
        assert logs[0] < logs[1] < logs[2]

    def test_gandh_moment_by_quadrature(self):
        m = GandH(1.0, 1.0, 0.5, 0.2)
        y = np.linspace(-12, 12, 200_001)
        t = 1.0 + (np.expm1(0.5 * y) / 0.5) * np.exp(0.2 * y * y / 2)
        assert m.mean() == pytest.approx(np.trapezoid(t * stats.norm.pdf(y), y), rel=1e-6)

    def test_point_mass(self):
        m = PointMass(2.0)
        assert m.ppf(0.3) == 2.0
        assert m.cdf(1.999) == 0.0 and m.cdf(2.0) == 1.0


class TestSampling:
    def test_lognormal_median(self):
        x = severity_sample(Lognormal(0.0, 1.0), np.random.default_rng(1), 10**6)
        assert np.median(x) == pytest.approx(1.0, abs=0.01)

    def test_gandh_driven_by_standard_normal(self):
        m = GandH(1.0, 2.0, 0.3, 0.1)
        x = severity_sample(m, np.random.default_rng(2), 200_000)
        # invert the transform to recover the Y inputs
        y = stats.norm.ppf(m.cdf(x))
        assert abs(y.mean()) < 0.01
        assert y.std() == pytest.approx(1.0, abs=0.01)

    def test_empirical_draws_from_sample(self):
        s = np.array([1.5, 2.0, 7.25, 11.0])
        x = severity_sample(Empirical(s), np.random.default_rng(3), 1000)
        assert set(np.unique(x)) <= set(s)

    def test_reproducible(self):
        a = severity_sample(GB2(2.0, 3.0, 1.5, 2.5), np.random.default_rng(9), 50)
        b = severity_sample(GB2(2.0, 3.0, 1.5, 2.5), np.random.default_rng(9), 50)
        np.testing.assert_array_equal(a, b)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            severity_sample(Lognormal(0, 1), np.random.default_rng(0), 0)


class TestDomainChecks:
    def test_cdf_below_support(self):
        with pytest.raises(SupportError):
            severity_cdf(Lognormal(0, 1), -1.0)

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.5, 1.5])
    def test_quantile_level(self, q):
        with pytest.raises(SupportError):
            severity_quantile(Lognormal(0, 1), q)

    @pytest.mark.parametrize(
        "bad",
        [
            lambda: Lognormal(0.0, 0.0),
            lambda: GPD(-0.1, 1.0),
            lambda: GPD(0.2, 0.0),
            lambda: GandH(0.0, -1.0, 0.1, 0.1),
            lambda: GandH(0.0, 1.0, 0.1, -0.1),
            lambda: GCD(0.0, 1.0),
            lambda: GCD(1.0, -1.0),
        ],
    )
    def test_parameters(self, bad):
        with pytest.raises(ParameterDomainError):
            bad()


class TestTruncation:
    def test_zero_threshold_is_identity(self):
        m = Lognormal(0.0, 1.0)
        assert truncate_left(m, 0.0) is m

    def test_cdf_at_threshold(self):
        assert truncate_left(Lognormal(0.0, 1.0), 1.0).cdf(1.0) == 0.0

    def test_median(self):
        # F(x) = (1 + F(1)) / 2 = 0.75, so x = exp(z_0.75); 30-digit oracle
        assert truncate_left(Lognormal(0.0, 1.0), 1.0).ppf(0.5) == pytest.approx(1.96303108415825707, rel=1e-12)

    @given(st.floats(0.01, 50.0), st.floats(0.0, 200.0))
    @settings(max_examples=60, deadline=None)
    def test_conditional_cdf_identity(self, L, x):
        base = Lognormal(1.0, 1.5)
        t = truncate_left(base, L)
        fl = float(base.cdf(L))
        expected = max(float(base.cdf(x)) - fl, 0.0) / (1 - fl)
        assert float(t.cdf(x)) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_all_mass_removed(self):
        from oplda.errors import EmptyTailError

        with pytest.raises(EmptyTailError):
            truncate_left(GPD(0.0, 1.0), 1e6)


class TestSplice:
    @pytest.fixture
    def spliced(self):
        body = Empirical(np.random.default_rng(5).exponential(size=1000))
        u = float(np.quantile(body.data, 0.9))
        return body, u, splice_gpd_tail(body, u, GPD(0.0, 1.0))

    def test_continuity(self, spliced):
        body, u, m = spliced
        assert m.cdf(u) == body.cdf(u)

    def test_limit(self, spliced):
        assert spliced[2].cdf(1e6) == pytest.approx(1.0)

    def test_extreme_quantile_matches_exponential(self, spliced):
        # memorylessness: the GPD(0, 1) tail above u reproduces the exponential tail
        # given the empirical weight, so the 0.999 quantile is u - log(1000 * (1 - F_n(u)) / 1)
        _, u, m = spliced
        w = float(m.cdf(u))
        assert m.ppf(0.999) == pytest.approx(u - np.log(0.001 / (1 - w)), rel=1e-10)
        # and lies within MC error of the true exponential quantile -log(0.001)
        assert m.ppf(0.999) == pytest.approx(6.907755278982137, abs=0.5)

    def test_threshold_beyond_sample(self):
        body = Empirical(np.arange(1.0, 11.0))
        with pytest.raises(DegenerateBodyError):
            splice_gpd_tail(body, 20.0, GPD(0.1, 1.0))


class TestInsurance:
    @pytest.fixture
    def policy(self):
        return InsurancePolicy(1.0, 5.0)

    @pytest.mark.parametrize("x,net", [(0.5, 0.5), (3.0, 1.0), (10.0, 5.0), (1.0, 1.0), (6.0, 1.0)])
    def test_branches(self, policy, x, net):
        assert apply_insurance(x, policy) == net

    def test_negative_loss(self, policy):
        with pytest.raises(SupportError):
            apply_insurance(-1.0, policy)

    @given(st.floats(0.0, 1e6), st.floats(0.0, 1e4), st.floats(0.01, 1e5))
    def test_bounds(self, x, D, U):
        net = apply_insurance(x, InsurancePolicy(D, U))
        assert net <= x
        assert net >= max(0.0, x - U) - 1e-9 * x
        assert net >= min(x, D) - 1e-9 * x

    def test_net_severity_matches_mapping(self):
        base = Lognormal(1.0, 1.0)
        pol = InsurancePolicy(2.0, 10.0)
        net = NetOfInsurance(base, pol)
        x = base.sample(np.random.default_rng(4), 200_000)
        y = apply_insurance(x, pol)
        grid = np.array([0.5, 1.9, 2.0, 5.0, 30.0])
        emp = np.searchsorted(np.sort(y), grid, side="right") / y.size
        np.testing.assert_allclose(net.cdf(grid), emp, atol=4e-3)

    def test_policy_domain(self):
        with pytest.raises(ParameterDomainError):
            InsurancePolicy(-1.0, 5.0)
        with pytest.raises(ParameterDomainError):
            InsurancePolicy(1.0, 0.0)


class TestRiskCell:
    def test_mapping(self):
        c = RiskCell("rb", Poisson(1.0), Lognormal(0, 1), business_line=3, event_type=2)
        assert c.basel_mapping == ("Retail banking", "External fraud")

    @pytest.mark.parametrize("bl,et", [(0, 1), (9, 1), (1, 0), (1, 8)])
    def test_mapping_range(self, bl, et):
        with pytest.raises(ParameterDomainError):
            RiskCell("x", Poisson(1.0), Lognormal(0, 1), business_line=bl, event_type=et)


def test_normal_quantile_oracle_consistency():
    # guard on the oracle used above: z_0.9999 from scipy equals the 30-digit value
    assert special.ndtri(0.9999) == pytest.approx(3.71901648545568056, rel=1e-14)
