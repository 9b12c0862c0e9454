"""Conjugate updating, elicitation, empirical Bayes, three-source posterior, MCMC and pooling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oplda.bayeslib import (
    ExpertOpinions,
    GammaPrior,
    GIGPosterior,
    ParamChain,
    adjust_scales,
    elicit_gamma_prior,
    empirical_bayes_gamma,
    estimator_trajectories,
    gaussian_posterior_approx,
    min_variance_combine,
    poisson_gamma_posterior,
    rw_mh_gibbs,
    three_source_posterior,
    tune_proposals,
)
from oplda.errors import (
    ApproximationError,
    ElicitationError,
    ParameterDomainError,
    PosteriorInvalidError,
    SamplerExhaustedError,
    TuningError,
)
from oplda.io import read_rows

COUNTS = [0, 0, 0, 0, 1, 0, 1, 1, 1, 0, 2, 1, 1, 2, 0]
ELICITED = GammaPrior(3.407, 0.147)


def batch_se(x, n_batches=50):
    """Standard error of a chain mean by non-overlapping batch means."""
    x = np.asarray(x)
    b = x[: x.size // n_batches * n_batches].reshape(n_batches, -1).mean(axis=1)
    return b.std(ddof=1) / np.sqrt(n_batches)


class TestGammaPrior:
    def test_moments(self):
        p = GammaPrior(4.0, 0.25)
        assert (p.mean, p.variance, p.vco) == (1.0, 0.25, 0.5)

    def test_from_mean_vco(self):
        p = GammaPrior.from_mean_vco(2.0, 0.1)
        assert p.mean == pytest.approx(2.0, rel=1e-14)
        assert p.vco == pytest.approx(0.1, rel=1e-14)

    def test_vco_floor_keeps_mean(self):
        p = GammaPrior(1e4, 1e-4).with_vco_floor(0.05)
        assert p.vco == pytest.approx(0.05) and p.mean == pytest.approx(1.0)
        assert GammaPrior(4.0, 0.25).with_vco_floor(0.05) == GammaPrior(4.0, 0.25)

    def test_domain(self):
        with pytest.raises(ParameterDomainError):
            GammaPrior(0.0, 1.0)


class TestConjugatePosterior:
    def test_no_data(self):
        post, rep = poisson_gamma_posterior(ELICITED, [])
        assert post == ELICITED
        assert rep.weight == 0.0

    def test_reference_counts(self):
        post, rep = poisson_gamma_posterior(ELICITED, COUNTS)
        assert post.alpha == pytest.approx(13.407, abs=1e-12)
        assert post.beta == pytest.approx(0.147 / (1 + 15 * 0.147), rel=1e-14)
        assert post.beta == pytest.approx(0.04587, abs=1e-5)
        assert post.mean == pytest.approx(0.615, abs=1e-3)

    def test_vague_prior(self):
        post, rep = poisson_gamma_posterior(GammaPrior(1e-8, 1e12), COUNTS)
        assert rep.weight == pytest.approx(1.0, abs=1e-10)
        assert post.mean == pytest.approx(np.mean(COUNTS), rel=1e-7)

    @given(
        st.floats(0.05, 50.0),
        st.floats(0.01, 20.0),
        st.lists(st.integers(0, 30), min_size=1, max_size=40),
    )
    @settings(max_examples=100, deadline=None)
    def test_credibility_identity(self, alpha, beta, counts):
        post, rep = poisson_gamma_posterior(GammaPrior(alpha, beta), counts)
        assert post.mean == pytest.approx(rep.posterior_mean, rel=1e-12, abs=1e-300)
        assert 0 <= rep.weight < 1

    @given(st.lists(st.integers(0, 20), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_sequential_equals_batch(self, counts):
        seq = ELICITED
        for n in counts:
            seq = poisson_gamma_posterior(seq, [n])[0]
        batch = poisson_gamma_posterior(ELICITED, counts)[0]
        # summation order and beta/(1+beta) applied T times versus beta/(1+T beta): equal up to rounding
        np.testing.assert_array_max_ulp(seq.alpha, batch.alpha, maxulp=4 * len(counts))
        np.testing.assert_array_max_ulp(seq.beta, batch.beta, maxulp=4 * len(counts))

    def test_contraction(self):
        variances = [poisson_gamma_posterior(ELICITED, np.tile([0, 1, 2], k))[0].variance for k in (1, 10, 100, 1000)]
        assert all(a > b for a, b in zip(variances, variances[1:]))
        assert variances[-1] < 1e-3


class TestElicitation:
    def test_reference_case(self):
        p = elicit_gamma_prior(0.5, (0.25, 0.75), 2 / 3)
        assert p.alpha == pytest.approx(3.407, abs=0.01)
        assert p.beta == pytest.approx(0.147, abs=0.002)
        assert p.vco == pytest.approx(0.542, abs=1e-3)
        d = p.dist()
        assert abs(d.cdf(0.75) - d.cdf(0.25) - 2 / 3) < 1e-8

    def test_wider_interval_is_more_diffuse(self):
        alphas = [elicit_gamma_prior(0.5, (0.5 - h, 0.5 + h), 0.9).alpha for h in (0.1, 0.2, 0.4)]
        assert alphas[0] > alphas[1] > alphas[2]

    def test_infeasible(self):
        with pytest.raises(ElicitationError):
            elicit_gamma_prior(0.5, (0.4999, 0.5001), 0.9999)

    @pytest.mark.parametrize("interval,p", [((0.6, 0.9), 0.5), ((0.1, 0.9), 1.0), ((0.1, 0.9), 0.0)])
    def test_bad_input(self, interval, p):
        with pytest.raises(ElicitationError):
            elicit_gamma_prior(0.5, interval, p)


@pytest.fixture(scope="module")
def eb_cells():
    rng = np.random.default_rng(2024)
    lam = rng.gamma(3.0, 0.2, 50)
    return [rng.poisson(l, 10) for l in lam]


class TestEmpiricalBayes:
    def test_recovers_prior(self, eb_cells):
        cells = eb_cells
        fit = empirical_bayes_gamma(cells)
        rng = np.random.default_rng(1)
        boot = np.array([
            (lambda p: (p.alpha, p.beta))(empirical_bayes_gamma([cells[j] for j in rng.integers(0, 50, 50)], n_starts=2))
            for _ in range(60)
        ])
        sd = boot.std(axis=0, ddof=1)
        assert abs(fit.alpha - 3.0) < 3 * sd[0]
        assert abs(fit.beta - 0.2) < 3 * sd[1]

    def test_homogeneous_cells(self):
        rng = np.random.default_rng(5)
        cells = [rng.poisson(2.0, 2000) for _ in range(6)]
        fit = empirical_bayes_gamma(cells)
        assert fit.mean == pytest.approx(np.mean(np.concatenate(cells)), rel=0.01)

    def test_volume_invariance(self):
        rng = np.random.default_rng(8)
        lam = rng.gamma(3.0, 0.2, 2000)
        base = empirical_bayes_gamma([rng.poisson(l, 10) for l in lam])
        doubled = empirical_bayes_gamma([rng.poisson(2 * l, 10) for l in lam], [np.full(10, 2.0)] * 2000)
        assert doubled.alpha == pytest.approx(base.alpha, rel=0.1)
        assert doubled.beta == pytest.approx(base.beta, rel=0.1)

    def test_needs_two_cells(self):
        with pytest.raises(ParameterDomainError):
            empirical_bayes_gamma([[1, 2, 3]])


class TestThreeSource:
    def test_parameters(self):
        g = three_source_posterior(GammaPrior(3.41, 0.15), COUNTS, ExpertOpinions([0.7], 4.0))
        assert g.nu == pytest.approx(8.41, abs=1e-12)
        assert g.omega == pytest.approx(15 + 1 / 0.15, rel=1e-14)
        assert g.phi == pytest.approx(2.8, rel=1e-14)

    def test_mean_against_bessel_ratio(self):
        g = three_source_posterior(GammaPrior(3.41, 0.15), COUNTS, ExpertOpinions([0.7], 4.0))
        # sqrt(phi/omega) K_{nu+2}(b) / K_{nu+1}(b), b = 2 sqrt(phi omega)
        assert g.mean == pytest.approx(0.6456240058798483, rel=1e-8)

    def test_no_experts(self):
        g = three_source_posterior(ELICITED, COUNTS, None)
        post, _ = poisson_gamma_posterior(ELICITED, COUNTS)
        assert g.phi == 0
        assert g.mean == pytest.approx(post.mean, rel=1e-8)
        assert g.variance == pytest.approx(post.variance, rel=1e-8)

    @pytest.mark.parametrize("opinion", [0.1, 0.7, 3.0])
    def test_shrinkage(self, opinion):
        g = three_source_posterior(ELICITED, COUNTS, ExpertOpinions([opinion], 4.0))
        sources = [np.mean(COUNTS), ELICITED.mean, opinion]
        assert min(sources) <= g.mean <= max(sources)

    def test_sampler_matches_mean(self):
        g = GIGPosterior(3.0, 5.0, 2.0)
        x = g.sample(np.random.default_rng(0), 200_000)
        assert x.mean() == pytest.approx(g.mean, abs=4 * x.std() / np.sqrt(x.size))

    def test_not_normalisable(self):
        with pytest.raises(PosteriorInvalidError):
            GIGPosterior(-2.0, 1.0, 0.0)

    def test_bad_opinions(self):
        with pytest.raises(ParameterDomainError):
            ExpertOpinions([0.5, -1.0], 4.0)

    def test_trajectories_shape(self):
        tr = estimator_trajectories(COUNTS, ELICITED, ExpertOpinions([0.7], 4.0))
        assert all(len(v) == 15 for v in tr.values())
        assert tr["mle"][-1] == pytest.approx(10 / 15)


def _normal_logpost(t):
    return -0.5 * t[0] ** 2


class TestMCMC:
    def test_standard_normal(self):
        chain = rw_mh_gibbs(_normal_logpost, ([-10.0], [10.0]), [2.4], [0.0], 110_000, seed=3, burn_in=10_000)
        d = chain.draws[:, 0]
        assert d.size == 100_000
        assert abs(d.mean()) < 0.05
        assert abs(d.var() - 1.0) < 0.1

    def test_unbounded_is_plain_random_walk(self):
        lp = lambda t: -0.5 * t[0] ** 2  # noqa: E731
        a = rw_mh_gibbs(lp, ([-np.inf], [np.inf]), [1.0], [0.0], 500, seed=4)
        assert np.all(np.isfinite(a.samples))
        assert 0 < a.acceptance[0] < 1

    def test_conjugate_target(self):
        post, _ = poisson_gamma_posterior(ELICITED, COUNTS)
        n = np.asarray(COUNTS)

        a, b, total, T = ELICITED.alpha, ELICITED.beta, n.sum(), n.size

        def lp(t):
            # unnormalised Gamma prior times Poisson likelihood
            return (a - 1 + total) * np.log(t[0]) - t[0] / b - T * t[0]

        chain = rw_mh_gibbs(lp, ([1e-6], [1e6]), [0.35], [0.5], 40_000, seed=5)
        d = chain.draws[:, 0]
        assert abs(d.mean() - post.mean) < 3 * batch_se(d)

    def test_two_state_balance(self):
        # piecewise-constant target: weight 1 on [0,1), weight 3 on [1,2]
        lp = lambda t: 0.0 if t[0] < 1 else np.log(3.0)  # noqa: E731
        chain = rw_mh_gibbs(lp, ([0.0], [2.0]), [0.7], [0.5], 100_000, seed=6, burn_in=1000)
        s = (chain.draws[:, 0] >= 1).astype(int)
        up = np.sum((s[:-1] == 0) & (s[1:] == 1))
        down = np.sum((s[:-1] == 1) & (s[1:] == 0))
        assert abs(up - down) <= 3 * np.sqrt(up + down)
        assert abs(s.mean() - 0.75) < 3 * batch_se(s)

    def test_chain_stays_in_bounds(self):
        chain = rw_mh_gibbs(lambda t: -t[0] - t[1], ([0.0, 0.0], [1.0, 5.0]), [3.0, 3.0], [0.5, 0.5], 2000, seed=7)
        assert chain.samples.min() >= 0 and chain.samples[:, 0].max() <= 1 and chain.samples[:, 1].max() <= 5

    def test_same_seed_same_chain(self):
        a = rw_mh_gibbs(_normal_logpost, ([-10.0], [10.0]), [1.0], [0.0], 300, seed=8).samples
        b = rw_mh_gibbs(_normal_logpost, ([-10.0], [10.0]), [1.0], [0.0], 300, seed=8).samples
        np.testing.assert_array_equal(a, b)

    def test_infinite_at_start(self):
        with pytest.raises(PosteriorInvalidError):
            rw_mh_gibbs(lambda t: -np.inf, ([0.0], [1.0]), [1.0], [0.5], 10, seed=1)

    def test_default_burn_in(self):
        assert rw_mh_gibbs(_normal_logpost, ([-5.0], [5.0]), [1.0], [0.0], 200, seed=1).burn_in == 20

    def test_take_and_csv(self, tmp_path):
        chain = rw_mh_gibbs(_normal_logpost, ([-5.0], [5.0]), [1.0], [0.0], 100, seed=1, names=("x",))
        with pytest.raises(SamplerExhaustedError):
            chain.take(91)
        assert chain.take(200, rng=np.random.default_rng(0), resample=True).shape == (200, 1)
        header, rows = read_rows(chain.write_csv(tmp_path / "chain.csv"))
        assert header == ["iteration", "x", "accepted_x"]
        assert len(rows) == 100

    def test_state_outside_bounds(self):
        with pytest.raises(PosteriorInvalidError):
            ParamChain(np.array([[2.0]]), np.array([[True]]), np.array([1.0]), np.array([[0.0], [1.0]]))


class TestTuning:
    @pytest.mark.parametrize("acc,direction", [(0.8, 1), (0.05, -1)])
    def test_direction(self, acc, direction):
        new = adjust_scales([1.0], [acc])[0]
        assert np.sign(new - 1.0) == direction

    def test_normal_target(self):
        scales, state, history = tune_proposals(_normal_logpost, ([-10.0], [10.0]), [50.0], [0.0], seed=9)
        assert len(history) > 1
        chain = rw_mh_gibbs(_normal_logpost, ([-10.0], [10.0]), scales, state, 10_000, seed=10, burn_in=0)
        assert 0.15 <= chain.acceptance[0] <= 0.35

    def test_pinned_acceptance(self):
        with pytest.raises(TuningError):
            tune_proposals(lambda t: 0.0, ([-np.inf], [np.inf]), [1.0], [0.0], seed=1, pilot=200)


class TestGaussianApproximation:
    def test_exact_on_gaussian(self):
        mean = np.array([1.0, -2.0])
        cov = np.array([[2.0, 0.6], [0.6, 0.5]])
        prec = np.linalg.inv(cov)
        lp = lambda t: -0.5 * (t - mean) @ prec @ (t - mean)  # noqa: E731
        mode, c = gaussian_posterior_approx(lp, ([-10.0, -10.0], [10.0, 10.0]))
        np.testing.assert_allclose(mode, mean, atol=1e-6)
        np.testing.assert_allclose(c, cov, atol=1e-6)

    def test_flat_prior_mode_is_mle(self, rng):
        x = rng.normal(3.0, 2.0, 200)
        lp = lambda t: float(np.sum(stats.norm.logpdf(x, t[0], 2.0)))  # noqa: E731
        mode, _ = gaussian_posterior_approx(lp, ([-20.0], [20.0]))
        assert mode[0] == pytest.approx(x.mean(), abs=1e-6)

    def test_gamma_quantile(self):
        exact = stats.gamma(13.4, scale=0.046).ppf(0.975)
        assert exact == pytest.approx(0.98763510603, rel=1e-10)
        lp = lambda t: stats.gamma(13.4, scale=0.046).logpdf(t[0])  # noqa: E731
        mode, cov = gaussian_posterior_approx(lp, ([1e-3], [5.0]))
        approx = mode[0] + stats.norm.ppf(0.975) * np.sqrt(cov[0, 0])
        assert approx == pytest.approx(exact, rel=0.05)

    def test_not_concave(self):
        with pytest.raises(ApproximationError):
            gaussian_posterior_approx(lambda t: t[0] ** 2, ([-1.0], [1.0]))


class TestMinVariance:
    def test_equal(self):
        _, w, _ = min_variance_combine([1.0, 3.0], [2.0, 2.0])
        np.testing.assert_allclose(w, [0.5, 0.5])

    def test_one_two(self):
        est, w, var = min_variance_combine([1.0, 2.0], [1.0, 4.0])
        np.testing.assert_allclose(w, [0.8, 0.2], rtol=1e-15)
        assert est == pytest.approx(1.2) and var == pytest.approx(0.8)

    def test_limit(self):
        _, w, _ = min_variance_combine([1.0, 2.0], [1.0, 1e12])
        assert w[0] == pytest.approx(1.0, abs=1e-11)

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3)), min_size=1, max_size=10))
    def test_variance_reduction(self, pairs):
        est, var = zip(*pairs)
        combined, w, v = min_variance_combine(est, var)
        assert v <= min(var) * (1 + 1e-12)
        assert w.sum() == pytest.approx(1.0)
        assert min(est) - 1e-9 <= combined <= max(est) + 1e-9

    def test_nonpositive_variance(self):
        with pytest.raises(ParameterDomainError):
            min_variance_combine([1.0, 2.0], [1.0, 0.0])
