"""Bayesian inference for frequency and severity parameters.

Conjugate Poisson-Gamma updating with credibility weights, prior
elicitation, empirical Bayes across cells, the three-source posterior
(internal data, external prior, expert opinions), a random-walk
Metropolis-Hastings-within-Gibbs sampler and the Gaussian approximation
of a posterior around its mode.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from . import rng as rngmod
from .errors import (
    ApproximationError,
    ElicitationError,
    OptimizationError,
    ParameterDomainError,
    PosteriorInvalidError,
    SamplerExhaustedError,
    TuningError,
)
from .fitlib import fd_hessian
from .io import write_rows

TARGET_ACCEPTANCE = 0.234


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(alpha, beta) with shape ``alpha`` and scale ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterDomainError(f"Gamma needs alpha, beta > 0, got ({self.alpha}, {self.beta})")

    @classmethod
    def from_mean_vco(cls, mean, vco):
        alpha = 1.0 / vco**2
        return cls(alpha, mean / alpha)

    @property
    def mean(self):
        return self.alpha * self.beta

    @property
    def variance(self):
        return self.alpha * self.beta**2

    @property
    def vco(self):
        return 1.0 / np.sqrt(self.alpha)

    def dist(self):
        return stats.gamma(self.alpha, scale=self.beta)

    def logpdf(self, lam):
        return self.dist().logpdf(lam)

    def ppf(self, q):
        return self.dist().ppf(q)

    def sample(self, rng, n):
        return rng.gamma(self.alpha, self.beta, n)

    def with_vco_floor(self, floor=0.05):
        """Same mean with the coefficient of variation raised to ``floor``."""
        if self.vco >= floor:
            return self
        return GammaPrior.from_mean_vco(self.mean, floor)


@dataclass(frozen=True, eq=False)
class ExpertOpinions:
    """Opinions upsilon_m on lambda, each Gamma(xi, lambda/xi) given lambda."""

    opinions: tuple
    xi: float

    def __post_init__(self):
        ops = tuple(float(v) for v in np.atleast_1d(self.opinions))
        if any(v <= 0 for v in ops):
            raise ParameterDomainError("expert opinions must be > 0")
        if not self.xi > 0:
            raise ParameterDomainError(f"expert dispersion xi must be > 0, got {self.xi}")
        object.__setattr__(self, "opinions", ops)

    @property
    def M(self):
        return len(self.opinions)

    @property
    def total(self):
        return float(sum(self.opinions))


@dataclass(frozen=True)
class CredibilityReport:
    weight: float
    data_mean: float
    prior_mean: float
    posterior_mean: float


def poisson_gamma_posterior(prior, counts, vco_floor=None):
    """Conjugate update of a Gamma prior on a Poisson intensity.

    The posterior is Gamma(alpha + sum n, beta / (1 + beta T)); its mean is
    w N_bar + (1 - w) alpha beta with credibility weight w = T/(T + 1/beta).
    ``vco_floor`` optionally bounds the posterior coefficient of variation
    from below while keeping its mean.
    """
    counts = np.asarray(counts, dtype=float).ravel()
    T = counts.size
    post = GammaPrior(prior.alpha + counts.sum(), prior.beta / (1.0 + prior.beta * T))
    w = T / (T + 1.0 / prior.beta)
    nbar = float(counts.mean()) if T else np.nan
    cred_mean = prior.mean if T == 0 else w * nbar + (1 - w) * prior.mean
    if vco_floor is not None:
        post = post.with_vco_floor(vco_floor)
    return post, CredibilityReport(w, nbar, prior.mean, cred_mean)


def elicit_gamma_prior(mean, interval, coverage):
    """Gamma prior with the given mean and Pr[a <= lambda <= b] = coverage."""
    a, b = interval
    if not 0 < a < mean < b:
        raise ElicitationError("need 0 < a < mean < b")
    if not 0 < coverage < 1:
        raise ElicitationError("coverage must lie in (0, 1)")

    def gap(alpha):
        beta = mean / alpha
        return special.gammainc(alpha, b / beta) - special.gammainc(alpha, a / beta) - coverage

    lo, hi = 1e-4, 1e6
    if gap(lo) * gap(hi) > 0:
        raise ElicitationError(f"no shape in [{lo}, {hi}] gives coverage {coverage}")
    alpha = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    if abs(gap(alpha)) > 1e-8:
        raise ElicitationError("root search did not reach the coverage tolerance")
    return GammaPrior(alpha, mean / alpha)


def _eb_loglik(alpha, beta, totals, exposures, const):
    return float(np.sum(
        special.gammaln(alpha + totals) - special.gammaln(alpha) - alpha * np.log(beta)
        - (alpha + totals) * np.log(1.0 / beta + exposures)
    ) + const)


def empirical_bayes_gamma(counts, volumes=None, n_starts=5, seed=0):
    """Gamma prior maximising the marginal likelihood across J cells.

    ``counts`` is a list of per-cell count arrays; ``volumes`` gives the
    matching exposures V_j(k) (default 1). Cell j contributes
    Gamma(alpha + S_j) / (Gamma(alpha) beta^alpha) (1/beta + sum V)^-(alpha+S_j)
    times a factor free of (alpha, beta).
    """
    counts = [np.asarray(c, dtype=float) for c in counts]
    if len(counts) < 2:
        raise ParameterDomainError("empirical Bayes needs at least two cells")
    if volumes is None:
        volumes = [np.ones_like(c) for c in counts]
    volumes = [np.asarray(v, dtype=float) for v in volumes]
    totals = np.array([c.sum() for c in counts])
    exposures = np.array([v.sum() for v in volumes])
    const = float(sum(np.sum(c * np.log(v) - special.gammaln(c + 1)) for c, v in zip(counts, volumes)))
    rates = totals / exposures
    m = max(rates.mean(), 1e-6)
    spread = max(rates.var() - m * np.mean(1.0 / exposures), 1e-3 * m * m)
    u0 = np.log([m * m / spread, spread / m])

    def nll(u):
        a, b = np.exp(u)
        v = -_eb_loglik(a, b, totals, exposures, const)
        return v if np.isfinite(v) else 1e300

    rng = rngmod.stream(seed, rngmod.FIT, 3)
    best = None
    for k in range(n_starts):
        start = u0 if k == 0 else u0 + 0.5 * rng.standard_normal(2)
        r = optimize.minimize(nll, start, method="Nelder-Mead",
                              options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 10000})
        if r.success and (best is None or r.fun < best.fun):
            best = r
    if best is None or not np.all(np.abs(best.x) < 30):
        raise OptimizationError("marginal likelihood has no interior maximum")
    return GammaPrior(*np.exp(best.x))


@dataclass(frozen=True)
class GIGPosterior:
    """Density proportional to lambda^nu exp(-omega lambda - phi / lambda)."""

    nu: float
    omega: float
    phi: float

    def __post_init__(self):
        if not self.omega > 0 or self.phi < 0 or (self.phi == 0 and not self.nu > -1):
            raise PosteriorInvalidError(
                f"(nu, omega, phi) = ({self.nu}, {self.omega}, {self.phi}) is not normalisable"
            )

    def _log_kernel_t(self, t):
        # log density of t = log(lambda), including the Jacobian
        with np.errstate(over="ignore"):
            v = (self.nu + 1) * t - self.omega * np.exp(t)
            # skip the expert term when phi = 0 so the left tail is not 0 * inf
            return v - self.phi * np.exp(-t) if self.phi else v

    @property
    def mode_log(self):
        n1 = self.nu + 1
        z = (n1 + np.sqrt(n1 * n1 + 4 * self.omega * self.phi)) / (2 * self.omega)
        return float(np.log(z))

    def _integral(self, k):
        t0 = self.mode_log
        g0 = self._log_kernel_t(t0)
        f = lambda t: np.exp(self._log_kernel_t(t) + k * t - g0)  # noqa: E731
        val = 0.0
        for lo, hi in ((-np.inf, t0), (t0, np.inf)):
            val += integrate.quad(f, lo, hi, epsrel=1e-11, epsabs=0, limit=200)[0]
        return val

    def moment(self, k):
        """E[lambda^k] by quadrature in log(lambda)."""
        return self._integral(k) / self._integral(0)

    @property
    def mean(self):
        return self.moment(1)

    @property
    def variance(self):
        m1 = self.moment(1)
        return self.moment(2) - m1 * m1

    def _scipy(self):
        if self.phi == 0:
            return stats.gamma(self.nu + 1, scale=1.0 / self.omega)
        scale = np.sqrt(self.phi / self.omega)
        return stats.geninvgauss(self.nu + 1, 2 * np.sqrt(self.phi * self.omega), scale=scale)

    def pdf(self, lam):
        return self._scipy().pdf(lam)

    def sample(self, rng, n):
        return self._scipy().rvs(size=n, random_state=rng)


def three_source_posterior(prior, counts, experts):
    """Posterior of lambda given counts, a Gamma prior and expert opinions."""
    counts = np.asarray(counts, dtype=float).ravel()
    M = 0 if experts is None else experts.M
    xi = 0.0 if experts is None else experts.xi
    total = 0.0 if experts is None else experts.total
    return GIGPosterior(
        nu=prior.alpha - 1 + counts.sum() - M * xi,
        omega=counts.size + 1.0 / prior.beta,
        phi=xi * total,
    )


def estimator_trajectories(counts, prior, experts):
    """Intensity estimates after each year 1..T by three estimators.

    Returns a dict with the MLE (running mean), the two-source Bayes
    estimate (data and prior) and the three-source estimate (data, prior
    and experts).
    """
    counts = np.asarray(counts, dtype=float)
    years = np.arange(1, counts.size + 1)
    mle = np.cumsum(counts) / years
    two = np.array([poisson_gamma_posterior(prior, counts[:k])[0].mean for k in years])
    three = np.array([three_source_posterior(prior, counts[:k], experts).mean for k in years])
    return {"year": years, "mle": mle, "two_source": two, "three_source": three}


# -- MCMC -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParamChain:
    """Parameter draws of a sampler; rows before ``burn_in`` are tuning-free warm-up."""

    samples: np.ndarray
    accepted: np.ndarray
    scales: np.ndarray
    bounds: np.ndarray
    burn_in: int = 0
    names: tuple = ()

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", s)
        lo, hi = np.asarray(self.bounds, dtype=float)
        if np.any(s < lo) or np.any(s > hi):
            raise PosteriorInvalidError("chain state outside its bounds")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"theta{i}" for i in range(s.shape[1])))

    @property
    def draws(self):
        return self.samples[self.burn_in :]

    @property
    def acceptance(self):
        acc = np.asarray(self.accepted)[self.burn_in :]
        return acc.mean(axis=0) if acc.size else np.zeros(self.samples.shape[1])

    def take(self, k, rng=None, resample=False):
        """First ``k`` post-burn-in draws, or ``k`` resampled ones."""
        d = self.draws
        if resample:
            rng = rngmod.as_generator(rng)
            return d[rng.integers(0, d.shape[0], k)]
        if k > d.shape[0]:
            raise SamplerExhaustedError(f"chain has {d.shape[0]} draws, {k} requested")
        return d[:k]

    def rows(self):
        acc = np.asarray(self.accepted, dtype=int)
        return [(i, *self.samples[i], *acc[i]) for i in range(self.samples.shape[0])]

    def write_csv(self, path):
        header = ["iteration", *self.names, *(f"accepted_{n}" for n in self.names)]
        return write_rows(path, header, self.rows())


def _trunc_mass(c, sigma, a, b):
    return special.ndtr((b - c) / sigma) - special.ndtr((a - c) / sigma)


def rw_mh_gibbs(logpost, bounds, scales, init, M, seed, burn_in=None, names=()):
    """Coordinate-wise random-walk Metropolis-Hastings with truncated proposals.

    Coordinate i proposes from Normal(theta_i, sigma_i) truncated to
    [a_i, b_i]. The acceptance ratio carries the proposal-density ratio,
    which reduces to Z(theta_i)/Z(theta_i*) with Z(c) the proposal mass
    inside the bounds.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in bounds)
    scales = np.asarray(scales, dtype=float)
    theta = np.array(init, dtype=float)
    d = theta.size
    if np.any(theta < lo) or np.any(theta > hi):
        raise ParameterDomainError("initial state outside the bounds")
    if np.any(scales <= 0):
        raise ParameterDomainError("proposal scales must be > 0")
    lp = logpost(theta)
    if not np.isfinite(lp):
        raise PosteriorInvalidError("log-posterior is not finite at the initial state")
    burn_in = M // 10 if burn_in is None else int(burn_in)
    rng = rngmod.stream(seed, rngmod.MCMC) if not isinstance(seed, np.random.Generator) else seed
    u = rng.random((M, d, 2))
    out = np.empty((M, d))
    acc = np.zeros((M, d), dtype=bool)
    bounded = np.isfinite(lo) | np.isfinite(hi)
    for m in range(M):
        for i in range(d):
            c, s = theta[i], scales[i]
            if bounded[i]:
                pa, pb = special.ndtr((lo[i] - c) / s), special.ndtr((hi[i] - c) / s)
                prop = c + s * special.ndtri(pa + u[m, i, 0] * (pb - pa))
                prop = min(max(prop, lo[i]), hi[i])
                log_kernel = np.log(pb - pa) - np.log(_trunc_mass(prop, s, lo[i], hi[i]))
            else:
                prop = c + s * special.ndtri(u[m, i, 0])
                log_kernel = 0.0
            cand = theta.copy()
            cand[i] = prop
            lp_new = logpost(cand)
            log_r = lp_new - lp + log_kernel
            if np.log(u[m, i, 1]) < log_r:
                theta, lp = cand, lp_new
                acc[m, i] = True
        out[m] = theta
    return ParamChain(out, acc, scales.copy(), np.vstack([lo, hi]), burn_in, tuple(names))


def adjust_scales(scales, acceptance, target=TARGET_ACCEPTANCE):
    """One multiplicative update sigma *= clip(acceptance / target, 0.1, 10)."""
    factor = np.clip(np.asarray(acceptance, dtype=float) / target, 0.1, 10.0)
    return np.asarray(scales, dtype=float) * factor


def tune_proposals(logpost, bounds, scales, init, seed, pilot=1000, max_rounds=20, band=(0.15, 0.35)):
    """Adjust proposal scales on pilot chains until acceptance is in ``band``.

    Pilot draws are discarded. Returns ``(scales, last_state, history)``
    where history lists the per-round acceptance rates.
    """
    scales = np.asarray(scales, dtype=float)
    state = np.array(init, dtype=float)
    history = []
    for k in range(max_rounds + 1):
        chain = rw_mh_gibbs(logpost, bounds, scales, state, pilot, rngmod.seed_sequence(seed, rngmod.MCMC, 1000 + k),
                            burn_in=0)
        acc = chain.acceptance
        history.append(acc)
        state = chain.samples[-1]
        if np.all((acc >= band[0]) & (acc <= band[1])):
            return scales, state, history
        if k < max_rounds:
            scales = adjust_scales(scales, acc)
    if np.any((acc == 0) | (acc == 1)):
        raise TuningError(f"acceptance pinned at {acc} after {max_rounds} adjustments")
    warnings.warn(f"acceptance {acc} outside {band} after {max_rounds} adjustments", stacklevel=2)
    return scales, state, history


# -- Gaussian approximation and pooling --------------------------------------


def _fd_gradient(fn, x):
    h = np.maximum(1e-5, 1e-5 * np.abs(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h[i])
    return g


def gaussian_posterior_approx(logpost, box, n_starts=5, seed=0):
    """Mode and inverse negative Hessian of ``logpost`` inside ``box``."""
    lo, hi = (np.asarray(v, dtype=float) for v in box)
    rng = rngmod.stream(seed, rngmod.FIT, 4)
    starts = [0.5 * (lo + hi)] + [lo + (hi - lo) * rng.random(lo.size) for _ in range(n_starts - 1)]

    def neg(x):
        v = logpost(x)
        return -v if np.isfinite(v) else 1e300

    best = None
    for s in starts:
        r = optimize.minimize(neg, s, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        if best is None or r.fun < best.fun:
            best = r
    x = best.x.copy()
    # Newton polish: exact in one step for a quadratic log-posterior
    for _ in range(20):
        H = fd_hessian(logpost, x)
        g = _fd_gradient(logpost, x)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        cand = np.clip(x + step, lo, hi)
        if logpost(cand) < logpost(x) - 1e-12:
            break
        done = np.all(np.abs(cand - x) <= 1e-12 * np.maximum(1, np.abs(x)))
        x = cand
        if done:
            break
    H = fd_hessian(logpost, x)
    info = -0.5 * (H + H.T)
    if not np.all(np.linalg.eigvalsh(info) > 0):
        raise ApproximationError("Hessian at the mode is not negative definite")
    return x, np.linalg.inv(info)


def min_variance_combine(estimates, variances):
    """Inverse-variance weighted combination of unbiased estimators.

    Returns ``(combined, weights, combined_variance)``.
    """
    est = np.asarray(estimates, dtype=float)
    var = np.asarray(variances, dtype=float)
    if np.any(~(var > 0)):
        raise ParameterDomainError("variances must be > 0")
    prec = 1.0 / var
    w = prec / prec.sum()
    return float(np.dot(w, est)), w, float(1.0 / prec.sum())
