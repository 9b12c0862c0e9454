"""Frequentist estimation for data reported above a threshold.

Counts above the threshold are Poisson(lambda * (1 - F(L))) (or the
thinned negative binomial); amounts are iid from the truncated density
f(x) / (1 - F(L)) on [L, inf).
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special, stats

from . import rng as rngmod
from .aggregate import discrete_quantile, discretize_severity, fft_compound
from .distlib.frequency import NegBinomial, Poisson
from .distlib.severity import GB2, GCD, GPD, GandH, Lognormal, Shifted
from .errors import (
    DataError,
    EmptyTailError,
    OptimizationError,
    ParameterDomainError,
)
from .io import write_rows

_BIG = 1e300


@dataclass(frozen=True, eq=False)
class LossRecord:
    """Losses reported above ``threshold`` over ``n_periods`` years.

    ``periods`` holds the 0-based year of each amount; ``counts`` is the
    number of amounts per year including years with no loss.
    """

    amounts: np.ndarray
    periods: np.ndarray
    n_periods: int
    threshold: float = 0.0
    label: str = ""

    def __post_init__(self):
        x = np.asarray(self.amounts, dtype=float)
        t = np.asarray(self.periods, dtype=np.int64)
        if x.shape != t.shape:
            raise DataError("amounts and periods differ in length")
        if np.any(x < self.threshold):
            raise DataError(f"{int(np.sum(x < self.threshold))} amounts below threshold {self.threshold}")
        if t.size and (t.min() < 0 or t.max() >= self.n_periods):
            raise DataError("period index outside 0..n_periods-1")
        object.__setattr__(self, "amounts", x)
        object.__setattr__(self, "periods", t)

    @classmethod
    def from_years(cls, years, amounts, threshold=0.0, first=None, last=None, label=""):
        """Build from calendar years; the span defaults to the observed one."""
        years = np.asarray(years, dtype=np.int64)
        first = int(years.min()) if first is None else int(first)
        last = int(years.max()) if last is None else int(last)
        return cls(amounts, years - first, last - first + 1, threshold, label)

    @classmethod
    def from_counts(cls, counts, amounts, threshold=0.0, label=""):
        counts = np.asarray(counts, dtype=np.int64)
        periods = np.repeat(np.arange(counts.size), counts)
        return cls(amounts, periods, counts.size, threshold, label)

    @property
    def counts(self):
        return np.bincount(self.periods, minlength=self.n_periods)


@dataclass(frozen=True, eq=False)
class FitResult:
    """Point estimate, covariance and diagnostics of one fit.

    ``names`` and ``estimate`` list frequency parameters first, then
    severity parameters, in natural (not transformed) units.
    """

    names: tuple
    estimate: np.ndarray
    covariance: Optional[np.ndarray]
    loglik: float
    converged: bool
    frequency: object = None
    severity: object = None
    lambda_L: float = np.nan
    threshold: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def std_errors(self):
        if self.covariance is None:
            return np.full(len(self.names), np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def as_dict(self):
        return dict(zip(self.names, self.estimate))

    def rows(self):
        return [(n, e, s) for n, e, s in zip(self.names, self.estimate, self.std_errors)]

    def write_csv(self, path):
        return write_rows(path, ["parameter", "estimate", "std_error"], self.rows())


# -- severity families ------------------------------------------------------
# each entry: parameter names, constructor from natural values, map from an
# unconstrained vector to natural values, and its inverse


def _softabs(v):
    return abs(v)


_FAMILIES = {
    "lognormal": (
        ("mu", "sigma"),
        lambda p: Lognormal(p[0], p[1]),
        lambda u: (u[0], np.exp(u[1])),
        lambda p: (p[0], np.log(p[1])),
    ),
    "gpd": (
        ("xi", "beta"),
        lambda p: GPD(p[0], p[1]),
        lambda u: (_softabs(u[0]), np.exp(u[1])),
        lambda p: (p[0], np.log(p[1])),
    ),
    "gb2": (
        ("a", "b", "p", "q"),
        lambda p: GB2(*p),
        lambda u: tuple(np.exp(u)),
        lambda p: tuple(np.log(p)),
    ),
    "gcd": (
        ("alpha", "M", "c"),
        lambda p: GCD(*p),
        lambda u: (np.exp(u[0]), np.exp(u[1]), u[2] * u[2]),
        lambda p: (np.log(p[0]), np.log(p[1]), np.sqrt(p[2])),
    ),
    "gandh": (
        ("a", "b", "g", "h"),
        lambda p: GandH(*p),
        lambda u: (u[0], np.exp(u[1]), u[2], u[3] * u[3]),
        lambda p: (p[0], np.log(p[1]), p[2], np.sqrt(p[3])),
    ),
}

SEVERITY_FAMILIES = tuple(_FAMILIES)


def _family(name):
    key = name.lower().replace("-", "").replace("_", "")
    if key not in _FAMILIES:
        raise ParameterDomainError(f"unknown severity family {name!r}")
    return key, _FAMILIES[key]


def _initial(key, x, L):
    lx = np.log(x)
    med = float(np.median(x))
    if key == "lognormal":
        return (float(lx.mean()), float(max(lx.std(), 1e-3)))
    if key == "gpd":
        y = x - L
        m, v = float(y.mean()), float(max(y.var(), 1e-12))
        xi = float(np.clip(0.5 * (1 - m * m / v), 0.01, 0.9))
        beta_u = 0.5 * m * (m * m / v + 1)
        return (xi, float(max(beta_u - xi * L, 1e-3 * beta_u)))
    if key == "gb2":
        return (1.0, med, 1.0, 2.0)
    if key == "gcd":
        return (2.0, med, 0.0)
    q10, q90 = np.quantile(x, [0.1, 0.9])
    return (med, float(max(q90 - q10, 1e-6) / 2.56), 0.1, 0.1)


def severity_nll(model, x, L):
    """Negative log-likelihood of amounts ``x`` under ``model`` truncated at L."""
    s_l = float(model.sf(L)) if L > 0 else 1.0
    if not s_l > 0:
        return _BIG
    with np.errstate(all="ignore"):
        ll = np.sum(model.logpdf(x)) - x.size * np.log(s_l)
    return float(-ll) if np.isfinite(ll) else _BIG


def _safe(fn):
    def wrapped(u):
        try:
            v = fn(u)
        except (ParameterDomainError, ValueError, FloatingPointError, OverflowError, ZeroDivisionError):
            return _BIG
        return v if np.isfinite(v) else _BIG

    return wrapped


def _multistart(objective, u0, n_starts, rng, scale=0.5, tol=1e-10):
    """Nelder-Mead from ``u0`` and ``n_starts - 1`` jittered copies."""
    u0 = np.asarray(u0, dtype=float)
    starts = [u0] + [u0 + scale * rng.standard_normal(u0.size) for _ in range(n_starts - 1)]
    best, runs = None, []
    for s in starts:
        r = optimize.minimize(
            objective, s, method="Nelder-Mead",
            options={"xatol": tol, "fatol": tol, "maxiter": 4000 * u0.size, "maxfev": 8000 * u0.size},
        )
        # restart once from the reported optimum; simplex searches stall on ridges
        r = optimize.minimize(
            objective, r.x, method="Nelder-Mead",
            options={"xatol": tol, "fatol": tol, "maxiter": 4000 * u0.size, "maxfev": 8000 * u0.size},
        )
        runs.append(r)
        if r.fun < _BIG and (best is None or r.fun < best.fun):
            best = r
    if best is None:
        raise OptimizationError("no start reached a finite objective")
    return best, runs


def _fit_gandh_quantiles(x, L, rng, n_starts, levels=(0.1, 0.5, 0.9, 0.99)):
    _, (names, build, to_nat, from_nat) = _family("gandh")
    target = np.quantile(x, levels)
    lv = np.asarray(levels)

    def objective(u):
        m = build(to_nat(u))
        f_l = float(m.cdf(L)) if L > 0 else 0.0
        if f_l >= 1:
            return _BIG
        fitted = m.ppf(f_l + lv * (1 - f_l))
        return float(np.sum((fitted / target - 1.0) ** 2))

    best, runs = _multistart(_safe(objective), from_nat(_initial("gandh", x, L)), n_starts, rng)
    return best, runs


def fit_severity(x, L, family, n_starts=5, seed=0):
    """Maximum likelihood (or quantile matching for g-and-h) of a truncated severity.

    Returns ``(natural parameters, model, optimiser result, runs)``.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DataError("need at least two severity observations")
    key, (names, build, to_nat, from_nat) = _family(family)
    rng = rngmod.stream(seed, rngmod.FIT)
    if key == "lognormal" and L == 0:
        lx = np.log(x)
        p = (float(lx.mean()), float(lx.std()))
        if not p[1] > 0:
            raise OptimizationError("all amounts equal; lognormal sigma is zero")
        return p, build(p), None, []
    if key == "gandh":
        best, runs = _fit_gandh_quantiles(x, L, rng, n_starts)
    else:
        best, runs = _multistart(_safe(lambda u: severity_nll(build(to_nat(u)), x, L)),
                                 from_nat(_initial(key, x, L)), n_starts, rng)
    p = tuple(float(v) for v in to_nat(best.x))
    return p, build(p), best, runs


def _nb_fit(counts, rng, n_starts):
    m, v = counts.mean(), counts.var()
    if not v > m:
        raise OptimizationError("count variance does not exceed the mean; negative binomial MLE diverges")
    r0 = m * m / (v - m)
    p0 = m / v

    def nll(u):
        r, p = np.exp(u[0]), special.expit(u[1])
        return -float(np.sum(stats.nbinom.logpmf(counts, r, p)))

    best, _ = _multistart(_safe(nll), (np.log(r0), special.logit(p0)), n_starts, rng)
    return float(np.exp(best.x[0])), float(special.expit(best.x[1]))


def _freq_loglik(freq_family, fparams, counts, s):
    if freq_family == "poisson":
        lam = fparams[0]
        if not lam > 0:
            return -np.inf
        return float(np.sum(stats.poisson.logpmf(counts, lam * s)))
    r, p = fparams
    if not (r > 0 and 0 < p < 1):
        return -np.inf
    p_l = p / (p + s * (1 - p))
    return float(np.sum(stats.nbinom.logpmf(counts, r, p_l)))


def joint_loglik(theta, data, family, freq_family="poisson"):
    """Full log-likelihood of counts and amounts in natural parameters."""
    key, (names, build, _, _) = _family(family)
    nf = 1 if freq_family == "poisson" else 2
    try:
        sev = build(tuple(theta[nf:]))
    except ParameterDomainError:
        return -np.inf
    L = data.threshold
    s = float(sev.sf(L)) if L > 0 else 1.0
    if not s > 0:
        return -np.inf
    ll_sev = -severity_nll(sev, data.amounts, L)
    if ll_sev <= -_BIG:
        return -np.inf
    return _freq_loglik(freq_family, theta[:nf], data.counts, s) + ll_sev


def fit_truncated_mle(data, L=None, severity="lognormal", frequency="poisson", n_starts=5, seed=0):
    """Fit frequency and severity to losses reported above L.

    The severity maximises the product of truncated densities; the
    observed intensity lambda_L is the mean annual count and the
    ground-up intensity is lambda_L / (1 - F(L)). Uncertainty comes from
    the observed information of the joint likelihood.
    """
    L = data.threshold if L is None else float(L)
    if L != data.threshold:
        data = LossRecord(data.amounts, data.periods, data.n_periods, L, data.label)
    freq_family = frequency.lower()
    if freq_family not in ("poisson", "negbinomial"):
        raise ParameterDomainError(f"unknown frequency family {frequency!r}")
    key, (names, _, _, _) = _family(severity)
    p, sev, best, runs = fit_severity(data.amounts, L, key, n_starts, seed)
    s = float(sev.sf(L)) if L > 0 else 1.0
    if s <= 1e-12:
        raise EmptyTailError(f"fitted F(L) = {1 - s:.15g} leaves no mass above the threshold")
    counts = data.counts
    lam_l = float(counts.mean())
    if freq_family == "poisson":
        fparams = (lam_l / s,)
        freq = Poisson(fparams[0])
        fnames = ("lambda",)
    else:
        r, p_l = _nb_fit(counts, rngmod.stream(seed, rngmod.FIT, 1), n_starts)
        # thinning NB(r, p) by s gives NB(r, p/(p + s(1-p))); invert for p
        p_ground = p_l * s / (1 - p_l + p_l * s)
        fparams = (r, p_ground)
        freq = NegBinomial(r, p_ground)
        fnames = ("r", "p")
    theta = np.array(fparams + tuple(p), dtype=float)
    fn = lambda t: joint_loglik(t, data, key, freq_family)  # noqa: E731
    ll = fn(theta)
    cov = observed_information(fn, theta) if key != "gandh" or np.isfinite(ll) else None
    n_ok = sum(r.fun < _BIG for r in runs) if runs else 1
    diag = {
        "n_starts": len(runs) if runs else 0,
        "n_finite": n_ok,
        "optimizer_message": None if best is None else str(best.message),
        "method": "quantile-matching" if key == "gandh" else "mle",
        "mass_above_threshold": s,
    }
    converged = best is None or bool(best.success) or best.fun < _BIG
    return FitResult(
        names=fnames + names,
        estimate=theta,
        covariance=cov,
        loglik=ll,
        converged=converged,
        frequency=freq,
        severity=sev,
        lambda_L=lam_l,
        threshold=L,
        diagnostics=diag,
    )


def fit_gpd_exceedances(x, u, n_starts=5, seed=0):
    """GPD fit to the exceedances x - u of amounts above ``u``.

    Used for the tail of a spliced severity.
    """
    x = np.asarray(x, dtype=float)
    y = x[x > u] - u
    if y.size < 2:
        raise DataError("need at least two exceedances")
    _, (names, build, to_nat, from_nat) = _family("gpd")
    rng = rngmod.stream(seed, rngmod.FIT, 2)
    best, runs = _multistart(_safe(lambda v: severity_nll(build(to_nat(v)), y, 0.0)),
                             from_nat(_initial("gpd", y, 0.0)), n_starts, rng)
    p = tuple(float(v) for v in to_nat(best.x))
    fn = lambda t: -severity_nll(GPD(*t), y, 0.0) if t[0] >= 0 and t[1] > 0 else -np.inf  # noqa: E731
    theta = np.array(p)
    return FitResult(
        names=names,
        estimate=theta,
        covariance=observed_information(fn, theta),
        loglik=fn(theta),
        converged=bool(best.success),
        severity=GPD(*p),
        threshold=float(u),
        diagnostics={"n_exceedances": int(y.size)},
    )


# -- uncertainty ------------------------------------------------------------


def fd_hessian(fn, theta):
    """Central finite-difference Hessian, steps max(1e-5, 1e-5 |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    h = np.maximum(1e-5, 1e-5 * np.abs(theta))
    f0 = fn(theta)
    H = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (fn(theta + ei) - 2 * f0 + fn(theta - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                fn(theta + ei + ej) - fn(theta + ei - ej) - fn(theta - ei + ej) + fn(theta - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def observed_information(loglik, theta):
    """Inverse of the negative log-likelihood Hessian at ``theta``.

    Returns ``None`` with a warning when the Hessian is not negative
    definite (saddle point or boundary optimum).
    """
    H = fd_hessian(loglik, theta)
    info = -0.5 * (H + H.T)
    if not np.all(np.isfinite(info)):
        warnings.warn("non-finite Hessian; optimum on the boundary?", stacklevel=2)
        return None
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        warnings.warn("Hessian not negative definite; covariance unavailable", stacklevel=2)
        return None
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    samples: np.ndarray
    n_failed: int

    def percentile_interval(self, level=0.95):
        if self.samples.shape[0] < 2:
            return None
        a = 0.5 * (1 - level)
        return np.quantile(self.samples, [a, 1 - a], axis=0)

    def std(self):
        return self.samples.std(axis=0, ddof=1) if self.samples.shape[0] > 1 else None


def bootstrap(data, fit_fn, B, seed, threads=1):
    """Refit ``fit_fn`` on B resamples (with replacement) of ``data``.

    Replicate b draws from the stream keyed ``(BOOTSTRAP, b)``; failed
    fits are skipped and counted.
    """
    data = np.asarray(data)
    if B < 100:
        warnings.warn(f"B = {B} replicates is too few for percentile intervals", stacklevel=2)

    def one(b):
        r = rngmod.stream(seed, rngmod.BOOTSTRAP, b)
        idx = r.integers(0, data.shape[0], data.shape[0])
        try:
            return np.atleast_1d(np.asarray(fit_fn(data[idx]), dtype=float))
        except (ArithmeticError, ValueError, OptimizationError):
            return None

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one, range(B)))
    else:
        out = [one(b) for b in range(B)]
    ok = [o for o in out if o is not None]
    samples = np.vstack(ok) if ok else np.empty((0, 0))
    return BootstrapResult(samples, B - len(ok))


def ks_statistic(sample, model):
    """Sup distance between the empirical cdf of ``sample`` and the model cdf."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise DataError("empty sample")
    return float(stats.kstest(sample, model.cdf).statistic)


# -- truncation bias --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BiasCurve:
    variant: str
    fractions: np.ndarray
    bias: np.ndarray
    true_quantile: np.ndarray
    false_quantile: np.ndarray
    false_params: list


def truncated_log_moments(mu, sigma, L, shift=False):
    """E[t], E[t^2] under log X ~ Normal(mu, sigma) conditioned on X >= L.

    t is log X, or log(X - L) when ``shift`` is set. Computed by quadrature.
    """
    a = np.log(L)
    s_l = special.ndtr(-(a - mu) / sigma)

    def g(y):
        return np.exp(-0.5 * ((y - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi) * s_l)

    t = (lambda y: np.log(L) + np.log(np.expm1(y - a))) if shift else (lambda y: y)
    hi = mu + 14 * sigma
    pts = [a + 1e-6, a + 1e-3, a + 0.1] if shift else None
    m1 = integrate.quad(lambda y: t(y) * g(y), a, hi, limit=500, points=pts, epsabs=1e-12)[0]
    m2 = integrate.quad(lambda y: t(y) ** 2 * g(y), a, hi, limit=500, points=pts, epsabs=1e-12)[0]
    return m1, m2


def _kl_lognormal_fit(mu, sigma, L, variant):
    """Lognormal parameters minimising KL from the truncated law.

    For the naive and shifted variants the minimiser matches the first two
    moments of log X (resp. log(X - L)). For the truncated variant the
    objective also carries log(1 - F(L)) and is minimised numerically.
    """
    if variant == "naive":
        m1, m2 = truncated_log_moments(mu, sigma, L)
        return m1, np.sqrt(m2 - m1 * m1)
    if variant == "shifted":
        m1, m2 = truncated_log_moments(mu, sigma, L, shift=True)
        return m1, np.sqrt(m2 - m1 * m1)
    m1, m2 = truncated_log_moments(mu, sigma, L)
    a = np.log(L)

    def cross_entropy(u):
        m, s = u[0], np.exp(u[1])
        e_sq = m2 - 2 * m * m1 + m * m
        return np.log(s) + e_sq / (2 * s * s) + special.log_ndtr(-(a - m) / s)

    r = optimize.minimize(cross_entropy, (m1, np.log(np.sqrt(m2 - m1 * m1))), method="Nelder-Mead",
                          options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
    return r.x[0], np.exp(r.x[1])


def truncation_bias_experiment(sigma, lam_L, fractions, variant, mu=3.0, M=2**16, q=0.999):
    """Relative 0.999-quantile error of a model that mishandles truncation.

    For each fraction the threshold L is the true severity quantile at that
    fraction and the true ground-up intensity is lam_L / (1 - fraction).
    The false model is fitted in the infinite-sample limit (KL
    minimisation) and both annual-loss quantiles use FFT on a shared
    lattice.
    """
    variant = variant.lower()
    if variant not in ("naive", "shifted", "truncated"):
        raise ValueError(f"unknown variant {variant!r}")
    fractions = np.asarray(fractions, dtype=float)
    true_sev = Lognormal(mu, sigma)
    out_b, out_t, out_f, params = [], [], [], []
    for frac in fractions:
        if frac == 0:
            # nothing is missing, so every variant coincides with the true model
            lam_true = lam_false = lam_L
            false_sev, m, s = true_sev, mu, sigma
        else:
            L = float(true_sev.ppf(frac))
            lam_true = lam_L / (1 - frac)
            m, s = _kl_lognormal_fit(mu, sigma, L, variant)
            if variant == "naive":
                false_sev, lam_false = Lognormal(m, s), lam_L
            elif variant == "shifted":
                false_sev, lam_false = Shifted(Lognormal(m, s), L), lam_L
            else:
                fitted = Lognormal(m, s)
                false_sev, lam_false = fitted, lam_L / float(fitted.sf(L))
        # one lattice for both models, wide enough for the heavier of the two
        reach = max(float(true_sev.isf((1 - q) / lam_true)), float(false_sev.isf((1 - q) / lam_false)))
        step = 8 * reach / M
        qt = discrete_quantile(fft_compound(Poisson(lam_true), discretize_severity(true_sev, step, M)), q)
        qf = discrete_quantile(fft_compound(Poisson(lam_false), discretize_severity(false_sev, step, M)), q)
        out_b.append((qf - qt) / qt)
        out_t.append(qt)
        out_f.append(qf)
        params.append((m, s, lam_false))
    return BiasCurve(variant, fractions, np.array(out_b), np.array(out_t), np.array(out_f), params)
