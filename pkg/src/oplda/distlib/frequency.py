"""Annual loss-count models of the Panjer (a, b) class."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from ..errors import ParameterDomainError, SupportError


class FrequencyModel:
    """Common interface for count distributions.

    Subclasses are frozen dataclasses; instances are hashable and safe to
    share between threads.
    """

    def _scipy(self):
        raise NotImplementedError

    def pmf(self, k):
        return self._scipy().pmf(k)

    def cdf(self, k):
        return self._scipy().cdf(k)

    def mean(self):
        raise NotImplementedError

    def variance(self):
        raise NotImplementedError

    def third_cumulant(self):
        raise NotImplementedError

    def pgf(self, s):
        raise NotImplementedError

    def panjer_coeffs(self):
        raise NotImplementedError

    def ppf(self, u):
        """Smallest count k with cdf(k) >= u, by cumulative-table search."""
        u = np.asarray(u, dtype=float)
        table = _cdf_table(self)
        k = np.searchsorted(table, u, side="left")
        beyond = k >= table.size
        if np.any(beyond):
            k = np.where(beyond, self._scipy().ppf(np.where(beyond, u, 0.5)), k)
        return k.astype(np.int64)

    def sample(self, rng, size):
        """Inversion sampling: one uniform per count."""
        return self.ppf(_open_uniform(rng, size))


@lru_cache(maxsize=256)
def _cdf_table(model):
    # mean + 40 sd lies beyond the last double below 1 for every family here
    hi = int(model.mean() + 40.0 * np.sqrt(model.variance())) + 50
    table = np.cumsum(model.pmf(np.arange(hi + 1)))
    return np.minimum(table, 1.0)


def _open_uniform(rng, size):
    # random() is k/2**53; the shift keeps draws in the open interval (0, 1)
    return rng.random(size) + 2.0**-54


@dataclass(frozen=True)
class Poisson(FrequencyModel):
    lam: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ParameterDomainError(f"Poisson intensity must be >= 0, got {self.lam}")

    def _scipy(self):
        return stats.poisson(self.lam)

    def mean(self):
        return float(self.lam)

    def variance(self):
        return float(self.lam)

    def third_cumulant(self):
        return float(self.lam)

    def pgf(self, s):
        return np.exp(self.lam * (np.asarray(s) - 1.0))

    def panjer_coeffs(self):
        p0 = np.exp(-self.lam)
        return 0.0, float(self.lam), float(p0), float(self.lam * p0)


@dataclass(frozen=True)
class NegBinomial(FrequencyModel):
    """Pr[N=k] = C(k+r-1, k) p^r (1-p)^k."""

    r: float
    p: float

    def __post_init__(self):
        if not self.r > 0:
            raise ParameterDomainError(f"NegBinomial r must be > 0, got {self.r}")
        if not 0 < self.p < 1:
            raise ParameterDomainError(f"NegBinomial p must be in (0,1), got {self.p}")

    def _scipy(self):
        return stats.nbinom(self.r, self.p)

    def mean(self):
        return self.r * (1 - self.p) / self.p

    def variance(self):
        return self.r * (1 - self.p) / self.p**2

    def third_cumulant(self):
        return self.r * (1 - self.p) * (2 - self.p) / self.p**3

    def pgf(self, s):
        return (self.p / (1.0 - (1.0 - self.p) * np.asarray(s))) ** self.r

    def panjer_coeffs(self):
        a = 1.0 - self.p
        b = (self.r - 1.0) * (1.0 - self.p)
        p0 = self.p**self.r
        return a, b, p0, self.r * p0 * (1.0 - self.p)


@dataclass(frozen=True)
class Binomial(FrequencyModel):
    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterDomainError(f"Binomial n must be a positive integer, got {self.n}")
        if not 0 < self.p <= 1:
            raise ParameterDomainError(f"Binomial p must be in (0,1], got {self.p}")

    def _scipy(self):
        return stats.binom(int(self.n), self.p)

    def mean(self):
        return self.n * self.p

    def variance(self):
        return self.n * self.p * (1 - self.p)

    def third_cumulant(self):
        return self.n * self.p * (1 - self.p) * (1 - 2 * self.p)

    def pgf(self, s):
        return (1.0 - self.p + self.p * np.asarray(s)) ** int(self.n)

    def panjer_coeffs(self):
        if self.p == 1:
            # degenerate at n: a = -p/(1-p) is infinite
            raise ParameterDomainError("Binomial with p=1 has no finite Panjer coefficients")
        q = 1.0 - self.p
        a = -self.p / q
        b = (self.n + 1) * self.p / q
        p0 = q**self.n
        return a, b, p0, self.n * self.p * q ** (self.n - 1)


def freq_pmf(model, k):
    """Pr[N = k]; ``k`` must be a non-negative integer."""
    if int(k) != k or k < 0:
        raise SupportError(f"count must be a non-negative integer, got {k}")
    return float(model.pmf(int(k)))


def freq_panjer_coeffs(model):
    """Return ``(a, b, p0, p1)`` with p_n = (a + b/n) p_{n-1} for n >= 2."""
    return model.panjer_coeffs()

