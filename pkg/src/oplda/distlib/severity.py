"""Severity (single-loss) models.

All models expose vectorised ``cdf``, ``sf``, ``ppf``, ``isf`` and, where a
closed form exists, ``pdf``. Sampling is by inversion so that each loss
consumes exactly one uniform draw.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import integrate, special

from ..errors import DegenerateBodyError, EmptyTailError, ParameterDomainError, SupportError

_GH_YMAX = 38.0  # ndtr(-38) is ~3e-316, the last normal double
_Y_MOMENT = 37.0  # keeps tail probabilities in the normal double range


def _open_uniform(rng, n):
    return rng.random(n) + 2.0**-54


class SeverityModel:
    """Base class. ``lower`` is the left end of the support."""

    lower = 0.0
    has_density = True
    subexponential = False

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def ppf(self, q):
        raise NotImplementedError

    def isf(self, p):
        """Inverse survival function, ppf(1 - p) without cancellation."""
        return self.ppf(1.0 - np.asarray(p, dtype=float))

    def pdf(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no density")

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def sample(self, rng, n):
        return self.ppf(_open_uniform(rng, n))

    def moment(self, k):
        """E[X^k]; ``inf`` when the moment does not exist."""
        return _quantile_moment(self, k)

    def mean(self):
        return self.moment(1)

    def variance(self):
        m1 = self.moment(1)
        return self.moment(2) - m1 * m1


def _quantile_moment(model, k):
    # E[X^k] = int Q(Phi(y))^k phi(y) dy; y-space keeps both tails bounded
    def integrand(y):
        x = model.ppf(special.ndtr(y)) if y <= 0 else model.isf(special.ndtr(-y))
        return float(x) ** k * np.exp(-0.5 * y * y) / np.sqrt(2 * np.pi)

    val, _ = integrate.quad(integrand, -_Y_MOMENT, _Y_MOMENT, limit=400, epsrel=1e-11, points=[0.0])
    return val


@dataclass(frozen=True)
class Lognormal(SeverityModel):
    mu: float
    sigma: float
    subexponential = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterDomainError(f"Lognormal sigma must be > 0, got {self.sigma}")

    def _z(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.log(np.where(x > 0, x, np.nan)) - self.mu) / self.sigma, x > 0

    def cdf(self, x):
        z, pos = self._z(x)
        return np.where(pos, special.ndtr(np.where(pos, z, 0.0)), 0.0)

    def sf(self, x):
        z, pos = self._z(x)
        return np.where(pos, special.ndtr(-np.where(pos, z, 0.0)), 1.0)

    def pdf(self, x):
        z, pos = self._z(x)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.exp(-0.5 * z * z) / (x * self.sigma * np.sqrt(2 * np.pi))
        return np.where(pos, d, 0.0)

    def logpdf(self, x):
        z, pos = self._z(x)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = -0.5 * z * z - np.log(x * self.sigma) - 0.5 * np.log(2 * np.pi)
        return np.where(pos, lp, -np.inf)

    def ppf(self, q):
        return np.exp(self.mu + self.sigma * special.ndtri(q))

    def isf(self, p):
        return np.exp(self.mu - self.sigma * special.ndtri(p))

    def moment(self, k):
        return float(np.exp(k * self.mu + 0.5 * k * k * self.sigma**2))


@dataclass(frozen=True)
class GPD(SeverityModel):
    """Generalised Pareto law of an exceedance ``y >= 0``; shape ``xi >= 0``."""

    xi: float
    beta: float

    def __post_init__(self):
        if not self.xi >= 0:
            raise ParameterDomainError(f"GPD shape xi must be >= 0, got {self.xi}")
        if not self.beta > 0:
            raise ParameterDomainError(f"GPD scale beta must be > 0, got {self.beta}")

    @property
    def subexponential(self):
        return self.xi > 0

    def _log_sf(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        if self.xi == 0:
            return -y / self.beta
        return -np.log1p(self.xi * y / self.beta) / self.xi

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, -np.expm1(self._log_sf(y)), 0.0)

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, np.exp(self._log_sf(y)), 1.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.xi == 0:
            d = np.exp(-np.maximum(y, 0) / self.beta) / self.beta
        else:
            d = (1 + self.xi * np.maximum(y, 0) / self.beta) ** (-1 / self.xi - 1) / self.beta
        return np.where(y >= 0, d, 0.0)

    def isf(self, p):
        logp = np.log(np.asarray(p, dtype=float))
        if self.xi == 0:
            return -self.beta * logp
        return self.beta * np.expm1(-self.xi * logp) / self.xi

    def ppf(self, q):
        log_p = np.log1p(-np.asarray(q, dtype=float))
        if self.xi == 0:
            return -self.beta * log_p
        return self.beta * np.expm1(-self.xi * log_p) / self.xi

    def moment(self, k):
        if k * self.xi >= 1:
            return np.inf
        denom = np.prod([1 - i * self.xi for i in range(1, k + 1)])
        return float(self.beta**k * special.factorial(k) / denom)


@dataclass(frozen=True)
class GandH(SeverityModel):
    """X = a + b (exp(gY) - 1)/g * exp(hY^2/2) with Y standard normal.

    ``b > 0`` and ``h >= 0`` keep the transform strictly increasing. The
    support is not bounded below when ``h > 0``; for typical loss
    parameters the mass below zero is negligible.
    """

    a: float
    b: float
    g: float
    h: float

    def __post_init__(self):
        if not self.b > 0:
            raise ParameterDomainError(f"g-and-h b must be > 0, got {self.b}")
        if not self.h >= 0:
            raise ParameterDomainError(f"g-and-h h must be >= 0, got {self.h}")

    lower = -np.inf

    def transform(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            core = y if self.g == 0 else np.expm1(self.g * y) / self.g
            return self.a + self.b * core * np.exp(0.5 * self.h * y * y)

    def _dtransform(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(0.5 * self.h * y * y)
            if self.g == 0:
                return self.b * e * (1 + self.h * y * y)
            return self.b * e * (np.exp(self.g * y) + self.h * y * np.expm1(self.g * y) / self.g)

    def inverse_transform(self, x):
        """Solve transform(y) = x by vectorised bisection on [-38, 38]."""
        x = np.asarray(x, dtype=float)
        lo = np.full(x.shape, -_GH_YMAX)
        hi = np.full(x.shape, _GH_YMAX)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = self.transform(mid) > x
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        return 0.5 * (lo + hi)

    def cdf(self, x):
        return special.ndtr(self.inverse_transform(x))

    def sf(self, x):
        return special.ndtr(-self.inverse_transform(x))

    def pdf(self, x):
        y = self.inverse_transform(x)
        return np.exp(-0.5 * y * y) / np.sqrt(2 * np.pi) / self._dtransform(y)

    def ppf(self, q):
        return self.transform(special.ndtri(q))

    def isf(self, p):
        return self.transform(-special.ndtri(p))

    def moment(self, k):
        if self.h > 0 and k * self.h >= 1:
            return np.inf

        def integrand(y):
            return float(self.transform(y)) ** k * np.exp(-0.5 * y * y) / np.sqrt(2 * np.pi)

        val, _ = integrate.quad(integrand, -_Y_MOMENT, _Y_MOMENT, limit=400, epsrel=1e-11, points=[0.0])
        return val


@dataclass(frozen=True)
class GB2(SeverityModel):
    """Generalised beta of the second kind, restricted to ``a > 0``.

    Negative ``a`` is the same family with ``p`` and ``q`` swapped.
    """

    a: float
    b: float
    p: float
    q: float
    subexponential = True

    def __post_init__(self):
        for name in ("a", "b", "p", "q"):
            if not getattr(self, name) > 0:
                raise ParameterDomainError(f"GB2 {name} must be > 0, got {getattr(self, name)}")

    def _w(self, x):
        # w = z/(1+z), 1-w = 1/(1+z) with z = (x/b)^a, both without cancellation
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            log_z = self.a * (np.log(x) - np.log(self.b))
        return special.expit(log_z), special.expit(-log_z)

    def cdf(self, x):
        w, w1 = self._w(x)
        return np.where(w < 0.5, special.betainc(self.p, self.q, w), special.betaincc(self.q, self.p, w1))

    def sf(self, x):
        w, w1 = self._w(x)
        return np.where(w < 0.5, special.betaincc(self.p, self.q, w), special.betainc(self.q, self.p, w1))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            log_z = self.a * (lx - np.log(self.b))
            lp = (
                np.log(self.a)
                + (self.a * self.p - 1) * lx
                - self.a * self.p * np.log(self.b)
                - special.betaln(self.p, self.q)
                - (self.p + self.q) * np.logaddexp(0.0, log_z)
            )
        return np.where(x > 0, lp, -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def _from_w(self, w, w1):
        with np.errstate(divide="ignore"):
            return self.b * np.exp((np.log(w) - np.log(w1)) / self.a)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        lower_half = u < 0.5
        w = special.betaincinv(self.p, self.q, np.where(lower_half, u, 0.25))
        w1 = special.betaincinv(self.q, self.p, np.where(lower_half, 0.25, 1.0 - u))
        return np.where(lower_half, self._from_w(w, 1.0 - w), self._from_w(1.0 - w1, w1))

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        upper_tail = p < 0.5
        w1 = special.betaincinv(self.q, self.p, np.where(upper_tail, p, 0.25))
        return np.where(upper_tail, self._from_w(1.0 - w1, w1), self.ppf(1.0 - p))

    def moment(self, k):
        t = k / self.a
        if not -self.p < t < self.q:
            return np.inf
        return float(self.b**k * np.exp(special.betaln(self.p + t, self.q - t) - special.betaln(self.p, self.q)))


@dataclass(frozen=True)
class GCD(SeverityModel):
    """Generalised Champernowne law; median ``M``, Pareto tail index ``alpha``."""

    alpha: float
    M: float
    c: float = 0.0
    subexponential = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterDomainError(f"GCD alpha must be > 0, got {self.alpha}")
        if not self.M > 0:
            raise ParameterDomainError(f"GCD M must be > 0, got {self.M}")
        if not self.c >= 0:
            raise ParameterDomainError(f"GCD c must be >= 0, got {self.c}")

    @property
    def _k(self):
        return (self.M + self.c) ** self.alpha - self.c**self.alpha

    def _a(self, x):
        return (np.maximum(np.asarray(x, dtype=float), 0.0) + self.c) ** self.alpha

    def cdf(self, x):
        A = self._a(x)
        ca = self.c**self.alpha
        return (A - ca) / (A + self._k - ca)

    def sf(self, x):
        A = self._a(x)
        return self._k / (A + self._k - self.c**self.alpha)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        A = self._a(x)
        xc = np.maximum(x, 0.0) + self.c
        with np.errstate(divide="ignore", invalid="ignore"):
            d = self.alpha * A / xc * self._k / (A + self._k - self.c**self.alpha) ** 2
        return np.where(x >= 0, d, 0.0)

    def _from_odds(self, num, den):
        # x = A^(1/alpha) - c with A = c^alpha + K num/den, evaluated in logs
        ca = self.c**self.alpha
        with np.errstate(divide="ignore"):
            log_a = np.log(num * self._k + den * ca) - np.log(den)
        return np.exp(log_a / self.alpha) - self.c

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return self._from_odds(u, 1.0 - u)

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        return self._from_odds(1.0 - p, p)

    def moment(self, k):
        if k >= self.alpha:
            return np.inf
        return _quantile_moment(self, k)


@dataclass(frozen=True, eq=False)
class Empirical(SeverityModel):
    """Right-continuous step cdf F_n(x) = #{X_k <= x}/K of a sample."""

    data: np.ndarray
    has_density = False

    def __post_init__(self):
        s = np.sort(np.asarray(self.data, dtype=float).ravel())
        if s.size == 0:
            raise ParameterDomainError("empirical sample is empty")
        object.__setattr__(self, "data", s)
        object.__setattr__(self, "_levels", np.arange(1, s.size + 1) / s.size)

    def cdf(self, x):
        return np.searchsorted(self.data, np.asarray(x, dtype=float), side="right") / self.data.size

    def ppf(self, q):
        idx = np.searchsorted(self._levels, np.asarray(q, dtype=float), side="left")
        return self.data[np.clip(idx, 0, self.data.size - 1)]

    def moment(self, k):
        return float(np.mean(self.data**k))


@dataclass(frozen=True, eq=False)
class Spliced(SeverityModel):
    """Body below ``threshold`` and a GPD for the exceedance above it.

    F(x) = F_body(x) for x < u and w + (1 - w) G(x - u) for x >= u, with
    w = F_body(u).
    """

    body: SeverityModel
    tail: GPD
    threshold: float
    weight: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.tail, GPD):
            raise ParameterDomainError("splice tail must be a GPD")
        w = float(self.body.cdf(self.threshold))
        if isinstance(self.body, Empirical) and self.threshold > self.body.data[-1]:
            raise DegenerateBodyError(
                f"threshold {self.threshold} above sample maximum {self.body.data[-1]}"
            )
        if not 0 < w < 1:
            raise DegenerateBodyError(f"body weight F(u) = {w} leaves no body or no tail")
        object.__setattr__(self, "weight", w)

    @property
    def has_density(self):
        return self.body.has_density

    @property
    def subexponential(self):
        return self.tail.xi > 0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        u, w = self.threshold, self.weight
        return np.where(x < u, self.body.cdf(np.minimum(x, u)), w + (1 - w) * self.tail.cdf(x - u))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        u, w = self.threshold, self.weight
        return np.where(x < u, 1.0 - self.body.cdf(np.minimum(x, u)), (1 - w) * self.tail.sf(x - u))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        u, w = self.threshold, self.weight
        return np.where(x < u, self.body.pdf(np.minimum(x, u)), (1 - w) * self.tail.pdf(x - u))

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        u, w = self.threshold, self.weight
        in_body = q <= w
        body_q = self.body.ppf(np.where(in_body, q, 0.5 * w))
        tail_q = u + self.tail.ppf(np.where(in_body, 0.0, (q - w) / (1 - w)))
        return np.where(in_body, body_q, tail_q)

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        w = self.weight
        in_tail = p < 1 - w
        tail_q = self.threshold + self.tail.isf(np.where(in_tail, p / (1 - w), 0.5))
        return np.where(in_tail, tail_q, self.ppf(1.0 - p))

    def moment(self, k):
        u, w = self.threshold, self.weight
        if isinstance(self.body, Empirical):
            s = self.body.data
            body_part = float(np.sum(s[s < u] ** k)) / s.size
        else:
            body_part = integrate.quad(lambda x: x**k * float(self.body.pdf(x)), self.body.lower, u, limit=200)[0]
        tail_moments = [self.tail.moment(i) for i in range(k + 1)]
        if any(np.isinf(tail_moments)):
            return np.inf
        tail_part = sum(comb(k, i) * u ** (k - i) * tail_moments[i] for i in range(k + 1))
        return body_part + (1 - w) * tail_part


@dataclass(frozen=True, eq=False)
class LeftTruncated(SeverityModel):
    """Base law conditioned on X >= L: density f(x)/(1 - F(L)) on [L, inf)."""

    base: SeverityModel
    L: float

    def __post_init__(self):
        s_l = float(self.base.sf(self.L))
        if not s_l > 0:
            raise EmptyTailError(f"F(L) = 1 at L = {self.L}; truncation leaves no mass")
        object.__setattr__(self, "_sf_l", s_l)
        object.__setattr__(self, "_cdf_l", float(self.base.cdf(self.L)))

    @property
    def lower(self):
        return self.L

    @property
    def has_density(self):
        return self.base.has_density

    @property
    def subexponential(self):
        return self.base.subexponential

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, self.L)
        if self._cdf_l < 0.5:
            val = (self.base.cdf(xc) - self._cdf_l) / self._sf_l
        else:
            val = 1.0 - self.base.sf(xc) / self._sf_l
        return np.where(x < self.L, 0.0, np.clip(val, 0.0, 1.0))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.L, 1.0, self.base.sf(np.maximum(x, self.L)) / self._sf_l)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.L, 0.0, self.base.pdf(np.maximum(x, self.L)) / self._sf_l)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.L, -np.inf, self.base.logpdf(np.maximum(x, self.L)) - np.log(self._sf_l))

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        level = self._cdf_l + q * self._sf_l
        lo = self.base.ppf(np.where(level < 0.5, level, 0.25))
        hi = self.base.isf(np.where(level < 0.5, 0.25, (1.0 - q) * self._sf_l))
        return np.maximum(np.where(level < 0.5, lo, hi), self.L)

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        return np.maximum(self.base.isf(p * self._sf_l), self.L)


@dataclass(frozen=True, eq=False)
class Shifted(SeverityModel):
    """X = shift + Y with Y from ``base``."""

    base: SeverityModel
    shift: float

    @property
    def lower(self):
        return self.shift + self.base.lower

    @property
    def has_density(self):
        return self.base.has_density

    @property
    def subexponential(self):
        return self.base.subexponential

    def cdf(self, x):
        return self.base.cdf(np.asarray(x, dtype=float) - self.shift)

    def sf(self, x):
        return self.base.sf(np.asarray(x, dtype=float) - self.shift)

    def pdf(self, x):
        return self.base.pdf(np.asarray(x, dtype=float) - self.shift)

    def logpdf(self, x):
        return self.base.logpdf(np.asarray(x, dtype=float) - self.shift)

    def ppf(self, q):
        return self.shift + self.base.ppf(q)

    def isf(self, p):
        return self.shift + self.base.isf(p)

    def moment(self, k):
        ms = [self.base.moment(i) for i in range(k + 1)]
        if any(np.isinf(ms)):
            return np.inf
        return float(sum(comb(k, i) * self.shift ** (k - i) * ms[i] for i in range(k + 1)))


@dataclass(frozen=True)
class PointMass(SeverityModel):
    """Degenerate loss of fixed size."""

    value: float
    has_density = False

    def __post_init__(self):
        if not self.value > 0:
            raise ParameterDomainError(f"point mass must be > 0, got {self.value}")

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def ppf(self, q):
        return np.full(np.shape(q), float(self.value))

    def isf(self, p):
        return np.full(np.shape(p), float(self.value))

    def moment(self, k):
        return float(self.value) ** k


@dataclass(frozen=True)
class InsurancePolicy:
    """Per-event cover: deductible ``D`` and top cover limit ``U``."""

    deductible: float
    limit: float

    def __post_init__(self):
        if not self.deductible >= 0:
            raise ParameterDomainError(f"deductible must be >= 0, got {self.deductible}")
        if not self.limit > 0:
            raise ParameterDomainError(f"cover limit must be > 0, got {self.limit}")

    def recovery(self, x):
        return np.clip(np.asarray(x, dtype=float) - self.deductible, 0.0, self.limit)


@dataclass(frozen=True, eq=False)
class NetOfInsurance(SeverityModel):
    """Loss retained after a per-event policy: X - R(X).

    The retained loss is X below D, exactly D on [D, D+U) and X - U above,
    so its cdf is F(y) for y < D and F(y + U) for y >= D.
    """

    base: SeverityModel
    policy: InsurancePolicy
    has_density = False

    @property
    def subexponential(self):
        return self.base.subexponential

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        D, U = self.policy.deductible, self.policy.limit
        return np.where(y < D, self.base.cdf(y), self.base.cdf(y + U))

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        D, U = self.policy.deductible, self.policy.limit
        return np.where(y < D, self.base.sf(y), self.base.sf(y + U))

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        D, U = self.policy.deductible, self.policy.limit
        x = self.base.ppf(q)
        f_d, f_du = self.base.cdf(D), self.base.cdf(D + U)
        return np.where(q <= f_d, np.minimum(x, D), np.where(q <= f_du, D, x - U))

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        D, U = self.policy.deductible, self.policy.limit
        if self.base.sf(D + U) > 0:
            x = self.base.isf(p)
            return np.where(p < self.base.sf(D + U), x - U, self.ppf(1.0 - p))
        return self.ppf(1.0 - p)

    def moment(self, k):
        return _quantile_moment(self, k)


def apply_insurance(x, policy):
    """Retained loss x - R per event.

    R = 0 below the deductible, x - D up to D + U and U beyond.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise SupportError("losses must be non-negative")
    net = x - policy.recovery(x)
    return float(net) if net.ndim == 0 else net


def severity_cdf(model, x):
    """F(x) with a domain check against the left end of the support."""
    x = np.asarray(x, dtype=float)
    lower = max(model.lower, 0.0) if np.isfinite(model.lower) else 0.0
    if np.any(x < lower):
        raise SupportError(f"x below support lower bound {lower}")
    out = model.cdf(x)
    return float(out) if np.ndim(out) == 0 else out


def severity_quantile(model, q):
    """Smallest x with F(x) >= q, for q in (0, 1)."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise SupportError("quantile level must lie in (0, 1)")
    out = model.ppf(q)
    return float(out) if np.ndim(out) == 0 else out


def severity_sample(model, rng, n):
    """``n`` independent inversion draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return model.sample(rng, int(n))


def truncate_left(model, L):
    """Condition ``model`` on X >= L. L at or below the support is a no-op."""
    if L <= max(model.lower, 0.0):
        if float(model.cdf(L)) == 0.0:
            return model
    return LeftTruncated(model, float(L))


def splice_gpd_tail(body, u, tail):
    """Empirical (or parametric) body below ``u`` with a GPD tail above."""
    return Spliced(body, tail, float(u))
