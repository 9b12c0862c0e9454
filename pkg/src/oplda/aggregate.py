"""Compound annual-loss distributions.

Z = X(1) + ... + X(N) is evaluated by Monte Carlo, by the Panjer
recursion and by FFT on a lattice, and approximated by the single-loss
formula and by moment matching.
"""

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy import special, stats

from . import rng as rngmod
from .distlib.severity import NetOfInsurance
from .errors import (
    CIUndefinedError,
    DegenerateModelError,
    GridError,
    InsufficientGridError,
    MomentError,
    ParameterDomainError,
    RecursionSingularityError,
    SupportError,
)
from .io import read_float_columns, write_columns, write_rows

FFT_CLIP = 1e-14


@dataclass(frozen=True, eq=False)
class DiscreteDensity:
    """Masses on the lattice 0, step, 2*step, ... with explicit residual tail."""

    step: float
    masses: np.ndarray
    tail_mass: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if not self.step > 0:
            raise GridError(f"lattice step must be > 0, got {self.step}")
        if m.ndim != 1 or m.size < 2:
            raise GridError("a lattice needs at least two points")
        if np.any(m < 0):
            raise GridError("negative lattice mass")
        object.__setattr__(self, "masses", m)
        if self.tail_mass is None:
            object.__setattr__(self, "tail_mass", max(0.0, 1.0 - float(m.sum())))

    @property
    def size(self):
        return self.masses.size

    @property
    def grid(self):
        return np.arange(self.size) * self.step

    def cdf(self):
        return np.cumsum(self.masses)

    def mean(self):
        return float(np.dot(self.grid, self.masses))

    def quantile(self, q):
        return discrete_quantile(self, q)


@dataclass(frozen=True)
class QuantileEstimate:
    """Order-statistic quantile estimate with a conservative interval.

    ``lower_index`` and ``upper_index`` are the 1-based order statistics
    r and s of the interval.
    """

    q: float
    point: float
    lower: float
    upper: float
    level: float
    size: int
    lower_index: int = 0
    upper_index: int = 0
    point_index: int = 0

    def contains(self, value):
        return self.lower <= value <= self.upper


@dataclass(frozen=True, eq=False)
class CompoundResult:
    """Quantiles of Z from one method, with the lattice when available."""

    method: str
    quantiles: dict
    density: Optional[DiscreteDensity] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        levels = sorted(self.quantiles)
        vals = [_point(self.quantiles[q]) for q in levels]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise DegenerateModelError(f"{self.method} quantiles not monotone in level")

    def rows(self):
        """Report rows ``(method, q, estimate, lo, hi)``."""
        out = []
        for q in sorted(self.quantiles):
            v = self.quantiles[q]
            if isinstance(v, QuantileEstimate):
                out.append((self.method, q, v.point, v.lower, v.upper))
            else:
                out.append((self.method, q, float(v), float(v), float(v)))
        return out


def _point(v):
    return v.point if isinstance(v, QuantileEstimate) else float(v)


def _cell_parts(cell):
    return cell.frequency, cell.severity, getattr(cell, "insurance", None)


# -- Monte Carlo ------------------------------------------------------------


def sum_by_year(counts, losses):
    """Annual totals given per-year counts and the flat array of losses."""
    counts = np.asarray(counts)
    owner = np.repeat(np.arange(counts.size), counts)
    return np.bincount(owner, weights=losses, minlength=counts.size)


def _mc_block(cell):
    freq, sev, policy = _cell_parts(cell)

    def draw(rng, n):
        counts = freq.sample(rng, n)
        losses = sev.sample(rng, int(counts.sum()))
        if policy is not None:
            losses = losses - policy.recovery(losses)
        return sum_by_year(counts, losses)

    return draw


def mc_compound(cell, K, seed, threads=1, block=rngmod.DEFAULT_BLOCK, key=()):
    """K independent annual losses of ``cell``.

    Insurance, when the cell carries a policy, is applied per event before
    summation. Block ``b`` uses the stream keyed ``(*key, MC_COMPOUND, b)``
    so the result does not depend on ``threads``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    seed = rngmod.seed_sequence(seed, *key) if key else seed
    return rngmod.run_blocks(_mc_block(cell), K, seed, rngmod.MC_COMPOUND, threads, block)


def mc_quantile_ci(samples, q, gamma=0.95):
    """Point estimate and order-statistic interval for the q-quantile.

    The point is the order statistic floor(Kq + 1). The bounds are the
    order statistics r = floor(l) and s = ceil(u) where l, u = Kq -/+
    z sqrt(Kq(1-q)) and z is the (1+gamma)/2 standard normal quantile.
    When gamma is so small that the interval excludes the point the bounds
    are widened to include it.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    K = x.size
    if not 0 < q < 1:
        raise SupportError("quantile level must lie in (0, 1)")
    if not 0 <= gamma < 1:
        raise SupportError("confidence level must lie in [0, 1)")
    kq = K * q
    if kq * (1 - q) < 50:
        warnings.warn(f"Kq(1-q) = {kq * (1 - q):.1f} < 50; interval may be inaccurate", stacklevel=2)
    half = special.ndtri(0.5 + 0.5 * gamma) * np.sqrt(kq * (1 - q))
    r = int(np.floor(kq - half))
    s = int(np.ceil(kq + half))
    if r < 1 or s > K:
        raise CIUndefinedError(f"order statistics ({r}, {s}) fall outside a sample of {K}")
    i = min(int(np.floor(kq + 1)), K)
    point = x[i - 1]
    return QuantileEstimate(
        q=q,
        point=float(point),
        lower=float(min(x[r - 1], point)),
        upper=float(max(x[s - 1], point)),
        level=gamma,
        size=K,
        lower_index=r,
        upper_index=s,
        point_index=i,
    )


# -- lattice methods --------------------------------------------------------


def discretize_severity(model, step, M):
    """Central-difference rounding of a severity onto the lattice n*step.

    f_0 = F(step/2) and f_n = F((n+1/2) step) - F((n-1/2) step); the mass
    above the last edge is kept as ``tail_mass``. Differences in the upper
    half use the survival function so small tail masses keep full
    precision.
    """
    if not step > 0:
        raise GridError(f"lattice step must be > 0, got {step}")
    M = int(M)
    if M < 2:
        raise GridError("M must be >= 2")
    edges = (np.arange(M) + 0.5) * step
    c = np.asarray(model.cdf(edges), dtype=float)
    s = np.asarray(model.sf(edges), dtype=float)
    f = np.empty(M)
    f[0] = c[0]
    use_sf = c[:-1] > 0.5
    f[1:] = np.where(use_sf, s[:-1] - s[1:], c[1:] - c[:-1])
    f = np.maximum(f, 0.0)
    return DiscreteDensity(step, f, tail_mass=float(s[-1]))


@numba.njit(cache=True, fastmath=True)
def _panjer_kernel(f, a, b, c, h0, denom):
    M = f.shape[0]
    h = np.zeros(M)
    h[0] = h0
    g = np.arange(M) * f
    for n in range(1, M):
        s1 = 0.0
        s2 = 0.0
        if a != 0.0:
            for j in range(1, n + 1):
                s1 += f[j] * h[n - j]
        for j in range(1, n + 1):
            s2 += g[j] * h[n - j]
        h[n] = (c * f[n] + a * s1 + b * s2 / n) / denom
    return h


def panjer_recursion(freq, sev):
    """Compound masses by the extended Panjer recursion.

    h_0 is the count pgf at f_0; for n >= 1
    h_n = [(p1 - (a+b) p0) f_n + sum_j (a + b j/n) f_j h_{n-j}] / (1 - a f_0).
    """
    t0 = time.perf_counter()
    a, b, p0, p1 = freq.panjer_coeffs()
    f = sev.masses
    denom = 1.0 - a * f[0]
    if abs(denom) < 1e-14:
        raise RecursionSingularityError("1 - a*f0 vanishes")
    h0 = float(freq.pgf(f[0]))
    c = p1 - (a + b) * p0
    h = _panjer_kernel(f, float(a), float(b), float(c), h0, float(denom))
    neg = h < 0
    diag = {
        "method": "Panjer",
        "negative_clipped": int(neg.sum()),
        "severity_tail_mass": sev.tail_mass,
        "runtime": 0.0,
    }
    h = np.where(neg, 0.0, h)
    diag["runtime"] = time.perf_counter() - t0
    return DiscreteDensity(sev.step, h, diagnostics=diag)


def _is_pow2(m):
    return m >= 2 and (m & (m - 1)) == 0


def fft_compound(freq, sev, theta=None):
    """Compound masses by FFT of the exponentially tilted severity.

    The default tilt 20/M damps wrap-around so that the mass beyond the
    lattice no longer aliases onto low points. Negative round-off masses
    are set to zero and counted in ``diagnostics``.
    """
    t0 = time.perf_counter()
    M = sev.size
    if not _is_pow2(M):
        raise GridError(f"FFT lattice size must be a power of two, got {M}")
    if theta is None:
        theta = 20.0 / M
    if theta < 0:
        raise GridError("tilt must be >= 0")
    j = np.arange(M)
    phi = np.fft.fft(sev.masses * np.exp(-theta * j))
    ht = np.fft.ifft(freq.pgf(phi)).real
    neg = ht < 0
    worst = float(-ht[neg].min()) if neg.any() else 0.0
    if worst > FFT_CLIP:
        warnings.warn(f"FFT produced negative mass {worst:.3g} above round-off level", stacklevel=2)
    h = np.where(neg, 0.0, ht) * np.exp(theta * j)
    diag = {
        "method": "FFT",
        "theta": theta,
        "negative_clipped": int(neg.sum()),
        "max_negative": worst,
        "severity_tail_mass": sev.tail_mass,
        # mass sitting in the top quarter of the lattice is a wrap-around warning sign
        "upper_quarter_mass": float(h[3 * M // 4 :].sum()),
    }
    diag["runtime"] = time.perf_counter() - t0
    return DiscreteDensity(sev.step, h, diagnostics=diag)


def discrete_quantile(dist, q):
    """Smallest n*step whose cumulative mass reaches q."""
    if not 0 < q < 1:
        raise SupportError("quantile level must lie in (0, 1)")
    if dist.tail_mass >= 1 - q:
        raise InsufficientGridError(
            f"tail mass {dist.tail_mass:.3g} >= 1 - q; enlarge the lattice"
        )
    cum = np.cumsum(dist.masses)
    # relative slack absorbs summation round-off at exact lattice hits
    idx = int(np.searchsorted(cum, q * (1 - 1e-12), side="left"))
    if idx >= dist.size:
        raise InsufficientGridError("cumulative mass never reaches q; enlarge the lattice")
    return idx * dist.step


# -- closed-form approximations ---------------------------------------------


def single_loss_var(freq, sev, q):
    """F^{-1}(1 - (1-q)/E[N]) for sub-exponential severities."""
    if not getattr(sev, "subexponential", False):
        raise ParameterDomainError(f"{type(sev).__name__} is not in the sub-exponential whitelist")
    en = freq.mean()
    if en <= 0:
        raise DegenerateModelError("E[N] = 0; the annual loss is identically zero")
    p = (1 - q) / en
    if not 0 < p < 1:
        raise SupportError("level 1 - (1-q)/E[N] falls outside (0, 1)")
    return float(sev.isf(p))


def compound_cumulants(freq, sev, order=3):
    """First ``order`` cumulants of Z from count and severity moments."""
    ms = [sev.moment(k) for k in range(1, order + 1)]
    if not all(np.isfinite(ms)):
        raise MomentError(f"severity moment of order <= {order} is infinite")
    m1, m2 = ms[0], ms[1]
    en, vn = freq.mean(), freq.variance()
    var_x = m2 - m1 * m1
    out = [en * m1, en * var_x + vn * m1 * m1]
    if order >= 3:
        m3 = ms[2]
        k3x = m3 - 3 * m1 * m2 + 2 * m1**3
        out.append(en * k3x + 3 * vn * m1 * var_x + freq.third_cumulant() * m1**3)
    return out


def moment_match_quantile(freq, sev, kind, q):
    """Quantile of a Normal (two moments) or translated Gamma (three)."""
    kind = kind.lower().replace("-", "").replace("_", "")
    if kind == "normal":
        mean, var = compound_cumulants(freq, sev, 2)
        return float(mean + np.sqrt(var) * special.ndtri(q))
    if kind == "translatedgamma":
        mean, var, k3 = compound_cumulants(freq, sev, 3)
        skew = k3 / var**1.5
        if not skew > 0:
            raise DegenerateModelError("translated Gamma needs positive skewness")
        shape = 4.0 / skew**2
        scale = np.sqrt(var) * skew / 2.0
        return float(mean - shape * scale + stats.gamma.ppf(q, shape, scale=scale))
    raise ValueError(f"unknown moment-matching kind {kind!r}")


# -- orchestration ----------------------------------------------------------


def lattice_severity(cell):
    """Severity seen by the lattice methods: net of per-event insurance."""
    _, sev, policy = _cell_parts(cell)
    return sev if policy is None else NetOfInsurance(sev, policy)


def default_grid_step(cell, M, seed, K=10**6, threads=1):
    """Step so the lattice spans four times the MC 0.9999 quantile."""
    z = mc_compound(cell, K, seed, threads=threads, key=(rngmod.GRID,))
    q = mc_quantile_ci(z, 0.9999, 0.95).point
    if not q > 0:
        raise GridError("MC 0.9999 quantile is zero; supply the step explicitly")
    return q / (M / 4)


_METHODS = {
    "mc": "MC",
    "panjer": "Panjer",
    "fft": "FFT",
    "singleloss": "SingleLoss",
    "normal": "Normal",
    "translatedgamma": "TranslatedGamma",
}


def compound_quantiles(cell, levels, method="FFT", M=2**16, step=None, theta=None,
                       K=10**5, seed=None, gamma=0.95, threads=1):
    """Quantiles of the annual loss of ``cell`` by one method."""
    freq, sev, _ = _cell_parts(cell)
    levels = sorted(float(q) for q in np.atleast_1d(levels))
    t0 = time.perf_counter()
    method = _METHODS.get(method.lower().replace("-", "").replace("_", ""), method)
    if method == "MC":
        z = mc_compound(cell, K, seed, threads=threads)
        quant = {q: mc_quantile_ci(z, q, gamma) for q in levels}
        res = CompoundResult("MC", quant, diagnostics={"K": K})
    elif method in ("Panjer", "FFT"):
        if step is None:
            step = default_grid_step(cell, M, seed, threads=threads)
        disc = discretize_severity(lattice_severity(cell), step, M)
        dist = panjer_recursion(freq, disc) if method == "Panjer" else fft_compound(freq, disc, theta)
        quant = {q: discrete_quantile(dist, q) for q in levels}
        res = CompoundResult(method, quant, density=dist, diagnostics=dict(dist.diagnostics, step=step))
    elif method == "SingleLoss":
        res = CompoundResult(method, {q: single_loss_var(freq, lattice_severity(cell), q) for q in levels})
    elif method in ("Normal", "TranslatedGamma"):
        sev_net = lattice_severity(cell)
        res = CompoundResult(method, {q: moment_match_quantile(freq, sev_net, method, q) for q in levels})
    else:
        raise ValueError(f"unknown method {method!r}")
    res.diagnostics["runtime"] = time.perf_counter() - t0
    return res


# -- CSV --------------------------------------------------------------------


def write_density_csv(path, dist):
    return write_columns(path, ["grid_point_or_sample", "mass_or_value"], dist.grid, dist.masses)


def write_samples_csv(path, samples):
    samples = np.asarray(samples, dtype=float)
    return write_columns(path, ["grid_point_or_sample", "mass_or_value"], np.arange(samples.size), samples)


def read_density_csv(path):
    _, (grid, masses) = read_float_columns(path)
    step = float(grid[1] - grid[0])
    return DiscreteDensity(step, masses)


def write_quantile_report(path, results):
    rows = [row for res in results for row in res.rows()]
    return write_rows(path, ["method", "q", "estimate", "lo", "hi"], rows)
