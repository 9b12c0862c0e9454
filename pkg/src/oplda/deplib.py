"""Dependence between risk cells.

Every construction returns annual losses as a ``(years, cells)`` array
and draws its randomness through :func:`oplda.rng.run_blocks`, so output
is independent of the thread count. Within a study the same streams are
reused for every copula parameter (common random numbers), which keeps
estimated curves smooth in the parameter.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from . import rng as rngmod
from .aggregate import discretize_severity, fft_compound, lattice_severity, sum_by_year
from .errors import DegenerateModelError, MatrixError, ParameterDomainError
from .io import write_rows

EIG_FLOOR = 1e-10
REPAIR_TOL = 1e-6


# -- Gaussian copula --------------------------------------------------------


def _psd_cholesky(a):
    """Lower factor L with L L^T = a for positive semi-definite ``a``.

    A zero pivot yields a zero column rather than an error, so perfectly
    correlated coordinates come out as exact copies.
    """
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - np.dot(L[j, :j], L[j, :j])
        if d <= 1e-12:
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True, eq=False)
class GaussianCopulaSpec:
    """Correlation matrix of a Gaussian copula (unit diagonal)."""

    corr: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.corr, dtype=float))
        if c.shape[0] != c.shape[1]:
            raise MatrixError("correlation matrix must be square")
        if not np.allclose(c, c.T, atol=1e-12):
            raise MatrixError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise MatrixError("correlation matrix must have unit diagonal")
        w, v = np.linalg.eigh(c)
        if w.min() < -REPAIR_TOL:
            raise MatrixError(f"correlation matrix has eigenvalue {w.min():.3g}; not repairable")
        if w.min() < 0:
            warnings.warn(f"clipping eigenvalue {w.min():.3g} to {EIG_FLOOR}", stacklevel=2)
            c = (v * np.maximum(w, EIG_FLOOR)) @ v.T
            dinv = 1.0 / np.sqrt(np.diag(c))
            c = c * np.outer(dinv, dinv)
        object.__setattr__(self, "corr", c)
        object.__setattr__(self, "factor", _psd_cholesky(c))

    @classmethod
    def pairwise(cls, rho, d=2):
        """Equicorrelated d-dimensional copula."""
        c = np.full((d, d), float(rho))
        np.fill_diagonal(c, 1.0)
        return cls(c)

    @property
    def dim(self):
        return self.corr.shape[0]

    def normals(self, rng, n):
        return rng.standard_normal((n, self.dim)) @ self.factor.T

    def uniforms(self, rng, n):
        return special.ndtr(self.normals(rng, n))


def sample_gaussian_copula(spec, n, seed, threads=1):
    """``n`` draws of U = Phi(X) with X ~ Normal(0, corr)."""
    return rngmod.run_blocks(spec.uniforms, n, seed, rngmod.COPULA, threads)


# -- helpers ----------------------------------------------------------------


def _severity_losses(cell, rng, n):
    x = cell.severity.sample(rng, n)
    if cell.insurance is not None:
        x = x - cell.insurance.recovery(x)
    return x


def _annual_from_counts(cells, counts, rng):
    out = np.empty(counts.shape)
    for j, cell in enumerate(cells):
        out[:, j] = sum_by_year(counts[:, j], _severity_losses(cell, rng, int(counts[:, j].sum())))
    return out


def _check_dim(spec_dim, cells):
    if spec_dim != len(cells):
        raise ParameterDomainError(f"copula dimension {spec_dim} differs from {len(cells)} cells")


# -- constructions ----------------------------------------------------------


def simulate_freq_copula(cells, spec, years, seed, threads=1):
    """Counts N_j = P_j^{-1}(U_j) coupled by a Gaussian copula; severities independent."""
    _check_dim(spec.dim, cells)

    def block(rng, n):
        u = spec.uniforms(rng, n)
        counts = np.column_stack([c.frequency.ppf(u[:, j]) for j, c in enumerate(cells)])
        return _annual_from_counts(cells, counts, rng)

    return rngmod.run_blocks(block, years, seed, rngmod.FREQ_COPULA, threads)


def simulate_freq_copula_counts(cells, spec, years, seed, threads=1):
    """Annual counts only, from the same streams as :func:`simulate_freq_copula`."""
    _check_dim(spec.dim, cells)

    def block(rng, n):
        u = spec.uniforms(rng, n)
        return np.column_stack([c.frequency.ppf(u[:, j]) for j, c in enumerate(cells)])

    return rngmod.run_blocks(block, years, seed, rngmod.FREQ_COPULA, threads)


def _cell_quantile_table(cell, M, step):
    dist = fft_compound(cell.frequency, discretize_severity(lattice_severity(cell), step, M))
    return np.cumsum(dist.masses), dist.step


def simulate_aggregate_copula(cells, spec, years, seed, threads=1, M=2**16, steps=None):
    """Annual losses Z_j = H_j^{-1}(U_j) with H_j from an FFT lattice.

    ``steps`` gives the lattice step per cell; by default each lattice
    spans eight times a single-loss estimate of the cell's 0.9999 quantile.
    """
    _check_dim(spec.dim, cells)
    if steps is None:
        steps = []
        for c in cells:
            sev = lattice_severity(c)
            reach = float(sev.isf(1e-4 / max(c.frequency.mean(), 1e-4)))
            steps.append(8 * reach / M)
    tables = [_cell_quantile_table(c, M, s) for c, s in zip(cells, steps)]

    def block(rng, n):
        u = spec.uniforms(rng, n)
        cols = []
        for j, (cum, step) in enumerate(tables):
            idx = np.minimum(np.searchsorted(cum, u[:, j], side="left"), cum.size - 1)
            cols.append(idx * step)
        return np.column_stack(cols)

    return rngmod.run_blocks(block, years, seed, rngmod.COPULA, threads)


def simulate_interarrival_copula(intensities, spec, years, seed, threads=1, cells=None):
    """Two Poisson processes whose k-th inter-arrival times share a copula.

    Both processes restart at every year boundary, which keeps each
    marginal count exactly Poisson. Within a year the k-th gaps of the two
    processes are paired index by index. Returns ``(counts, annual
    losses)``; losses are zero when ``cells`` is not given.
    """
    lam = np.asarray(intensities, dtype=float)
    if spec.dim != 2 or lam.size != 2:
        raise ParameterDomainError("inter-arrival coupling is defined for two processes")
    if np.any(lam <= 0):
        raise ParameterDomainError("intensities must be > 0")
    batch = int(stats.poisson(lam.max()).ppf(1 - 1e-6)) + 1

    def block(rng, n):
        counts = np.zeros((n, 2), dtype=np.int64)
        clock = np.zeros((n, 2))
        live = np.arange(n)
        while live.size:
            z = spec.normals(rng, live.size * batch).reshape(live.size, batch, 2)
            # exponential gaps by inversion, using the upper tail for accuracy
            gaps = -special.log_ndtr(-z) / lam
            t = clock[live][:, None, :] + np.cumsum(gaps, axis=1)
            counts[live] += np.sum(t <= 1.0, axis=1)
            clock[live] = t[:, -1, :]
            live = live[np.any(clock[live] <= 1.0, axis=1)]
        if cells is None:
            return counts, np.zeros((n, 2))
        return counts, _annual_from_counts(cells, counts, rng)

    return rngmod.run_blocks(block, years, seed, rngmod.INTERARRIVAL, threads)


@dataclass(frozen=True, eq=False)
class FactorLoadings:
    """Loadings of cells on K common factors.

    ``frequency`` and ``severity`` are ``(cells, K)`` arrays (a vector
    means K = 1); ``factor_corr`` is the K x K factor correlation.
    """

    frequency: np.ndarray
    severity: Optional[np.ndarray] = None
    factor_corr: Optional[np.ndarray] = None

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        f = f[:, None] if f.ndim == 1 else f
        K = f.shape[1]
        fc = np.eye(K) if self.factor_corr is None else np.atleast_2d(np.asarray(self.factor_corr, dtype=float))
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "factor_corr", fc)
        s = self.severity
        if s is not None:
            s = np.asarray(s, dtype=float)
            s = s[:, None] if s.ndim == 1 else s
            object.__setattr__(self, "severity", s)
        for name, m in (("frequency", f), ("severity", s)):
            if m is None:
                continue
            if np.any(np.abs(m) > 1):
                raise ParameterDomainError(f"{name} loadings must lie in [-1, 1]")
            resid = 1.0 - np.einsum("jk,km,jm->j", m, fc, m)
            if np.any(resid < -1e-12):
                raise ParameterDomainError(f"{name} loadings leave negative residual variance")
        GaussianCopulaSpec(fc)

    @property
    def n_factors(self):
        return self.frequency.shape[1]

    def residual_sd(self, m):
        return np.sqrt(np.maximum(1.0 - np.einsum("jk,km,jm->j", m, self.factor_corr, m), 0.0))


def simulate_common_factor(cells, loadings, years, seed, threads=1):
    """Y_j = rho_j . Omega + sqrt(1 - rho_j' C rho_j) W_j, N_j = P_j^{-1}(Phi(Y_j)).

    With severity loadings each loss of cell j in year t uses
    R = rho~_j . Omega(t) + residual noise and X = F_j^{-1}(Phi(R)).
    """
    if loadings.frequency.shape[0] != len(cells):
        raise ParameterDomainError("one loading row per cell is required")
    fac = GaussianCopulaSpec(loadings.factor_corr)
    rf = loadings.frequency
    sd_f = loadings.residual_sd(rf)
    rs = loadings.severity
    sd_s = None if rs is None else loadings.residual_sd(rs)

    def block(rng, n):
        omega = fac.normals(rng, n)
        y = omega @ rf.T + rng.standard_normal((n, len(cells))) * sd_f
        out = np.empty((n, len(cells)))
        for j, cell in enumerate(cells):
            counts = cell.frequency.ppf(special.ndtr(y[:, j]))
            total = int(counts.sum())
            if rs is None:
                x = _severity_losses(cell, rng, total)
            else:
                owner = np.repeat(np.arange(n), counts)
                r = omega[owner] @ rs[j] + sd_s[j] * rng.standard_normal(total)
                # upper tail through the survival side keeps large losses accurate
                x = np.where(r > 0, cell.severity.isf(special.ndtr(-r)), cell.severity.ppf(special.ndtr(r)))
                if cell.insurance is not None:
                    x = x - cell.insurance.recovery(x)
            out[:, j] = sum_by_year(counts, x)
        return out

    return rngmod.run_blocks(block, years, seed, rngmod.COMMON_FACTOR, threads)


def simulate_common_shock(idiosyncratic, common, participation, years, seed, threads=1):
    """Counts N_j = Binomial(N_C, p_j) + Poisson(lambda~_j), N_C ~ Poisson(lambda_C).

    Thinning the common stream keeps N_j Poisson(lambda~_j + lambda_C p_j)
    with cov(N_i, N_j) = lambda_C p_i p_j.
    """
    lam = np.asarray(idiosyncratic, dtype=float)
    p = np.broadcast_to(np.asarray(participation, dtype=float), lam.shape)
    if np.any(lam < 0) or common < 0:
        raise ParameterDomainError("intensities must be >= 0")
    if np.any((p < 0) | (p > 1)):
        raise ParameterDomainError("participation probabilities must lie in [0, 1]")

    def block(rng, n):
        nc = rng.poisson(common, n)
        return rng.binomial(nc[:, None], p, (n, lam.size)) + rng.poisson(lam, (n, lam.size))

    return rngmod.run_blocks(block, years, seed, rngmod.COMMON_SHOCK, threads)


def simulate_common_shock_losses(cells, common, participation, years, seed, threads=1):
    """Annual losses when each cell's Poisson intensity is split into shock and own parts."""
    p = np.broadcast_to(np.asarray(participation, dtype=float), (len(cells),))
    own = np.array([c.frequency.mean() for c in cells]) - common * p
    if np.any(own < -1e-12):
        raise ParameterDomainError("common-shock share exceeds a cell intensity")
    own = np.maximum(own, 0.0)

    def block(rng, n):
        nc = rng.poisson(common, n)
        counts = rng.binomial(nc[:, None], p, (n, len(cells))) + rng.poisson(own, (n, len(cells)))
        return _annual_from_counts(cells, counts, rng)

    return rngmod.run_blocks(block, years, seed, rngmod.COMMON_SHOCK, threads)


@dataclass(frozen=True, eq=False)
class ProfilePriorSpec:
    """Random yearly risk profiles (lambda_j(t), mu_j(t)) for Poisson-Lognormal cells.

    ``lam`` and ``mu`` hold frozen scipy marginals per cell (``None`` in
    ``mu`` keeps the location fixed at ``mu_fixed``); ``sigma`` is the
    fixed log-scale per cell. The copula orders coordinates as
    (lambda_1..lambda_d, mu_1..mu_d).
    """

    lam: tuple
    mu: tuple
    sigma: tuple
    copula: GaussianCopulaSpec

    def __post_init__(self):
        d = len(self.lam)
        if len(self.mu) != d or len(self.sigma) != d:
            raise ParameterDomainError("one lambda, mu and sigma marginal per cell")
        if self.copula.dim != 2 * d:
            raise ParameterDomainError(f"profile copula must have dimension {2 * d}")

    @property
    def cells(self):
        return len(self.lam)


def simulate_stochastic_profiles(spec, years, seed, threads=1):
    """Annual losses given copula-coupled yearly profiles.

    Each year draws the profiles first, then Poisson(lambda_j(t)) counts
    and Lognormal(mu_j(t), sigma_j) losses conditionally independently.
    """
    d = spec.cells

    def block(rng, n):
        z = spec.copula.normals(rng, n)
        out = np.empty((n, d))
        for j in range(d):
            lam = spec.lam[j].isf(special.ndtr(-z[:, j]))
            mu = spec.mu[j].isf(special.ndtr(-z[:, d + j]))
            counts = rng.poisson(lam)
            owner = np.repeat(np.arange(n), counts)
            x = np.exp(mu[owner] + spec.sigma[j] * rng.standard_normal(owner.size))
            out[:, j] = np.bincount(owner, weights=x, minlength=n)
        return out

    return rngmod.run_blocks(block, years, seed, rngmod.PROFILES, threads)


# -- measurement ------------------------------------------------------------


def spearman_rho(x, y):
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ParameterDomainError("need two samples of equal length >= 2")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    if rx.std() == 0 or ry.std() == 0:
        raise DegenerateModelError("rank correlation undefined for a constant sample")
    return float(np.corrcoef(rx, ry)[0, 1])


def spearman_with_se(x, y, batches=50):
    """Spearman's rho and a batch-means standard error."""
    rho = spearman_rho(x, y)
    xb = np.array_split(np.asarray(x), batches)
    yb = np.array_split(np.asarray(y), batches)
    vals = []
    for a, b in zip(xb, yb):
        try:
            vals.append(spearman_rho(a, b))
        except DegenerateModelError:
            continue
    se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else np.nan
    return rho, se


def var_subadditivity(losses, q=0.999):
    """Compare VaR of the total with the sum of per-cell VaRs on one sample.

    Returns a dict; the comparison is reported, not asserted, because VaR
    need not be sub-additive.
    """
    from .aggregate import mc_quantile_ci

    losses = np.asarray(losses, dtype=float)
    per_cell = [mc_quantile_ci(losses[:, j], q) for j in range(losses.shape[1])]
    total = mc_quantile_ci(losses.sum(axis=1), q)
    summed = sum(e.point for e in per_cell)
    return {
        "per_cell": [e.point for e in per_cell],
        "summed": summed,
        "joint": total.point,
        "joint_lo": total.lower,
        "joint_hi": total.upper,
        "subadditive": total.point <= summed,
        "diversification": 1.0 - total.point / summed if summed > 0 else np.nan,
    }


# -- wrappers with a common interface --------------------------------------


class Dependence:
    """Interface: ``simulate(cells, years, seed, threads)`` -> (years, cells)."""

    name = "independent"

    def simulate(self, cells, years, seed, threads=1):
        return simulate_freq_copula(cells, GaussianCopulaSpec(np.eye(len(cells))), years, seed, threads)


@dataclass(frozen=True, eq=False)
class FrequencyCopula(Dependence):
    spec: GaussianCopulaSpec
    name = "frequency_copula"

    def simulate(self, cells, years, seed, threads=1):
        return simulate_freq_copula(cells, self.spec, years, seed, threads)


@dataclass(frozen=True, eq=False)
class AggregateLossCopula(Dependence):
    spec: GaussianCopulaSpec
    M: int = 2**16
    name = "aggregate_copula"

    def simulate(self, cells, years, seed, threads=1):
        return simulate_aggregate_copula(cells, self.spec, years, seed, threads, self.M)


@dataclass(frozen=True, eq=False)
class InterArrivalCopula(Dependence):
    spec: GaussianCopulaSpec
    name = "interarrival_copula"

    def simulate(self, cells, years, seed, threads=1):
        lam = [c.frequency.mean() for c in cells]
        return simulate_interarrival_copula(lam, self.spec, years, seed, threads, cells=cells)[1]


@dataclass(frozen=True, eq=False)
class CommonFactor(Dependence):
    loadings: FactorLoadings
    name = "common_factor"

    def simulate(self, cells, years, seed, threads=1):
        return simulate_common_factor(cells, self.loadings, years, seed, threads)


@dataclass(frozen=True, eq=False)
class CommonShock(Dependence):
    common: float
    participation: tuple
    name = "common_shock"

    def simulate(self, cells, years, seed, threads=1):
        return simulate_common_shock_losses(cells, self.common, self.participation, years, seed, threads)


# -- studies ----------------------------------------------------------------


def coupled_profile_spec(rho, case):
    """Profile model with lambda_1 ~ Gamma(2.5, 2), lambda_2 ~ Gamma(5, 2), mu_j ~ N(1, 1), sigma = 2.

    ``case`` is ``"lambda"``, ``"mu"`` or ``"both"`` and selects which
    pair of profiles the copula couples with correlation ``rho``.
    """
    c = np.eye(4)
    if case in ("lambda", "both"):
        c[0, 1] = c[1, 0] = rho
    if case in ("mu", "both"):
        c[2, 3] = c[3, 2] = rho
    if case not in ("lambda", "mu", "both"):
        raise ValueError(f"unknown coupling case {case!r}")
    return ProfilePriorSpec(
        lam=(stats.gamma(2.5, scale=2.0), stats.gamma(5.0, scale=2.0)),
        mu=(stats.norm(1.0, 1.0), stats.norm(1.0, 1.0)),
        sigma=(2.0, 2.0),
        copula=GaussianCopulaSpec(c),
    )


def dependence_study(cells, constructions, rhos, years, seed, threads=1):
    """Spearman's rho between the first two cells' annual losses.

    ``constructions`` is a list of names among ``frequency_copula``,
    ``interarrival_copula``, ``aggregate_copula``, ``common_factor``,
    ``profiles_lambda``, ``profiles_mu`` and ``profiles_both``. Returns
    rows ``(construction, copula_param, rho_S_estimate, mc_std_error)``.
    """
    rows = []
    for name in constructions:
        for rho in rhos:
            spec = GaussianCopulaSpec.pairwise(rho, 2)
            if name == "frequency_copula":
                z = simulate_freq_copula(cells, spec, years, seed, threads)
            elif name == "interarrival_copula":
                lam = [c.frequency.mean() for c in cells]
                z = simulate_interarrival_copula(lam, spec, years, seed, threads, cells=cells)[1]
            elif name == "aggregate_copula":
                z = simulate_aggregate_copula(cells, spec, years, seed, threads)
            elif name == "common_factor":
                r = np.sqrt(rho)
                z = simulate_common_factor(cells, FactorLoadings([r, r]), years, seed, threads)
            elif name.startswith("profiles_"):
                z = simulate_stochastic_profiles(coupled_profile_spec(rho, name.split("_", 1)[1]), years, seed, threads)
            else:
                raise ValueError(f"unknown construction {name!r}")
            est, se = spearman_with_se(z[:, 0], z[:, 1])
            rows.append((name, float(rho), est, se))
    return rows


def write_study_csv(path, rows):
    return write_rows(path, ["construction", "copula_param", "rho_S_estimate", "mc_std_error"], rows)
