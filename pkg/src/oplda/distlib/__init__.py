"""Frequency and severity model zoo."""

from .cell import BUSINESS_LINES, EVENT_TYPES, TSA_BETAS, RiskCell
from .frequency import Binomial, FrequencyModel, NegBinomial, Poisson, freq_panjer_coeffs, freq_pmf
from .severity import (
    GB2,
    GCD,
    GPD,
    Empirical,
    GandH,
    InsurancePolicy,
    LeftTruncated,
    Lognormal,
    NetOfInsurance,
    PointMass,
    SeverityModel,
    Shifted,
    Spliced,
    apply_insurance,
    severity_cdf,
    severity_quantile,
    severity_sample,
    splice_gpd_tail,
    truncate_left,
)

__all__ = [
    "BUSINESS_LINES", "EVENT_TYPES", "TSA_BETAS", "RiskCell",
    "FrequencyModel", "Poisson", "NegBinomial", "Binomial", "freq_pmf", "freq_panjer_coeffs",
    "SeverityModel", "Lognormal", "GPD", "GandH", "GB2", "GCD", "Empirical", "Spliced",
    "LeftTruncated", "Shifted", "PointMass", "NetOfInsurance", "InsurancePolicy",
    "apply_insurance", "severity_cdf", "severity_quantile", "severity_sample",
    "truncate_left", "splice_gpd_tail",
]
