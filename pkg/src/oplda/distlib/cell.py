"""Risk cells and the Basel II business-line / event-type grid."""

from dataclasses import dataclass
from typing import Optional

from ..errors import ParameterDomainError
from .frequency import FrequencyModel
from .severity import InsurancePolicy, SeverityModel

# (name, beta) for the eight standardised-approach business lines
BUSINESS_LINES = (
    ("Corporate finance", 0.18),
    ("Trading and sales", 0.18),
    ("Retail banking", 0.12),
    ("Commercial banking", 0.15),
    ("Payment and settlement", 0.18),
    ("Agency services", 0.15),
    ("Asset management", 0.12),
    ("Retail brokerage", 0.12),
)

EVENT_TYPES = (
    "Internal fraud",
    "External fraud",
    "Employment practices and workplace safety",
    "Clients, products and business practices",
    "Damage to physical assets",
    "Business disruption and system failures",
    "Execution, delivery and process management",
)

TSA_BETAS = tuple(beta for _, beta in BUSINESS_LINES)


@dataclass(frozen=True)
class RiskCell:
    """Unit of aggregation: one frequency and one severity law.

    ``business_line`` and ``event_type`` are optional 1-based indices into
    :data:`BUSINESS_LINES` and :data:`EVENT_TYPES`.
    """

    label: str
    frequency: FrequencyModel
    severity: SeverityModel
    insurance: Optional[InsurancePolicy] = None
    business_line: Optional[int] = None
    event_type: Optional[int] = None

    def __post_init__(self):
        if self.business_line is not None and not 1 <= self.business_line <= len(BUSINESS_LINES):
            raise ParameterDomainError(f"business line must be in 1..8, got {self.business_line}")
        if self.event_type is not None and not 1 <= self.event_type <= len(EVENT_TYPES):
            raise ParameterDomainError(f"event type must be in 1..7, got {self.event_type}")

    @property
    def basel_mapping(self):
        if self.business_line is None or self.event_type is None:
            return None
        return BUSINESS_LINES[self.business_line - 1][0], EVENT_TYPES[self.event_type - 1]
