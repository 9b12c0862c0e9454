"""Loss-distribution-approach engine for operational risk capital."""

__version__ = "0.1.0"
