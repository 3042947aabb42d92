"""Dynamic-auction revenue, duality bounds and order-statistic checks."""

__version__ = "0.1.0"
