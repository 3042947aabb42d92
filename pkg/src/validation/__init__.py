"""Numeric checks of the order-statistic bounds for MHR distributions."""
