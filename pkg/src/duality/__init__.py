"""Lagrangian dual flows and the upper bounds they certify."""
