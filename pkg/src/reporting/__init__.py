"""Reporting module for generating trial balance reports."""
