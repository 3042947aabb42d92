"""
Orchestration module for registered experiments.
"""

from .experiment_runner import ExperimentRunner

__all__ = ['ExperimentRunner']
