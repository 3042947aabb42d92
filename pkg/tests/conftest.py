"""
Shared fixtures. Puts the project root on sys.path so ``src`` imports work
without installing the package.
"""

import copy
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.auctions.instances import doubling_instance, correlation_hurts_instance  # noqa: E402
from src.distributions.continuous import exponential  # noqa: E402
from src.distributions.discrete import DiscreteDist  # noqa: E402
from src.mechanisms.process import DynamicInstance, ValueProcess  # noqa: E402
from src.utils.settings import DEFAULT_SETTINGS  # noqa: E402


@pytest.fixture
def exp1():
    return exponential(1.0)


@pytest.fixture
def uniform12():
    return DiscreteDist.uniform([1.0, 2.0], name='u12')


@pytest.fixture
def two_stage_uniform(uniform12):
    """Two buyers, two independent uniform {1, 2} stages."""
    return DynamicInstance(2, ValueProcess.independent_stages([uniform12, uniform12]), name='uniform-1-2')


@pytest.fixture
def doubling_depth3():
    return doubling_instance(3)


@pytest.fixture
def correlation_hurts():
    return correlation_hurts_instance(2)


@pytest.fixture
def settings(tmp_path):
    """Default settings with reports and logs under ``tmp_path``."""
    result = copy.deepcopy(DEFAULT_SETTINGS)
    result['paths']['reports'] = str(tmp_path / 'reports')
    result['paths']['logs'] = str(tmp_path / 'logs')
    return result
