"""
Application settings loaded from ``config/config.yml``.

Falls back to ``config/config.example.yml`` when no local copy exists, and to
built-in defaults for any missing section or key.
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS: Dict[str, Any] = {
    'paths': {
        'reports': 'reports',
        'logs': 'logs',
        'experiments': 'config/experiments',
        'registry': 'config/experiment_registry.json',
    },
    'tolerances': {
        'lp_relative': 1e-7,
        'residual': 1e-6,
        'flow': 1e-9,
        'quadrature_abs': 1e-12,
        'quadrature_rel': 1e-10,
        'mhr': 1e-9,
        'tail': 1e-12,
    },
    'caps': {
        'lp_nonzeros': 500_000,
        'myerson_profiles': 10_000_000,
        'cc_multiplier': 10,
        'doubling_depth': 5,
    },
    'monte_carlo': {
        'trials': 1_000_000,
        'seed': 20240607,
    },
    'solver': {
        'method': 'highs',
    },
    'logging': {
        'level': 'INFO',
        'prefix': 'dynauction',
    },
}


def find_project_root(start: Optional[Path] = None) -> Path:
    """Find project root by looking for the config directory."""
    current = (start or Path.cwd()).resolve()
    while current != current.parent:
        if (current / 'config').exists():
            return current
        current = current.parent
    return Path.cwd()


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Load application settings.

    Args:
        path: Explicit YAML path. If None, tries ``config/config.yml`` then
            ``config/config.example.yml`` under the project root.

    Returns:
        Settings dictionary with every default section present

    Example:
        >>> settings = load_settings()
        >>> settings['caps']['lp_nonzeros']
        500000
    """
    if path is not None:
        candidates = [Path(path)]
    else:
        root = find_project_root()
        candidates = [root / 'config' / 'config.yml', root / 'config' / 'config.example.yml']

    for candidate in candidates:
        if candidate.exists():
            with open(candidate, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f) or {}
            if not isinstance(loaded, dict):
                raise ValueError(f"Settings file must hold a mapping: {candidate}")
            logger.debug(f"Loaded settings from {candidate}")
            return _merge(DEFAULT_SETTINGS, loaded)

    if path is not None:
        raise FileNotFoundError(f"Settings file not found: {path}")
    logger.debug("No settings file found, using built-in defaults")
    return copy.deepcopy(DEFAULT_SETTINGS)
