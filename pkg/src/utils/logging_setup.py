"""
Session logging for command-line runs.

Console output goes through a stream handler at the configured level; a DEBUG
file handler keeps the full session under ``logs/``.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
CONSOLE_DATEFMT = '%H:%M:%S'


def create_default_logger(name: str) -> logging.Logger:
    """Create a stream logger if the named logger has no handlers yet."""
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(LOG_FORMAT, datefmt=CONSOLE_DATEFMT)
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
    return logger


def setup_logging(level: str = 'INFO',
                  log_dir: Optional[Union[str, Path]] = 'logs',
                  prefix: str = 'dynauction') -> logging.Logger:
    """
    Configure the package root logger for a CLI session.

    Args:
        level: Console level name (DEBUG, INFO, WARNING, ERROR)
        log_dir: Directory for the session log file. None disables file logging.
        prefix: File name prefix for the session log

    Returns:
        The configured ``src`` package logger
    """
    logger = logging.getLogger('src')
    logger.setLevel(logging.DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=CONSOLE_DATEFMT))
    logger.addHandler(stream_handler)

    if log_dir is not None:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        log_file = log_path / f'{prefix}_{datetime.now().strftime("%Y%m%d_%H%M%S")}.log'
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)
        logger.debug(f"Logging to: {log_file}")

    logger.propagate = False
    return logger
