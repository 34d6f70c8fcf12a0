"""
Logging for the Kähler surface lab.

One named logger with a console handler (level chosen on the command
line) and a rotating file handler that always records DEBUG, so
per-sample diagnostics from worker threads end up in the log file
without flooding the console.
"""

import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Optional

LOGGER_NAME = 'kahler_lab'
LOG_FORMAT = '%(asctime)s - [%(levelname)s] - [%(threadName)s] - %(message)s'
BANNER_WIDTH = 60


def setup_logging(log_file: Optional[str] = 'logs/kahler_lab.log', log_level: int = logging.INFO) -> logging.Logger:
    """
    Set up logging with console output and, unless ``log_file`` is None,
    a rotating log file.

    Args:
        log_file: Path to log file, or None for console only
        log_level: Minimum level shown on the console (DEBUG, INFO, WARNING, ERROR)

    Returns:
        Logger instance

    Example:
        >>> logger = setup_logging('logs/e1.log', logging.WARNING)
        >>> logger.debug("file only")
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG)  # handlers filter

    # Repeated calls keep the first configuration
    if logger.handlers:
        return logger

    log_format = logging.Formatter(LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(log_format)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        # Rotate at 10MB
        file_handler = RotatingFileHandler(log_file, maxBytes=10*1024*1024, backupCount=5)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(log_format)
        logger.addHandler(file_handler)

    return logger


def reset_logging() -> None:
    """Close and detach every handler, so the next setup_logging() starts fresh."""
    logger = logging.getLogger(LOGGER_NAME)
    for handler in logger.handlers[:]:
        handler.close()
        logger.removeHandler(handler)


def log_banner(title: str, logger: Optional[logging.Logger] = None) -> None:
    """Log ``title`` between two rules of '='."""
    logger = logger or get_logger()
    logger.info("=" * BANNER_WIDTH)
    logger.info(title)
    logger.info("=" * BANNER_WIDTH)


def get_logger() -> logging.Logger:
    """Get the configured logger instance."""
    return logging.getLogger(LOGGER_NAME)
