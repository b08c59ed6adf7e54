"""
Logging utility for edpcea
Provides file-based logging plus a console handler for warnings
"""
import os
import sys
import datetime
import logging
from pathlib import Path


def _logs_dir():
    override = os.environ.get("EDPCEA_LOG_DIR")
    if override:
        return Path(override)
    return Path.home() / ".edpcea" / "logs"


# Configure logging
def setup_logger(name="edpcea"):
    """
    Setup a logger with file output and a stderr handler for warnings
    Args:
        name (str): Logger name
    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.INFO)

    # Clear any existing handlers
    logger.handlers.clear()
    logger.propagate = False

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # unwritable log dir: console only
    try:
        logs_dir = _logs_dir()
        logs_dir.mkdir(parents=True, exist_ok=True)
        timestamp = datetime.datetime.now().strftime("%Y%m%d")
        log_file = logs_dir / f"edpcea_{timestamp}.log"
        file_handler = logging.FileHandler(log_file, mode='a', encoding='utf-8')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except OSError:
        pass

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
    logger.addHandler(console_handler)

    return logger


def log_message(logger, message, level="INFO"):
    """Log `message` at a level given by name; unknown names fall back to INFO"""
    numeric = logging.getLevelName(str(level).upper())
    logger.log(numeric if isinstance(numeric, int) else logging.INFO, message)


# Global logger instance
_logger = setup_logger()


def get_logger():
    """
    Get the global logger instance
    Returns:
        logging.Logger: Global logger instance
    """
    return _logger
