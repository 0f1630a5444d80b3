import logging
import os
from logging.handlers import RotatingFileHandler

ROOT_LOGGER = "CityOps"

_configured = False


def configure_logging(log_dir: str = "logs", level: str = "INFO") -> logging.Logger:
    """Set up the CityOps logger tree once per process.

    Logs to the console (message only) and to <log_dir>/pipeline.log through a
    rotating file handler (max 5 MB, 3 backups). Later calls only adjust the level.

    Args:
        log_dir (str): Directory for pipeline.log; created if missing.
        level (str): Logging level name.

    Returns:
        logging.Logger: The root CityOps logger.
    """
    global _configured
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))

    if _configured or logger.handlers:
        _configured = True
        return logger

    if not os.path.exists(log_dir):
        os.makedirs(log_dir, exist_ok=True)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter('%(message)s'))

    file_handler = RotatingFileHandler(
        os.path.join(log_dir, "pipeline.log"),
        maxBytes=5 * 1024 * 1024,  # 5 MB
        backupCount=3
    )
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))

    logger.addHandler(console_handler)
    logger.addHandler(file_handler)
    _configured = True
    return logger


def get_logger(component: str) -> logging.Logger:
    """Return the child logger for a component, e.g. CityOps.ResourceTree."""
    return logging.getLogger(f"{ROOT_LOGGER}.{component}")
