import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Dict

FORMAT = "%(asctime)s - %(name)s - %(threadName)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# module name -> logger, so a run can move every file handler at once
_LOGGERS: Dict[str, logging.Logger] = {}


def _file_handler(log_dir: str, module_name: str, max_bytes: int, backup_count: int) -> RotatingFileHandler:
    os.makedirs(log_dir, exist_ok=True)
    handler = RotatingFileHandler(
        os.path.join(log_dir, f"{module_name}.log"),
        maxBytes=max_bytes,
        backupCount=backup_count,
        encoding="utf-8",
        mode="a",
    )
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(FORMAT, datefmt=DATE_FORMAT))
    return handler


def configure_logger(module_name: str, log_dir: str | None = None, max_bytes: int = 1_000_000, backup_count: int = 3) -> logging.Logger:
    """
    Configure a rotating logger for one pipeline module.

    Args:
        module_name (str): Logger name, also the log file stem
        log_dir (str): Directory for log files (default: $LOG_DIR or "logs")
        max_bytes (int): Max file size before rotation (default: 1MB)
        backup_count (int): Number of backup logs to keep (default: 3)

    Returns:
        logging.Logger: Configured logger
    """
    log_dir = log_dir or os.getenv("LOG_DIR", "logs")

    logger = logging.getLogger(module_name)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    console_handler = logging.StreamHandler()
    console_handler.setLevel(os.getenv("LOG_LEVEL", "INFO").upper())
    console_handler.setFormatter(logging.Formatter(FORMAT, datefmt=DATE_FORMAT))

    # Remove existing handlers to avoid duplicate logs
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    logger.addHandler(_file_handler(log_dir, module_name, max_bytes, backup_count))
    logger.addHandler(console_handler)
    _LOGGERS[module_name] = logger
    return logger


def redirect_logs(log_dir: str | os.PathLike) -> None:
    """Point the file handler of every configured logger at `log_dir` (e.g. a run's output folder)."""
    log_dir = os.fspath(log_dir)
    for name, logger in _LOGGERS.items():
        for handler in [h for h in logger.handlers if isinstance(h, RotatingFileHandler)]:
            if os.path.dirname(handler.baseFilename) == os.path.abspath(log_dir):
                continue
            new_handler = _file_handler(log_dir, name, handler.maxBytes, handler.backupCount)
            handler.close()
            logger.removeHandler(handler)
            logger.addHandler(new_handler)
