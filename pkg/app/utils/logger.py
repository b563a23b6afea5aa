"""
Logging setup for sensipod.
One console stream for progress and one rotating file per run holding the
DEBUG trace of solvers, bases and sweep workers.
"""

import os
import logging
import datetime
from logging.handlers import RotatingFileHandler

LOGGER_NAME = "sensipod"

# Sweep cells run on worker threads, so the file trace names the thread
FILE_FORMAT = "%(asctime)s [%(threadName)s] %(name)s %(levelname)s: %(message)s"
CONSOLE_FORMAT = "%(levelname)-7s %(name)s: %(message)s"


def _run_log_path(log_dir, run_name):
    stamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    suffix = f"_{run_name}" if run_name else ""
    return os.path.join(log_dir, f"sensipod{suffix}_{stamp}.log")


def setup_logger(log_dir=None, level="INFO", run_name=None):
    """
    Attach console and run-file handlers to the sensipod logger.
    Modules log through children named sensipod.<package>.<module>; a second
    call only adjusts the console level.
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG)

    if getattr(logger, "_sensipod_configured", False):
        for handler in logger.handlers:
            if not isinstance(handler, RotatingFileHandler):
                handler.setLevel(level)
        return logger

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    logger.addHandler(console_handler)

    log_dir = log_dir or "logs"
    try:
        os.makedirs(log_dir, exist_ok=True)
        log_file = _run_log_path(log_dir, run_name)
        file_handler = RotatingFileHandler(log_file, maxBytes=10*1024*1024, backupCount=5)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        logger.addHandler(file_handler)
        logger.info(f"Run log: {log_file}")
    except OSError as e:
        logger.warning(f"No run log, cannot write to {log_dir}: {e}")

    logger._sensipod_configured = True
    return logger
