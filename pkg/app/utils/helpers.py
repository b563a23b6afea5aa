"""
Helper functions and utilities for various tasks across the application.
"""

import time
import platform
from pathlib import Path


def get_platform_info():
    """Get information about the current platform"""
    return {
        "system": platform.system(),
        "release": platform.release(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "python_version": platform.python_version(),
    }


def create_directory_if_not_exists(directory):
    """Create a directory if it doesn't exist, returning its Path"""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def format_seconds(seconds):
    """Format a duration as a human-readable string"""
    if seconds < 1.0:
        return f"{seconds * 1000.0:.1f} ms"
    if seconds < 120.0:
        return f"{seconds:.2f} s"
    return f"{seconds / 60.0:.1f} min"


def parse_grid(text):
    """
    Parse a parameter grid of reciprocal values.
    Accepts "80:5:120" (start:step:stop, inclusive) or "80,100,120".
    Returns the list of epsilon values 1/x in the given order.
    """
    text = str(text).replace(" ", "")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Grid range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"Empty grid range {text!r}")
        count = int(round((stop - start) / step)) + 1
        reciprocals = [start + i * step for i in range(count)]
    else:
        reciprocals = [float(p) for p in text.split(",") if p]
    if not reciprocals or any(r <= 0 for r in reciprocals):
        raise ValueError(f"Grid values must be positive, got {text!r}")
    return [1.0 / r for r in reciprocals]


class Stopwatch:
    """Wall-clock timer usable as a context manager"""

    def __init__(self):
        """Initialize a stopped timer"""
        self.start = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        self.elapsed = time.perf_counter() - self.start
        return False
