"""
Utility functions shared by the RTV solver suite.
"""

import json
import logging
import math
import os
import time
from pathlib import Path
from typing import Any, Sequence, Set, Union

import numpy as np

# Float precision used for every file this suite writes.
FLOAT_DIGITS = 12

# Identifier of the random bit generator, written into every report.
RNG_ALGORITHM = "philox4x64-10"

_SEED_MASK = (1 << 64) - 1

# Loggers handed out by get_logger, for set_log_level.
_LOGGER_NAMES: Set[str] = set()


def get_logger(name: str) -> logging.Logger:
    """
    Get a configured logger instance.

    Args:
        name: Logger name

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)

    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)

        log_level = os.environ.get("LOG_LEVEL", "INFO")
        logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
        _LOGGER_NAMES.add(name)

    return logger


def set_log_level(level: str) -> None:
    """
    Change the level of every logger created by get_logger.

    Args:
        level: Level name such as DEBUG or WARNING
    """
    value = getattr(logging, level.upper(), logging.INFO)
    for name in _LOGGER_NAMES:
        logging.getLogger(name).setLevel(value)


def round_float(value: float) -> float:
    """
    Round a float to the suite's fixed number of significant digits.

    Args:
        value: Value to round

    Returns:
        Rounded value (non-finite values are returned unchanged)
    """
    if not math.isfinite(value):
        return value
    return float(f"{value:.{FLOAT_DIGITS}g}")


def _canonicalize(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (np.floating, float)):
        return round_float(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(key): _canonicalize(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonicalize(value) for value in obj]
    if isinstance(obj, (set, frozenset)):
        return [_canonicalize(value) for value in sorted(obj)]
    return obj


def canonical_json(obj: Any) -> str:
    """
    Serialize an object to canonical JSON.

    Keys are sorted and every float is rounded to FLOAT_DIGITS significant
    digits, so equal values always produce identical bytes.

    Args:
        obj: JSON-compatible object (numpy scalars, tuples and sets allowed)

    Returns:
        JSON text terminated by a newline
    """
    return json.dumps(_canonicalize(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj: Any, path: Union[str, Path]) -> None:
    """
    Write an object as canonical JSON, creating parent directories.

    Args:
        obj: JSON-compatible object
        path: Destination file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj), encoding="utf-8")


def read_json(path: Union[str, Path]) -> Any:
    """
    Read a JSON file.

    Args:
        path: Source file

    Returns:
        Parsed JSON value

    Raises:
        ValidationError: If the file is not valid JSON (line context included)
        OSError: If the file cannot be read
    """
    from validators import ValidationError

    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(
            f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e


def make_rng(seed: int) -> np.random.Generator:
    """
    Create the suite's counter-based random generator.

    Args:
        seed: 64-bit seed (reduced modulo 2**64)

    Returns:
        numpy Generator backed by Philox keyed with the seed
    """
    return np.random.Generator(np.random.Philox(key=int(seed) & _SEED_MASK))


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive an independent 64-bit seed from a base seed and integer keys.

    Args:
        seed: Base seed
        keys: Stream identifiers (round number, replication, ...)

    Returns:
        Derived seed
    """
    entropy = [int(seed) & _SEED_MASK] + [int(k) & _SEED_MASK for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def binomial_sigma(p: float, n: int) -> float:
    """
    Standard error of an observed frequency.

    Args:
        p: Observed frequency
        n: Number of trials

    Returns:
        sqrt(p (1 - p) / n)
    """
    if n <= 0:
        return 0.0
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def mean_sigma(values: Union[Sequence[float], np.ndarray]) -> float:
    """
    Standard error of a sample mean.

    Args:
        values: Observations

    Returns:
        Sample standard deviation divided by sqrt(n)
    """
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return 0.0
    return float(arr.std(ddof=1) / math.sqrt(arr.size))


class Stopwatch:
    """Monotonic elapsed-time helper."""

    def __init__(self):
        self.started = time.perf_counter()

    @property
    def elapsed(self) -> float:
        """Seconds since construction."""
        return time.perf_counter() - self.started

    @property
    def elapsed_ms(self) -> float:
        """Milliseconds since construction."""
        return self.elapsed * 1000.0

    def expired(self, limit: Union[float, None]) -> bool:
        """
        Check a time limit.

        Args:
            limit: Limit in seconds, or None for no limit

        Returns:
            True if the limit is set and has elapsed
        """
        return limit is not None and self.elapsed >= limit
