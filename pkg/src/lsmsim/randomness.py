"""Bit extraction from conductance arrays and two NIST SP 800-22 tests."""

from __future__ import annotations

from math import erfc, sqrt

import numpy as np

ALPHA = 0.01
MIN_BITS = 100


def extract_bits(g) -> np.ndarray:
    """Compare every cell with the median: strictly greater is 1. Row-major."""
    g = np.asarray(getattr(g, "g", g), dtype=np.float64).reshape(-1)
    if g.size < 2:
        raise ValueError("need at least 2 cells")
    return (g > np.median(g)).astype(np.uint8)


def _as_bits(bits) -> np.ndarray:
    b = np.asarray(bits).reshape(-1)
    if b.size < MIN_BITS:
        raise ValueError(f"need at least {MIN_BITS} bits, got {b.size}")
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("bits must be 0 or 1")
    return b.astype(np.int64)


def monobit_test(bits) -> float:
    """Frequency (monobit) test p-value."""
    b = _as_bits(bits)
    s = int(np.sum(2 * b - 1))
    return erfc(abs(s) / sqrt(2 * b.size))


def runs_test(bits) -> float | None:
    """Runs test p-value, or ``None`` when the frequency prerequisite fails."""
    b = _as_bits(bits)
    n = b.size
    pi = b.mean()
    if abs(pi - 0.5) >= 2 / sqrt(n):
        return None
    v = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    return erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * sqrt(2 * n) * pi * (1 - pi)))


def passes(p_value: float | None, alpha: float = ALPHA) -> bool:
    return p_value is not None and p_value >= alpha
