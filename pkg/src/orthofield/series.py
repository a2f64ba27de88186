"""Small numeric helpers shared by the field and decomposition modules.

Slowly decaying positive series appear everywhere in this package, so the
accumulation helpers here are compensated (error-free where possible), and
the zeta-based closed forms give exact values for the triangle-weighted
power tails that dominate every truncation bound.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from scipy.special import zeta as _hurwitz_zeta

from .errors import InvalidParameterError

__all__ = [
    "csum",
    "hurwitz_zeta",
    "triangle_tail",
    "triangle_tail_upper",
    "power_tail_upper",
    "box_diagonal_counts",
    "int_range_sum",
    "int_range_sq_sum",
]


def csum(values: Iterable[float]) -> float:
    """Compensated sum (exact rounding of the true sum of the inputs)."""
    return math.fsum(values)


def hurwitz_zeta(s: float, x: float) -> float:
    """``sum_{t >= 0} (x + t)**(-s)`` for ``s > 1``, ``x > 0``."""
    if s <= 1.0:
        raise InvalidParameterError(f"zeta tail requires exponent > 1, got {s!r}")
    if x <= 0.0:
        raise InvalidParameterError(f"zeta tail requires positive offset, got {x!r}")
    return float(_hurwitz_zeta(s, x))


def triangle_tail(alpha: float, x: float) -> float:
    """Exact value of ``sum_{t >= 0} (t + 1) * (x + t)**(-alpha)``.

    This is the closed form for a double power tail collapsed along
    anti-diagonals: with ``w = x + t`` the sum telescopes to
    ``zeta(alpha - 1, x) + (1 - x) * zeta(alpha, x)``.  Requires
    ``alpha > 2`` for convergence.
    """
    if alpha <= 2.0:
        raise InvalidParameterError(f"triangle tail requires alpha > 2, got {alpha!r}")
    return hurwitz_zeta(alpha - 1.0, x) + (1.0 - x) * hurwitz_zeta(alpha, x)


def triangle_tail_upper(alpha: float, x: float) -> float:
    """Certified upper bound on :func:`triangle_tail` for ``x >= 1``.

    Uses ``t + 1 <= x + t``, then bounds the remaining pure power tail by
    its first term plus the comparison integral.
    """
    if x < 1.0:
        raise InvalidParameterError(f"upper bound valid for x >= 1, got {x!r}")
    return power_tail_upper(alpha - 1.0, x)


def power_tail_upper(s: float, x: float) -> float:
    """Certified upper bound on ``sum_{t >= 0} (x + t)**(-s)`` (s > 1).

    First term plus the integral ``x**(1-s)/(s-1)`` dominating the rest of
    the decreasing summand.
    """
    if s <= 1.0:
        raise InvalidParameterError(f"power tail requires exponent > 1, got {s!r}")
    if x <= 0.0:
        raise InvalidParameterError(f"power tail requires positive offset, got {x!r}")
    return x ** (-s) + x ** (1.0 - s) / (s - 1.0)


def box_diagonal_counts(m: int) -> np.ndarray:
    """``counts[s] = #{(u, v) in [0, m]^2 : u + v = s}`` for s = 0..2m.

    The anti-diagonal multiplicities of a square lag box; used to collapse
    double lag sums into single sums over ``s = u + v``.
    """
    if m < 0:
        raise InvalidParameterError(f"box size must be >= 0, got {m}")
    up = np.arange(1, m + 2, dtype=np.int64)
    return np.concatenate([up, up[-2::-1]])


def int_range_sum(a: int, b: int) -> int:
    """Exact ``sum_{t=a}^{b} t`` (0 when the range is empty)."""
    if a > b:
        return 0
    return (a + b) * (b - a + 1) // 2


def int_range_sq_sum(a: int, b: int) -> int:
    """Exact ``sum_{t=a}^{b} t^2`` (0 when the range is empty)."""
    if a > b:
        return 0

    def cum(n: int) -> int:
        if n < 0:
            return 0
        return n * (n + 1) * (2 * n + 1) // 6

    return cum(b) - cum(a - 1)
