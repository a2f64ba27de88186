"""Cyclic-odometer counterexample: tent functions, exact measures, schedules.

The construction lives on the cyclic system ``{0, ..., N-1}`` with uniform
measure, where ``N = n * m`` for tower parameters ``n = floor(2**(k/2))``
and ``m = 2**k``.  The tent function climbs for ``n`` levels and descends
for ``n`` levels (integer multipliers times the unit ``sqrt(m/n)``), and
vanishes on the rest of the cycle.  Every shift this module accepts lands
the wraparound inside that zero region, which makes the cyclic surrogate
agree exactly with the tower quantities it stands in for.

All measures and squared norms are exact rationals; floating point enters
only for norms' square roots and Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import (
    InvalidParameterError,
    ResourceLimitError,
    ScheduleOverflowError,
    SurrogateValidityError,
)
from .noise import _C_I, _fmix64, stream_root  # shared hashing core
from .series import int_range_sq_sum, int_range_sum
from .stats import EmpiricalSummary, summarize

__all__ = [
    "TowerScale",
    "TowerFunction",
    "ColumnSimSpec",
    "CounterexampleRun",
    "ScheduleStep",
    "ScaleSchedule",
    "tower_scale",
    "tower_function",
    "shifted_diff",
    "sq_sum",
    "measure_abs_at_least",
    "support_measure",
    "exceedance_exact",
    "simulate_counterexample",
    "schedule_scales",
    "verify_schedule",
    "multi_scale_l2_bound",
    "scale_l1_norms",
]

_LEVEL_CAP = 1 << 26  # largest N for which level arrays are materialized

EXCEEDANCE_REFERENCE = 2.0 / math.e ** 4  # the binomial lower bound 2/e^4


@dataclass(frozen=True)
class TowerScale:
    """Integer parameters of one counterexample scale."""

    k: int
    n: int
    m: int
    N: int


def tower_scale(k: int) -> TowerScale:
    """Exact scale parameters ``n = floor(2**(k/2))``, ``m = 2**k``.

    Scales below 3 are rejected: the tent needs ``N >= 4n`` with room to
    spare for the shifts the module accepts.
    """
    if k < 3:
        raise InvalidParameterError(
            f"scale index must be >= 3 (tent support needs room in the cycle), got {k}"
        )
    n = math.isqrt(1 << k)
    m = 1 << k
    scale = TowerScale(k=k, n=n, m=m, N=n * m)
    assert scale.N >= 4 * scale.n
    return scale


@dataclass(frozen=True)
class TowerFunction:
    """The tent function of one scale.

    ``value(j) = multiplier(j) * unit`` with integer multipliers
    ``j+1`` (rising, ``j < n``), ``2n-1-j`` (falling, ``n <= j < 2n``),
    0 elsewhere, and ``unit = sqrt(m/n)``.  The peak value is
    ``n * unit = sqrt(n*m)`` at level ``n - 1``.
    """

    scale: TowerScale

    @property
    def unit(self) -> float:
        return math.sqrt(self.scale.m / self.scale.n)

    def multiplier(self, j: int) -> int:
        n, N = self.scale.n, self.scale.N
        if not (0 <= j < N):
            raise InvalidParameterError(f"level must lie in [0, {N}), got {j}")
        if j < n:
            return j + 1
        if j < 2 * n:
            return 2 * n - 1 - j
        return 0

    def value(self, j: int) -> float:
        return self.multiplier(j) * self.unit

    def multipliers(self) -> np.ndarray:
        """The full integer multiplier array (small scales only)."""
        n, N = self.scale.n, self.scale.N
        if N > _LEVEL_CAP:
            raise ResourceLimitError(
                f"level array of length {N} exceeds the materialization cap {_LEVEL_CAP}"
            )
        c = np.zeros(N, dtype=np.int64)
        c[:n] = np.arange(1, n + 1)
        c[n : 2 * n] = np.arange(n - 1, -1, -1)
        return c

    def level_values(self) -> np.ndarray:
        return self.multipliers() * self.unit

    # ---- exact norms -----------------------------------------------------

    def multiplier_sq_sum(self) -> int:
        """``sum_j multiplier(j)^2 = n(2n^2 + 1)/3`` exactly."""
        n = self.scale.n
        total = n * (2 * n * n + 1)
        assert total % 3 == 0
        return total // 3

    def l2_norm_sq(self) -> Fraction:
        """``||g||_2^2 = sum multipliers^2 * (m/n) / N`` exactly."""
        return Fraction(self.multiplier_sq_sum(), self.scale.n ** 2)

    def l1_norm_sq(self) -> Fraction:
        """``||g||_1^2 = n/m`` exactly (the multiplier total is n^2)."""
        return Fraction(self.scale.n, self.scale.m)

    def l1_norm(self) -> float:
        return math.sqrt(self.scale.n / self.scale.m)

    def sup_norm_sq(self) -> int:
        """``(sup g)^2 = n * m`` exactly."""
        return self.scale.n * self.scale.m


def tower_function(scale: TowerScale) -> TowerFunction:
    return TowerFunction(scale=scale)


def _check_shift(scale: TowerScale, n_shift: int) -> None:
    if not (1 <= n_shift <= scale.N - 2 * scale.n):
        raise SurrogateValidityError(
            f"shift {n_shift} outside [1, {scale.N - 2 * scale.n}] for scale k={scale.k}: "
            "the cyclic wraparound would leave the zero region"
        )


def shifted_diff(g: TowerFunction, n_shift: int) -> np.ndarray:
    """``d[j] = g(j) - g((j - n_shift) mod N)``, the value ladder of
    ``g - U^n g`` in the column model (small scales only)."""
    _check_shift(g.scale, n_shift)
    values = g.level_values()
    return values - np.roll(values, n_shift)


def _tent_correlation(n: int, s: int) -> int:
    """``sum_j multiplier(j) * multiplier(j - s)`` exactly, no wraparound.

    Valid whenever the shifted support stays inside the cycle, which the
    callers' shift preconditions guarantee.
    """
    if s < 0:
        raise InvalidParameterError(f"correlation shift must be >= 0, got {s}")
    if s >= 2 * n - 1:
        return 0
    if s >= n:
        length = 2 * n - 1 - s
        return length * (length + 1) * (length + 2) // 6
    # s < n: overlap of rising-rising, rising-falling, falling-falling.
    top = n - 1 - s
    rising = (
        int_range_sq_sum(0, top)
        + (s + 2) * int_range_sum(0, top)
        + (s + 1) * (top + 1)
    )
    mixed = 0
    for_lo, for_hi = n - s, n - 1
    if for_lo <= for_hi:
        # sum over t of (t+1)(2n-1-s-t) = (2n-s) * sum(y) - sum(y^2), y = t+1
        y_sum = int_range_sum(for_lo + 1, for_hi + 1)
        y_sq = int_range_sq_sum(for_lo + 1, for_hi + 1)
        mixed = (2 * n - s) * y_sum - y_sq
    falling = int_range_sq_sum(1, top) + s * int_range_sum(1, top)
    return rising + mixed + falling


def sq_sum(scale: TowerScale, s: int) -> int:
    """Exact ``sum_j (multiplier(j) - multiplier((j-s) mod N))^2``.

    With the shift landing in the zero region the cyclic autocorrelation
    has no wrap, so this is ``2*sum(multiplier^2) - 2*correlation(s)``.
    The actual level values scale this by ``m/n``, hence
    ``||g - U^s g||_2^2 = sq_sum / n^2`` exactly.
    """
    if s == 0:
        return 0
    _check_shift(scale, s)
    g = tower_function(scale)
    return 2 * g.multiplier_sq_sum() - 2 * _tent_correlation(scale.n, s)


def shifted_l2_norm_sq(scale: TowerScale, s: int) -> Fraction:
    """Exact ``||g - U^s g||_2^2``."""
    return Fraction(sq_sum(scale, s), scale.n ** 2)


# ---------------------------------------------------------------------------
# exact level measures and the binomial exceedance bound
# ---------------------------------------------------------------------------

def _tent_count_at_least(n: int, x: Fraction) -> int:
    """Levels of one tent band with multiplier >= x (exact, closed form)."""
    if x <= 0:
        return 2 * n  # the whole band, zero entry included
    if x > n:
        return 0
    ceil_x = -((-x.numerator) // x.denominator)
    rising = n - max(ceil_x, 1) + 1
    falling = max(n - ceil_x, 0) if ceil_x <= n - 1 else 0
    return max(rising, 0) + falling


def measure_abs_at_least(
    g: TowerFunction, shift: int, multiplier_threshold: Fraction
) -> Fraction:
    """Exact measure of ``{ |g - U^shift g| >= threshold }``.

    The threshold is expressed in multiplier units: a level value of
    ``c * sqrt(m/n)`` meets the cut iff ``c >= multiplier_threshold``.
    (The set from the construction uses the cut ``(1/2) * sqrt(m*n)``,
    i.e. multiplier threshold ``n/2``.)  For shifts >= 2n the difference
    is two disjoint signed tent bands and the count is closed-form; small
    scales fall back to enumeration for other shifts.
    """
    scale = g.scale
    _check_shift(scale, shift)
    x = Fraction(multiplier_threshold)
    if x <= 0:
        return Fraction(1)  # the zero region qualifies too
    if shift >= 2 * scale.n:
        count = 2 * _tent_count_at_least(scale.n, x)
        return Fraction(count, scale.N)
    if scale.N > _LEVEL_CAP:
        raise ResourceLimitError(
            f"shift {shift} < 2n needs level enumeration, but N={scale.N} exceeds the cap"
        )
    c = g.multipliers()
    d = np.abs(c - np.roll(c, shift))
    # exact integer comparison d >= x  <=>  d * den >= num
    count = int(np.count_nonzero(d * x.denominator >= x.numerator))
    return Fraction(count, scale.N)


def support_measure(g: TowerFunction, shift: int) -> Fraction:
    """Exact measure of the support of ``g - U^shift g``."""
    scale = g.scale
    _check_shift(scale, shift)
    if shift >= 2 * scale.n:
        # two tent bands, each with 2n-1 nonzero levels
        return Fraction(2 * (2 * scale.n - 1), scale.N)
    if scale.N > _LEVEL_CAP:
        raise ResourceLimitError(
            f"support count for shift {shift} < 2n needs enumeration, N={scale.N} too large"
        )
    c = g.multipliers()
    return Fraction(int(np.count_nonzero(c != np.roll(c, shift))), scale.N)


@dataclass(frozen=True)
class ExceedanceBound:
    """Probability that exactly one of ``m`` independent columns meets the
    high-threshold cut, with the exact cut measure ``p``."""

    scale: TowerScale
    p: Fraction
    value: float
    reference: float
    exceeds: bool


def exceedance_exact(scale: TowerScale) -> ExceedanceBound:
    """``m * p * (1 - p)**(m-1)`` with the exact ``p`` of the threshold set.

    The threshold set is ``{ |g - U^{2n} g| >= (1/2) sqrt(m n) }``; its
    exact measure is ``2(n+1)/N`` for even ``n`` and ``2n/N`` for odd ``n``.
    The flag records whether the value clears the reference ``2/e^4``.
    """
    g = tower_function(scale)
    p = measure_abs_at_least(g, 2 * scale.n, Fraction(scale.n, 2))
    pf = float(p)
    value = scale.m * pf * math.exp((scale.m - 1) * math.log1p(-pf))
    return ExceedanceBound(
        scale=scale,
        p=p,
        value=value,
        reference=EXCEEDANCE_REFERENCE,
        exceeds=value >= EXCEEDANCE_REFERENCE,
    )


# ---------------------------------------------------------------------------
# column-model Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSimSpec:
    """One Monte Carlo experiment on the column model.

    Each replication draws ``n2`` independent uniform levels (one per
    column), sums ``d[level]`` for ``d = g - U^{n1} g``, and normalizes by
    ``sqrt(n1 * n2)``.
    """

    scale: TowerScale
    n1: int
    n2: int
    replications: int
    master_seed: int

    def __post_init__(self) -> None:
        if self.n2 < 1 or self.replications < 1:
            raise InvalidParameterError("n2 and replications must be >= 1")
        _check_shift(self.scale, self.n1)


@dataclass(frozen=True)
class CounterexampleRun:
    spec: ColumnSimSpec
    samples: np.ndarray
    summary: EmpiricalSummary


def _uniform_levels(roots: np.ndarray, n_cols: int, big_n: int) -> np.ndarray:
    """Deterministic per-(replication, column) uniform levels in [0, N)."""
    cols = np.arange(n_cols, dtype=np.int64).view(np.uint64) * _C_I
    h = _fmix64(roots[:, None] ^ cols[None, :])
    u = (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    # N <= 2^26 << 2^53, so u * N < N holds exactly and the floor is unbiased
    # to within one part in 2^53 / N.
    return (u * big_n).astype(np.int64)


def simulate_counterexample(spec: ColumnSimSpec, thresholds: tuple[float, ...] = (0.5,)) -> CounterexampleRun:
    """Monte Carlo of the normalized column statistic.

    Deterministic in (master_seed, replication index); replication batches
    are chunked only for memory, never changing any drawn level.
    """
    g = tower_function(spec.scale)
    d = shifted_diff(g, spec.n1)
    norm = math.sqrt(spec.n1 * spec.n2)
    out = np.empty(spec.replications, dtype=np.float64)
    chunk = max(1, (1 << 22) // max(spec.n2, 1))
    for start in range(0, spec.replications, chunk):
        stop = min(start + chunk, spec.replications)
        roots = np.array(
            [stream_root(spec.master_seed, spec.scale.k, r) for r in range(start, stop)],
            dtype=np.uint64,
        )
        levels = _uniform_levels(roots, spec.n2, spec.scale.N)
        out[start:stop] = d[levels].sum(axis=1) / norm
    return CounterexampleRun(
        spec=spec, samples=out, summary=summarize(out, thresholds=thresholds)
    )


def exact_stat_variance(scale: TowerScale, n1: int, n2: int) -> Fraction:
    """Exact variance of the column statistic: ``sq_sum / (n^2 * n1)``.

    The ``n2`` columns are iid, so ``n2`` cancels against the window
    normalization.
    """
    del n2  # kept in the signature to mirror the experiment setup
    return Fraction(sq_sum(scale, n1), scale.n ** 2 * n1)


# ---------------------------------------------------------------------------
# the multi-scale schedule
# ---------------------------------------------------------------------------

def _sqrt_lower(x: int, bits: int) -> Fraction:
    scaled = math.isqrt(x << (2 * bits))
    return Fraction(scaled, 1 << bits)


def _sqrt_upper(x: int, bits: int) -> Fraction:
    scaled = math.isqrt(x << (2 * bits)) + 1
    return Fraction(scaled, 1 << bits)


@dataclass(frozen=True)
class ScheduleStep:
    """Certified record for one schedule index.

    ``sup_lhs <= sup-norm sum bound`` and ``sup_rhs`` is the lower
    enclosure of ``2^{-level} * sqrt(n)``; the step-one inequality holds
    whenever ``sup_lhs < sup_rhs``.  ``l2_checks`` holds one
    ``(earlier_k, sq_sum_value, threshold)`` triple per earlier scale for
    the step-two inequality ``||g - U^{2n'} g||_2^2 <= 16^{-level}``.
    """

    level: int
    k: int
    sup_lhs: Fraction
    sup_rhs: Fraction
    l2_checks: tuple[tuple[int, Fraction, Fraction], ...]

    def holds(self) -> bool:
        if self.level > 1 and not (self.sup_lhs < self.sup_rhs):
            return False
        return all(value <= threshold for (_, value, threshold) in self.l2_checks)


@dataclass(frozen=True)
class ScaleSchedule:
    steps: tuple[ScheduleStep, ...]

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(step.k for step in self.steps)


def _step_for_candidate(
    level: int, k: int, earlier: tuple[int, ...], bits: int
) -> Optional[ScheduleStep]:
    """Build the certified record for candidate ``k`` at ``level``; None if
    any inequality fails."""
    scale = tower_scale(k)
    if level == 1:
        return ScheduleStep(level=1, k=k, sup_lhs=Fraction(0), sup_rhs=Fraction(1), l2_checks=())
    sup_lhs = Fraction(0)
    for k_prev in earlier:
        prev = tower_scale(k_prev)
        sup_lhs += 2 * _sqrt_upper(prev.N, bits)
    sup_rhs = Fraction(_sqrt_lower(scale.n, bits), 1 << level)
    if not (sup_lhs < sup_rhs):
        return None
    l2_checks = []
    for k_prev in earlier:
        shift = 2 * tower_scale(k_prev).n
        if shift > scale.N - 2 * scale.n:
            return None
        value = Fraction(sq_sum(scale, shift), scale.n ** 2)
        threshold = Fraction(1, 16 ** level)
        if value > threshold:
            return None
        l2_checks.append((k_prev, value, threshold))
    return ScheduleStep(
        level=level, k=k, sup_lhs=sup_lhs, sup_rhs=sup_rhs, l2_checks=tuple(l2_checks)
    )


def schedule_scales(
    levels: int, k_start: int = 3, k_max: int = 4096, bits: int = 64
) -> ScaleSchedule:
    """Greedy smallest-index schedule certifying the two-step recursion.

    Step one keeps the accumulated sup-norm bound of earlier scales below
    ``2^{-level} * sqrt(n)``; step two keeps the exact squared shifted
    norm below ``16^{-level}`` against every earlier scale.  The first
    index is the smallest valid scale (``k_start``); all comparisons are
    exact integer/rational arithmetic with directed square-root
    enclosures.
    """
    if levels < 1:
        raise InvalidParameterError(f"schedule needs >= 1 level, got {levels}")
    steps: list[ScheduleStep] = []
    for level in range(1, levels + 1):
        if level == 1:
            steps.append(_step_for_candidate(1, k_start, (), bits))
            continue
        earlier = tuple(s.k for s in steps)
        k = earlier[-1] + 1
        while True:
            if k > k_max:
                raise ScheduleOverflowError(
                    f"no admissible scale <= {k_max} at schedule level {level}"
                )
            candidate = _step_for_candidate(level, k, earlier, bits)
            if candidate is not None:
                steps.append(candidate)
                break
            k += 1
    return ScaleSchedule(steps=tuple(steps))


def _correlation_reference(n: int, s: int) -> int:
    """Independent tent autocorrelation used by the verification pass.

    Enumerates when the support is small enough; otherwise evaluates a
    separately derived polynomial form via exact Faulhaber sums over the
    three overlap pieces.
    """
    if 2 * n <= 1 << 12:
        c = np.zeros(4 * n + s + 1, dtype=object)
        for j in range(n):
            c[j] = j + 1
        for j in range(n, 2 * n):
            c[j] = 2 * n - 1 - j
        return int(sum(int(c[j]) * int(c[j - s]) for j in range(s, len(c))))
    if s >= 2 * n - 1:
        return 0
    if s >= n:
        length = 2 * n - 1 - s
        return sum_products_rising_falling(length)
    total = 0
    # rising x rising: sum_{t=0}^{n-1-s} (t+1)(t+s+1)
    b = n - 1 - s
    total += int_range_sq_sum(1, b + 1) + s * int_range_sum(1, b + 1)
    # rising x falling: sum_{t=n-s}^{n-1} (t+1)(2n-1-s-t)
    for_count = s
    lo = n - s + 1  # values of (t+1)
    total += sum((lo + i) * (n - 1 - i) for i in range(for_count)) if for_count <= 1 << 12 else _mixed_piece(n, s)
    # falling x falling: sum_{r=1}^{n-1-s} r(r+s)
    total += int_range_sq_sum(1, b) + s * int_range_sum(1, b)
    return total


def _mixed_piece(n: int, s: int) -> int:
    # sum_{i=0}^{s-1} (n - s + 1 + i) * (n - 1 - i), expanded exactly
    a0 = (n - s + 1) * (n - 1) * s
    a1 = (n - 1 - (n - s + 1)) * int_range_sum(0, s - 1)
    a2 = -int_range_sq_sum(0, s - 1)
    return a0 + a1 + a2


def sum_products_rising_falling(length: int) -> int:
    """``sum_{x=1}^{L} x (L - x + 1) = L(L+1)(L+2)/6`` exactly."""
    return length * (length + 1) * (length + 2) // 6


def verify_schedule(schedule: ScaleSchedule, bits: int = 96) -> bool:
    """Re-derive every recorded inequality from scratch.

    Uses tighter square-root enclosures than the construction pass and an
    independent correlation evaluation (enumeration at small scales, a
    separately expanded polynomial otherwise).
    """
    ks = schedule.indices
    if list(ks) != sorted(set(ks)):
        return False
    for idx, step in enumerate(schedule.steps):
        level = idx + 1
        if step.level != level:
            return False
        scale = tower_scale(step.k)
        if level > 1:
            lhs = Fraction(0)
            for k_prev in ks[: idx]:
                lhs += 2 * _sqrt_upper(tower_scale(k_prev).N, bits)
            rhs = Fraction(_sqrt_lower(scale.n, bits), 1 << level)
            if not (lhs < rhs):
                return False
        for k_prev in ks[: idx]:
            shift = 2 * tower_scale(k_prev).n
            g = tower_function(scale)
            value = Fraction(
                2 * g.multiplier_sq_sum() - 2 * _correlation_reference(scale.n, shift),
                scale.n ** 2,
            )
            if value > Fraction(1, 16 ** level):
                return False
            recorded = dict((c[0], c[1]) for c in step.l2_checks)
            if k_prev not in recorded or recorded[k_prev] != value:
                return False
    return True


def multi_scale_l2_bound(schedule: ScaleSchedule, level: int) -> dict:
    """Exact cross-scale L2 bound at one schedule level.

    The squared bound adds, for every other schedule scale, the exact
    squared norm of ``g' - U^{2n} g'`` (shift ``2n`` of the level's own
    scale), divided by ``n``.  When the shift exceeds the other scale's
    validity range, the two copies have disjoint supports and the exact
    value is ``2 ||g'||_2^2``.  The certified target is ``2 * 2^{-level}``.
    """
    if not (1 <= level <= len(schedule.steps)):
        raise InvalidParameterError(
            f"level must be in [1, {len(schedule.steps)}], got {level}"
        )
    own = tower_scale(schedule.indices[level - 1])
    shift = 2 * own.n
    total = Fraction(0)
    for other_level, k_other in enumerate(schedule.indices, start=1):
        if other_level == level:
            continue
        other = tower_scale(k_other)
        g_other = tower_function(other)
        if shift <= other.N - 2 * other.n:
            norm_sq = Fraction(sq_sum(other, shift), other.n ** 2)
        else:
            norm_sq = 2 * g_other.l2_norm_sq()
        total += norm_sq
    bound_sq = total / own.n
    threshold = Fraction(4, 4 ** level)
    return {
        "level": level,
        "bound_sq": bound_sq,
        "bound": math.sqrt(float(bound_sq)),
        "threshold": 2.0 * 2.0 ** -level,
        "holds": bound_sq <= threshold,
    }


def scale_l1_norms(schedule: ScaleSchedule) -> list[dict]:
    """Per-scale L1 norms with their geometric bound ``2^{1 - k/4}``.

    These are the telescoping-series ingredients: the projective series
    of the combined field telescopes scale by scale, and the L1 norms
    decaying geometrically is what drives its convergence.
    """
    rows = []
    for step in schedule.steps:
        scale = tower_scale(step.k)
        g = tower_function(scale)
        bound = 2.0 * 2.0 ** (-scale.k / 4.0)
        rows.append(
            {
                "level": step.level,
                "k": step.k,
                "l1_norm": g.l1_norm(),
                "l1_norm_sq": g.l1_norm_sq(),
                "geometric_bound": bound,
                "holds": g.l1_norm() <= bound,
            }
        )
    return rows
