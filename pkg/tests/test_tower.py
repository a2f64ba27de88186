"""Cyclic stacked-levels function: exact norms, cut measures, schedule.

Oracles
-------
* Per-level multiplier profile re-derived from the piecewise definition.
* Correlations, cut measures, and supports by direct enumeration over all
  levels (small scales), against the closed forms.
* The binomial exceedance recomputed from its defining formula.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from orthofield import tower
from orthofield.errors import (
    InvalidParameterError,
    ResourceLimitError,
    SurrogateValidityError,
)


def tent_multiplier(n: int, j: int) -> int:
    """Piecewise definition: rising j+1, falling 2n-1-j, zero elsewhere."""
    if j < n:
        return j + 1
    if j < 2 * n:
        return 2 * n - 1 - j
    return 0


# ---------------------------------------------------------------------------
# level profile and norms
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [3, 4, 5, 7, 9, 11])
def test_level_profile_matches_piecewise_definition(k: int) -> None:
    scale = tower.tower_scale(k)
    g = tower.tower_function(scale)
    values = g.multipliers()
    assert values.shape == (scale.N,)
    for j in range(scale.N):
        assert int(values[j]) == tent_multiplier(scale.n, j)
        assert g.multiplier(j) == tent_multiplier(scale.n, j)
    unit = math.sqrt(scale.m / scale.n)
    np.testing.assert_allclose(g.level_values(), values * unit, rtol=1e-15)


@pytest.mark.parametrize("k", [3, 5, 8, 10])
def test_exact_norms_match_enumeration(k: int) -> None:
    scale = tower.tower_scale(k)
    g = tower.tower_function(scale)
    mult = [tent_multiplier(scale.n, j) for j in range(scale.N)]
    assert g.multiplier_sq_sum() == sum(c * c for c in mult)
    # ||g||_2^2 = (m/n) * sum(c^2) / N exactly
    assert g.l2_norm_sq() == Fraction(scale.m * g.multiplier_sq_sum(), scale.n * scale.N)
    # ||g||_1^2 = (m/n) * (sum |c| / N)^2 exactly
    assert g.l1_norm_sq() == Fraction(scale.m, scale.n) * Fraction(sum(mult), scale.N) ** 2
    assert g.l1_norm() == pytest.approx(math.sqrt(float(g.l1_norm_sq())), rel=1e-15)
    assert g.sup_norm_sq() == scale.n * scale.m


def test_l2_norm_closed_form() -> None:
    # sum of squared multipliers over one tent is (2n^3 + n) / 3, so
    # ||g||_2^2 = (m/n) * [(2n^3+n)/3] / N = (2n^2 + 1) / (3n) exactly.
    for k in (6, 10, 14):
        scale = tower.tower_scale(k)
        g = tower.tower_function(scale)
        assert g.l2_norm_sq() == Fraction(2 * scale.n**2 + 1, 3 * scale.n)


# ---------------------------------------------------------------------------
# shifted differences
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [3, 4, 6, 8])
def test_sq_sum_matches_enumeration(k: int) -> None:
    scale = tower.tower_scale(k)
    g = tower.tower_function(scale)
    mult = np.array([tent_multiplier(scale.n, j) for j in range(scale.N)], dtype=np.int64)
    hi = scale.N - 2 * scale.n
    shifts = sorted(
        {1, 2, 3, scale.n - 1, scale.n, scale.n + 1, 2 * scale.n - 1, 2 * scale.n, hi}
    )
    for s in shifts:
        if not (1 <= s <= hi):
            continue
        diff = mult - np.roll(mult, s)
        assert tower.sq_sum(scale, s) == int(np.sum(diff * diff)), s
        assert tower.shifted_l2_norm_sq(scale, s) == Fraction(
            int(np.sum(diff * diff)), scale.n**2
        )


def test_shifted_diff_three_case_structure() -> None:
    # d = g - U g: rising region +1 steps, peak drop, falling -1 steps,
    # re-entry spike at level 0 and at 2n.
    scale = tower.tower_scale(6)
    g = tower.tower_function(scale)
    d = tower.shifted_diff(g, 1)
    unit = g.unit
    n = scale.n
    for j in range(scale.N):
        prev = tent_multiplier(n, (j - 1) % scale.N)
        here = tent_multiplier(n, j)
        assert d[j] == pytest.approx((here - prev) * unit, rel=1e-12, abs=1e-12)
    # the three cases: +unit steps up the rising band, -unit steps down the
    # falling band (which ends at multiplier 0 at level 2n-1), 0 elsewhere
    for j in range(n):
        assert d[j] == pytest.approx(unit, rel=1e-15)
    for j in range(n, 2 * n):
        assert d[j] == pytest.approx(-unit, rel=1e-15)
    assert not np.any(d[2 * n :])


def test_shift_range_is_enforced() -> None:
    scale = tower.tower_scale(5)
    g = tower.tower_function(scale)
    with pytest.raises(SurrogateValidityError):
        tower.shifted_diff(g, 0)
    with pytest.raises(SurrogateValidityError):
        tower.shifted_diff(g, scale.N - 2 * scale.n + 1)
    with pytest.raises(InvalidParameterError):
        tower.tower_scale(2)


# ---------------------------------------------------------------------------
# cut measures and the exceedance bound
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [3, 4, 6, 8])
def test_cut_measure_matches_enumeration(k: int) -> None:
    scale = tower.tower_scale(k)
    g = tower.tower_function(scale)
    mult = np.array([tent_multiplier(scale.n, j) for j in range(scale.N)], dtype=np.int64)
    hi = scale.N - 2 * scale.n
    for shift in sorted({1, scale.n, 2 * scale.n, hi}):
        if not (1 <= shift <= hi):
            continue
        diff = np.abs(mult - np.roll(mult, shift))
        for x in (
            Fraction(0),
            Fraction(1),
            Fraction(scale.n, 2),
            Fraction(scale.n),
            Fraction(2 * scale.n),
            Fraction(3, 2),
        ):
            got = tower.measure_abs_at_least(g, shift, x)
            if x <= 0:
                assert got == Fraction(1)
            else:
                count = int(np.count_nonzero(diff * x.denominator >= x.numerator))
                assert got == Fraction(count, scale.N), (shift, x)
        assert tower.support_measure(g, shift) == Fraction(
            int(np.count_nonzero(diff != 0)), scale.N
        )


@pytest.mark.parametrize("k", list(range(3, 16)))
def test_support_measure_bound_at_double_shift(k: int) -> None:
    scale = tower.tower_scale(k)
    g = tower.tower_function(scale)
    measure = tower.support_measure(g, 2 * scale.n)
    assert measure == Fraction(2 * (2 * scale.n - 1), scale.N)
    assert measure <= Fraction(4, scale.m)


def test_exceedance_exact_formula_and_reference() -> None:
    for k in (4, 8, 10, 14):
        scale = tower.tower_scale(k)
        bound = tower.exceedance_exact(scale)
        g = tower.tower_function(scale)
        p = tower.measure_abs_at_least(g, 2 * scale.n, Fraction(scale.n, 2))
        assert bound.p == p
        pf = float(p)
        expected = scale.m * pf * (1.0 - pf) ** (scale.m - 1)
        assert bound.value == pytest.approx(expected, rel=1e-12)
        assert bound.reference == pytest.approx(2.0 / math.e**4, rel=1e-15)
        assert bound.exceeds
    # k = 10 matches the hand-computed constant
    assert tower.exceedance_exact(tower.tower_scale(10)).value == pytest.approx(
        0.26220074523230547, rel=1e-12
    )


# ---------------------------------------------------------------------------
# column-model Monte Carlo
# ---------------------------------------------------------------------------


def test_simulation_is_deterministic_and_matches_exact_variance() -> None:
    scale = tower.tower_scale(8)
    spec = tower.ColumnSimSpec(scale=scale, n1=2 * scale.n, n2=scale.m, replications=4000, master_seed=11)
    run1 = tower.simulate_counterexample(spec)
    run2 = tower.simulate_counterexample(spec)
    np.testing.assert_array_equal(run1.samples, run2.samples)
    exact = float(tower.exact_stat_variance(scale, spec.n1, spec.n2))
    emp = float(np.mean(run1.samples**2))
    se = float(np.std(run1.samples**2, ddof=1)) / math.sqrt(spec.replications)
    assert abs(emp - exact) < 5 * se


def test_simulation_chunking_does_not_change_draws() -> None:
    # identical level draws regardless of how replications are batched:
    # per-replication stat depends only on (master_seed, k, replication)
    scale = tower.tower_scale(6)
    a = tower.simulate_counterexample(
        tower.ColumnSimSpec(scale=scale, n1=scale.n, n2=16, replications=5, master_seed=3)
    ).samples
    b = tower.simulate_counterexample(
        tower.ColumnSimSpec(scale=scale, n1=scale.n, n2=16, replications=3, master_seed=3)
    ).samples
    np.testing.assert_array_equal(a[:3], b)


def test_exact_stat_variance_closed_form() -> None:
    scale = tower.tower_scale(7)
    for n1 in (1, scale.n, 2 * scale.n):
        expected = Fraction(tower.sq_sum(scale, n1), scale.n**2 * n1)
        assert tower.exact_stat_variance(scale, n1, 999) == expected


def test_spec_validation() -> None:
    scale = tower.tower_scale(5)
    with pytest.raises(SurrogateValidityError):
        tower.ColumnSimSpec(scale=scale, n1=scale.N, n2=4, replications=10, master_seed=0)
    with pytest.raises(InvalidParameterError):
        tower.ColumnSimSpec(scale=scale, n1=1, n2=0, replications=10, master_seed=0)


# ---------------------------------------------------------------------------
# the multi-level schedule
# ---------------------------------------------------------------------------


def test_schedule_three_levels_certified_and_reverified() -> None:
    schedule = tower.schedule_scales(3)
    assert len(schedule.steps) == 3
    assert schedule.indices[0] == 3
    assert schedule.indices[1] > schedule.indices[0]
    assert schedule.indices[2] > schedule.indices[1]
    assert all(step.holds() for step in schedule.steps)
    assert tower.verify_schedule(schedule)


def test_schedule_tampering_is_detected() -> None:
    schedule = tower.schedule_scales(2)
    step = schedule.steps[1]
    bad_checks = tuple(
        (kk, value + Fraction(1, 10**12), threshold) for kk, value, threshold in step.l2_checks
    )
    tampered = tower.ScaleSchedule(
        steps=(
            schedule.steps[0],
            tower.ScheduleStep(
                level=step.level,
                k=step.k,
                sup_lhs=step.sup_lhs,
                sup_rhs=step.sup_rhs,
                l2_checks=bad_checks,
            ),
        )
    )
    assert not tower.verify_schedule(tampered)


def test_multi_scale_l2_bounds_hold() -> None:
    schedule = tower.schedule_scales(3)
    for level in (1, 2, 3):
        row = tower.multi_scale_l2_bound(schedule, level)
        assert row["holds"]
        assert row["bound_sq"] <= Fraction(4, 4**level)
        assert row["threshold"] == pytest.approx(2.0 * 2.0**-level)


def test_scale_l1_norms_decay_geometrically() -> None:
    schedule = tower.schedule_scales(3)
    rows = tower.scale_l1_norms(schedule)
    assert [r["holds"] for r in rows] == [True, True, True]
    norms = [r["l1_norm"] for r in rows]
    assert norms[0] > norms[1] > norms[2]


def test_large_scale_guard_for_enumeration_paths() -> None:
    # shifts below 2n at very large scales would need a level array beyond
    # the cap; the closed-form path (shift >= 2n) still works
    k = 29
    scale = tower.tower_scale(k)
    g = tower.tower_function(scale)
    assert tower.measure_abs_at_least(g, 2 * scale.n, Fraction(scale.n, 2)) > 0
    with pytest.raises(ResourceLimitError):
        tower.measure_abs_at_least(g, 1, Fraction(1))
