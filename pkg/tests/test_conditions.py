"""Condition diagnostics: verdict patterns, evidence wiring, bookkeeping.

Oracles
-------
* Every Monte Carlo evidence row is recomputed from first principles through
  the public sampling API (same master seed, same window, same replication
  range) and must match the report bit for bit.
* Every analytic evidence row is recomputed by calling the underlying series
  helper directly.
* A pure-noise field (single unit coefficient at the origin of the first
  scale, symmetric unit noise) is a closed-form anchor: its normalized window
  sums have variance exactly one and are asymptotically standard normal, so
  the mean absolute value must sit at sqrt(2/pi) within Monte Carlo error.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from orthofield import (
    CONDITION_SLUGS,
    CoefficientField,
    ConditionEntry,
    ConditionReport,
    EvidenceRow,
    LawFamily,
    TruncationSpec,
    auto_truncation,
    condition_report,
    decompose_diagonal,
    decompose_superlinear,
    form_window_weights,
    hannan_partial_sums,
    ks_distance_to_normal,
    l1_projective_partial,
    l1_projective_tail,
    mean_abs_ratio,
    recombine,
    sample_partial_sums,
    window_weights,
)
from orthofield.errors import (
    InsufficientReplicationsError,
    InvalidParameterError,
)

SEED = 20260816
LEVELS = (16, 32, 64)
REPS = 600
# The diagonal family's square-window mean drifts by a few percent between
# n = 32 and n = 64, which the Cauchy rule correctly flags; stabilization
# requires probing through the default top level of 128.
DIAG_LEVELS = (16, 32, 64, 128)
DIAG_REPS = 1000

RADEMACHER_LAWS = LawFamily.custom(lambda k: (1.0, 0.5))


def pure_noise_field() -> CoefficientField:
    """Unit coefficient at lag (0, 0) of scale 1 and nothing else: the field
    *is* its own noise, so every distributional property is known exactly."""
    return CoefficientField.custom(
        lambda k, u, v: 1.0 if (k, u, v) == (1, 0, 0) else 0.0,
        RADEMACHER_LAWS,
    )


PURE_NOISE_TRUNC = TruncationSpec(K=1, M=0, tail_l1=0.0, tail_l2sq=0.0)


def mc_oracle(make_weights, n1: int, n2: int, seed: int, reps: int):
    """Recompute one Monte Carlo evidence row exactly as documented: the mean
    and standard error of the absolute normalized window sums."""
    samples = sample_partial_sums(make_weights(n1, n2), seed, range(reps))
    mags = np.abs(samples)
    est = float(mags.mean())
    se = float(mags.std(ddof=1) / math.sqrt(mags.shape[0]))
    return est, se


@pytest.fixture(scope="module")
def superlinear_case():
    field = CoefficientField.superlinear(5.0)
    report = condition_report(
        field, master_seed=SEED, levels=LEVELS, replications=REPS
    )
    return field, report


@pytest.fixture(scope="module")
def diagonal_case():
    terms = decompose_diagonal(32, 64)
    report = condition_report(
        terms, master_seed=SEED, levels=DIAG_LEVELS, replications=DIAG_REPS
    )
    return terms, report


# --------------------------------------------------------------------------
# structures
# --------------------------------------------------------------------------


def test_condition_slugs_are_fixed_and_ordered():
    assert CONDITION_SLUGS == (
        "l1-projective",
        "row-liminf",
        "col-liminf",
        "iterated-liminf",
        "diagonal-limit",
        "hannan",
    )


def test_entry_rejects_unknown_verdict_and_empty_evidence():
    row = EvidenceRow(kind="window", label="w", value=1.0, stderr=0.1)
    with pytest.raises(InvalidParameterError):
        ConditionEntry(
            condition="row-liminf", verdict="maybe", evidence=(row,), note=""
        )
    with pytest.raises(InvalidParameterError):
        ConditionEntry(
            condition="row-liminf", verdict="satisfied", evidence=(), note=""
        )


def test_report_entry_lookup():
    row = EvidenceRow(kind="partial-sum", label="p", value=2.0)
    entry = ConditionEntry(
        condition="l1-projective",
        verdict="inconclusive",
        evidence=(row,),
        note="handmade",
    )
    report = ConditionReport(
        family="custom",
        levels=(2, 4),
        replications=10,
        master_seed=1,
        rel_se_cap=0.25,
        entries=(entry,),
    )
    assert report.entry("l1-projective") is entry
    assert report.verdicts() == {"l1-projective": "inconclusive"}
    with pytest.raises(KeyError):
        report.entry("hannan")


# --------------------------------------------------------------------------
# summable family: full verdict pattern and evidence values
# --------------------------------------------------------------------------


def test_superlinear_verdict_pattern(superlinear_case):
    _, report = superlinear_case
    assert report.family == "superlinear"
    assert report.levels == LEVELS
    assert report.replications == REPS
    assert report.master_seed == SEED
    assert report.rel_se_cap == 0.25
    assert [e.condition for e in report.entries] == list(CONDITION_SLUGS)
    assert report.verdicts() == {
        "l1-projective": "satisfied",
        "row-liminf": "satisfied",
        "col-liminf": "satisfied",
        "iterated-liminf": "satisfied",
        "diagonal-limit": "satisfied",
        "hannan": "violated",
    }


def test_superlinear_analytic_evidence(superlinear_case):
    field, report = superlinear_case

    proj = report.entry("l1-projective")
    boxes = ((0, 0), (4, 4), (16, 16))
    assert [r.kind for r in proj.evidence] == ["certified-bound"] * 3
    for row, box in zip(proj.evidence, boxes):
        assert row.value == l1_projective_tail(field, box)
        assert row.stderr is None and row.window is None
    values = [r.value for r in proj.evidence]
    assert values[0] > values[1] > values[2] > 0.0

    hannan = report.entry("hannan")
    cutoffs = (16, 64, 256)
    partials = hannan_partial_sums(field, cutoffs)
    assert [r.kind for r in hannan.evidence] == ["partial-sum"] * 3 + [
        "envelope"
    ]
    for row, d in zip(hannan.evidence, cutoffs):
        assert row.value == partials[d]
    sums = [r.value for r in hannan.evidence[:3]]
    assert sums[0] < sums[1] < sums[2]
    assert hannan.evidence[3].value == 3.0 ** -5.0 > 0.0


def test_superlinear_mc_rows_match_direct_resimulation(superlinear_case):
    field, report = superlinear_case
    trunc = auto_truncation(field)

    def make_weights(n1, n2):
        return window_weights(field, n1, n2, trunc)

    top = LEVELS[-1]
    expected_windows = {
        "row-liminf": [(n, 1) for n in LEVELS],
        "col-liminf": [(1, n) for n in LEVELS],
        "iterated-liminf": [(n, top) for n in LEVELS]
        + [(top, n) for n in LEVELS],
        "diagonal-limit": [(n, n) for n in LEVELS],
    }
    for condition, windows in expected_windows.items():
        entry = report.entry(condition)
        assert [r.window for r in entry.evidence] == windows
        for row in entry.evidence:
            assert row.kind == "window"
            assert row.label == f"window {row.window[0]}x{row.window[1]}"
            est, se = mc_oracle(make_weights, *row.window, SEED, REPS)
            assert row.value == est
            assert row.stderr == se
            assert row.stderr > 0.0


# --------------------------------------------------------------------------
# diagonal family: no summability entry, analytic series diverges
# --------------------------------------------------------------------------


def test_diagonal_verdict_pattern(diagonal_case):
    _, report = diagonal_case
    assert report.family == "diagonal"
    assert report.levels == DIAG_LEVELS
    assert [e.condition for e in report.entries] == list(CONDITION_SLUGS[:5])
    with pytest.raises(KeyError):
        report.entry("hannan")
    assert report.verdicts() == {
        "l1-projective": "inconclusive",
        "row-liminf": "satisfied",
        "col-liminf": "satisfied",
        "iterated-liminf": "satisfied",
        "diagonal-limit": "satisfied",
    }


def test_diagonal_projective_evidence_grows(diagonal_case):
    _, report = diagonal_case
    entry = report.entry("l1-projective")
    cutoffs = (16, 64, 256)
    partials = l1_projective_partial(cutoffs)
    assert [r.kind for r in entry.evidence] == ["partial-sum"] * 3
    for row, d in zip(entry.evidence, cutoffs):
        assert row.value == partials[d]
    values = [r.value for r in entry.evidence]
    assert values[0] < values[1] < values[2]


def test_diagonal_mc_rows_match_direct_resimulation(diagonal_case):
    terms, report = diagonal_case
    atoms = recombine(terms).float_atoms()

    def make_weights(n1, n2):
        return form_window_weights(
            atoms, terms.laws, n1, n2, family_name="diagonal"
        )

    for condition, window in (
        ("row-liminf", (DIAG_LEVELS[-1], 1)),
        ("col-liminf", (1, DIAG_LEVELS[-1])),
        ("diagonal-limit", (DIAG_LEVELS[-1], DIAG_LEVELS[-1])),
    ):
        row = report.entry(condition).evidence[-1]
        assert row.window == window
        est, se = mc_oracle(make_weights, *window, SEED, DIAG_REPS)
        assert row.value == est
        assert row.stderr == se


# --------------------------------------------------------------------------
# materialized summable terms keep the analytic entries
# --------------------------------------------------------------------------


def test_superlinear_terms_subject_keeps_analytic_entries():
    field = CoefficientField.superlinear(5.0)
    terms = decompose_superlinear(
        field, TruncationSpec.for_field(field, K=6, M=4)
    )
    report = condition_report(
        terms,
        master_seed=9,
        levels=(4, 8),
        replications=80,
        rel_se_cap=10.0,
    )
    assert report.family == "superlinear"
    assert [e.condition for e in report.entries] == list(CONDITION_SLUGS)
    assert report.entry("hannan").verdict == "violated"
    assert report.entry("l1-projective").verdict == "satisfied"
    # the analytic rows live on the ideal coefficient field, not on the
    # truncated terms, so they agree with the field-subject values
    assert report.entry("l1-projective").evidence[0].value == (
        l1_projective_tail(field, (0, 0))
    )


# --------------------------------------------------------------------------
# custom subjects
# --------------------------------------------------------------------------


def test_zero_field_certifies_everything():
    laws = LawFamily.custom(lambda k: (1.0, 0.25))
    field = CoefficientField.custom(lambda k, u, v: 0.0, laws)
    report = condition_report(
        field,
        master_seed=7,
        levels=(4, 8),
        replications=10,
        rel_se_cap=1e-12,  # never trips: zero estimates are exempt
    )
    assert report.family == "custom"
    assert [e.condition for e in report.entries] == list(CONDITION_SLUGS[:5])
    assert set(report.verdicts().values()) == {"satisfied"}
    proj = report.entry("l1-projective")
    certified = [r for r in proj.evidence if r.kind == "certified-bound"]
    assert len(certified) == 1 and certified[0].value == 0.0
    for condition in CONDITION_SLUGS[1:5]:
        for row in report.entry(condition).evidence:
            assert row.value == 0.0 and row.stderr == 0.0


def test_custom_field_without_certificate_is_inconclusive():
    report = condition_report(
        pure_noise_field(),
        master_seed=11,
        levels=(16, 32),
        replications=400,
        trunc=PURE_NOISE_TRUNC,
    )
    assert report.family == "custom"
    proj = report.entry("l1-projective")
    assert proj.verdict == "inconclusive"
    # the majorant of the single-atom field is exactly its first moment, on
    # every probe shell
    assert [r.value for r in proj.evidence] == [1.0, 1.0, 1.0]
    assert all(r.kind == "partial-sum" for r in proj.evidence)
    for condition in CONDITION_SLUGS[1:5]:
        assert report.entry(condition).verdict == "satisfied"


def test_custom_field_default_probe_box_runs():
    report = condition_report(
        pure_noise_field(),
        master_seed=5,
        levels=(2, 4),
        replications=50,
        rel_se_cap=10.0,
    )
    assert [e.condition for e in report.entries] == list(CONDITION_SLUGS[:5])


# --------------------------------------------------------------------------
# guardrails and bookkeeping
# --------------------------------------------------------------------------


def test_levels_are_sorted_and_deduplicated():
    laws = LawFamily.custom(lambda k: (1.0, 0.25))
    field = CoefficientField.custom(lambda k, u, v: 0.0, laws)
    report = condition_report(
        field, master_seed=1, levels=(8, 2, 4, 2), replications=5
    )
    assert report.levels == (2, 4, 8)
    assert [r.window for r in report.entry("row-liminf").evidence] == [
        (2, 1),
        (4, 1),
        (8, 1),
    ]


def test_insufficient_replications_raises():
    field = CoefficientField.superlinear(5.0)
    with pytest.raises(
        InsufficientReplicationsError, match="relative standard error"
    ):
        condition_report(
            field,
            master_seed=3,
            levels=(4, 8),
            replications=3,
            rel_se_cap=1e-9,
        )


def test_parameter_validation():
    laws = LawFamily.custom(lambda k: (1.0, 0.25))
    field = CoefficientField.custom(lambda k, u, v: 0.0, laws)
    for bad_levels in [(8,), (8, 8), (0, 4), (-2, 4)]:
        with pytest.raises(InvalidParameterError):
            condition_report(field, master_seed=1, levels=bad_levels)
    with pytest.raises(InvalidParameterError):
        condition_report(field, master_seed=1, levels=(2, 4), replications=1)
    for bad_cap in [0.0, -0.5]:
        with pytest.raises(InvalidParameterError):
            condition_report(
                field, master_seed=1, levels=(2, 4), rel_se_cap=bad_cap
            )


def test_report_round_trips_to_json(superlinear_case):
    _, report = superlinear_case
    payload = report.to_ordered_dict()
    decoded = json.loads(json.dumps(payload))
    assert decoded["family"] == "superlinear"
    assert decoded["levels"] == list(LEVELS)
    assert len(decoded["entries"]) == 6
    for entry in decoded["entries"]:
        assert set(entry) == {"condition", "verdict", "note", "evidence"}
        for row in entry["evidence"]:
            assert set(row) == {"kind", "label", "value", "stderr", "window"}
            if row["kind"] == "window":
                assert isinstance(row["window"], list)
                assert row["stderr"] > 0.0
            else:
                assert row["window"] is None and row["stderr"] is None


def test_reports_are_deterministic():
    kwargs = dict(
        master_seed=21,
        levels=(8, 16),
        replications=120,
        rel_se_cap=10.0,
        trunc=PURE_NOISE_TRUNC,
    )
    first = condition_report(pure_noise_field(), **kwargs)
    second = condition_report(pure_noise_field(), **kwargs)
    assert first.to_ordered_dict() == second.to_ordered_dict()


# --------------------------------------------------------------------------
# pure-noise anchor: the Monte Carlo pipeline hits the known limit
# --------------------------------------------------------------------------


def test_pure_noise_window_sums_are_standard_normal():
    weights = window_weights(pure_noise_field(), 256, 256, PURE_NOISE_TRUNC)
    samples = sample_partial_sums(weights, SEED, range(4000))
    # 256 x 256 unit-variance sites, normalization sqrt(n1 * n2): the
    # normalized sum has variance exactly 1
    ratio = mean_abs_ratio(samples, 1.0)
    assert ratio.within(3.0)
    assert ks_distance_to_normal(samples, 1.0).statistic < 0.05
