"""Noise-law moments, admissibility, and counter-keyed sampling.

Oracles
-------
* ``brute_moments``: expectation over the full three-point support,
  written before the implementation and independent of it.
* Closed-form family moments re-derived inline from the raw ``(v, p)``
  definitions.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthofield import (
    LawFamily,
    StreamKey,
    ThreePointLaw,
    law_moments,
    sample_atom,
    sample_atoms,
)
from orthofield.errors import InvalidLawError, InvalidParameterError


def brute_moments(v: float, p: float) -> tuple[float, float]:
    """E|e| and E e^2 over the support {+v, -v, 0} with masses {p, p, 1-2p}."""
    support = [(v, p), (-v, p), (0.0, 1.0 - 2.0 * p)]
    l1 = sum(abs(x) * w for x, w in support)
    l2sq = sum(x * x * w for x, w in support)
    return l1, l2sq


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


@given(
    v=st.floats(min_value=1e-6, max_value=1e12, allow_nan=False, allow_infinity=False),
    p=st.floats(min_value=1e-12, max_value=0.5, allow_nan=False, allow_infinity=False),
)
@settings(max_examples=200, deadline=None)
def test_law_moments_match_brute_enumeration(v: float, p: float) -> None:
    law = ThreePointLaw(v=v, p=p)
    m = law_moments(law)
    l1, l2sq = brute_moments(v, p)
    assert m.l1 == pytest.approx(l1, rel=1e-12, abs=0.0)
    assert m.l2sq == pytest.approx(l2sq, rel=1e-12, abs=0.0)


def test_family_moments_match_closed_forms() -> None:
    fam = LawFamily.diagonal()
    for k in range(fam.first_admissible_k(), 51):
        m = fam.moments_for_scale(k)
        lg = math.log(k + 1.0)
        # v = k^2 log^2(k+1), p = 1 / (2 k^2 log^4(k+1))
        assert m.l2sq == pytest.approx(float(k * k), rel=1e-12)
        assert m.l1 == pytest.approx(1.0 / (lg * lg), rel=1e-12)
    for alpha in (4.5, 5.0, 6.0):
        fam = LawFamily.superlinear(alpha)
        for k in range(fam.first_admissible_k(), 51):
            m = fam.moments_for_scale(k)
            lg = math.log(k + 1.0)
            # v = k^alpha, p = 1 / (2 k^5 log^2(k+1))
            assert m.l2sq == pytest.approx(float(k) ** (2 * alpha - 5) / lg**2, rel=1e-12)
            assert m.l1 == pytest.approx(float(k) ** (alpha - 5) / lg**2, rel=1e-12)


def test_first_admissible_scale_is_two_for_both_families() -> None:
    # At k = 1 both formulas give p = +inf or p > 1/2, so k = 1 is rejected.
    assert LawFamily.diagonal().first_admissible_k() == 2
    assert LawFamily.superlinear(5.0).first_admissible_k() == 2
    v1, p1 = LawFamily.diagonal().raw_parameters(1)
    assert not (0.0 < p1 <= 0.5)
    with pytest.raises(InvalidLawError):
        LawFamily.diagonal().law_for_scale(1)


def test_law_validation() -> None:
    with pytest.raises(InvalidLawError):
        ThreePointLaw(v=-1.0, p=0.1)
    with pytest.raises(InvalidLawError):
        ThreePointLaw(v=1.0, p=0.6)
    with pytest.raises(InvalidLawError):
        ThreePointLaw(v=1.0, p=0.0)
    with pytest.raises(InvalidParameterError):
        LawFamily.superlinear(4.0)


def test_custom_family_roundtrip() -> None:
    fam = LawFamily.custom(lambda k: (float(k), 0.25))
    law = fam.law_for_scale(3)
    assert (law.v, law.p) == (3.0, 0.25)
    m = fam.moments_for_scale(3)
    l1, l2sq = brute_moments(3.0, 0.25)
    assert m.l1 == pytest.approx(l1, rel=1e-15)
    assert m.l2sq == pytest.approx(l2sq, rel=1e-15)


# ---------------------------------------------------------------------------
# sampling determinism and distribution
# ---------------------------------------------------------------------------


def test_sample_atom_is_deterministic_per_key() -> None:
    law = ThreePointLaw(v=2.0, p=0.3)
    key = StreamKey(master_seed=99, scale=4, site=(-3, 7), replication=12)
    first = sample_atom(law, key)
    assert all(sample_atom(law, key) == first for _ in range(5))
    other = StreamKey(master_seed=99, scale=4, site=(-3, 8), replication=12)
    series = [sample_atom(law, StreamKey(99, 4, (-3, 8), r)) for r in range(64)]
    assert sample_atom(law, other) == series[12]


def test_sample_atoms_matches_scalar_path() -> None:
    law = ThreePointLaw(v=1.5, p=0.4)
    sites_i = np.arange(-5, 6, dtype=np.int64)
    sites_j = np.arange(0, 11, dtype=np.int64)
    batch = sample_atoms(law, 7, 3, sites_i, sites_j, 21)
    scalar = np.array(
        [
            sample_atom(law, StreamKey(7, 3, (int(i), int(j)), 21))
            for i, j in zip(sites_i, sites_j)
        ]
    )
    np.testing.assert_array_equal(batch, scalar)


def test_sample_frequencies_match_law() -> None:
    law = ThreePointLaw(v=1.0, p=0.25)
    n = 200_000
    sites_i = np.arange(n, dtype=np.int64)
    sites_j = np.zeros(n, dtype=np.int64)
    draws = sample_atoms(law, 5, 2, sites_i, sites_j, 0)
    p_plus = float(np.mean(draws == 1.0))
    p_minus = float(np.mean(draws == -1.0))
    se = math.sqrt(0.25 * 0.75 / n)
    assert abs(p_plus - 0.25) < 5 * se
    assert abs(p_minus - 0.25) < 5 * se
    assert set(np.unique(draws)) <= {-1.0, 0.0, 1.0}


def test_distinct_streams_decorrelate() -> None:
    law = ThreePointLaw(v=1.0, p=0.5)  # Rademacher: no zeros
    n = 100_000
    sites_i = np.arange(n, dtype=np.int64)
    sites_j = np.zeros(n, dtype=np.int64)
    a = sample_atoms(law, 11, 2, sites_i, sites_j, 0)
    b = sample_atoms(law, 11, 3, sites_i, sites_j, 0)
    corr = float(np.mean(a * b))
    assert abs(corr) < 5.0 / math.sqrt(n)


def test_stream_key_validation() -> None:
    with pytest.raises(InvalidParameterError):
        StreamKey(master_seed=1, scale=-1, site=(0, 0), replication=0)
