"""Martingale/coboundary splitting of stationary linear fields on the plane lattice.

A linear field built from scale-indexed noises can be rewritten as the sum of

* a two-parameter martingale-difference part (all coefficient mass collapsed
  onto the origin of each scale),
* two single-direction coboundary corrections (telescoping along rows and
  along columns), and
* one mixed coboundary correction (telescoping along both directions).

Everything in this module is exact: coefficients are stored as
:class:`fractions.Fraction` values, and the splitting is validated by
recombining the four parts and comparing atom-by-atom with the original
field's coefficient form.  The module also provides certified evaluations of
the martingale part's second moment, growth profiles for shifted coboundary
differences, and two projective summability diagnostics (an absolute-moment
tail based on conditional projections, and a weighted-norm series whose
convergence is a classical sufficient condition for the central limit
behaviour of partial sums).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.special import zeta as _vec_zeta

from .errors import InvalidParameterError, UnsupportedFamilyError
from .fields import CoefficientField, TruncationSpec, auto_truncation
from .noise import LawFamily
from .series import csum, power_tail_upper

Shift = tuple[int, int]
AtomMap = Mapping[int, Mapping[Shift, Fraction]]

__all__ = [
    "LinearForm",
    "DecompositionTerms",
    "MartingaleNorm",
    "decompose_superlinear",
    "decompose_diagonal",
    "recombine",
    "field_form",
    "m_norm_l2",
    "coboundary_growth",
    "hannan_term",
    "hannan_partial_sums",
    "l1_projective_tail",
    "l1_projective_partial",
]


def _frozen_atoms(atoms: AtomMap) -> dict[int, dict[Shift, Fraction]]:
    """Deep-copy an atom mapping, dropping exact zeros and empty scales."""
    out: dict[int, dict[Shift, Fraction]] = {}
    for scale, shifts in atoms.items():
        kept = {
            (int(di), int(dj)): Fraction(coeff)
            for (di, dj), coeff in shifts.items()
            if coeff != 0
        }
        if kept:
            out[int(scale)] = kept
    return out


@dataclass(frozen=True)
class LinearForm:
    """Finite linear combination ``sum_k sum_shift coeff * noise_k(site + shift)``.

    ``atoms[scale][(di, dj)]`` is the exact rational coefficient attached to
    the scale-``scale`` noise evaluated ``(di, dj)`` away from the evaluation
    site.  Negative components point into the "past" quadrant used by the
    conditioning filtration; positive components look forward.
    """

    atoms: dict[int, dict[Shift, Fraction]]

    @staticmethod
    def from_atoms(atoms: AtomMap) -> "LinearForm":
        return LinearForm(_frozen_atoms(atoms))

    def coefficient(self, scale: int, shift: Shift) -> Fraction:
        return self.atoms.get(scale, {}).get(shift, Fraction(0))

    def scales(self) -> tuple[int, ...]:
        return tuple(sorted(self.atoms))

    def atom_count(self) -> int:
        return sum(len(shifts) for shifts in self.atoms.values())

    def shifted(self, di: int, dj: int) -> "LinearForm":
        """Translate every atom by ``(di, dj)`` (the lattice shift operator)."""
        moved = {
            scale: {(a + di, b + dj): coeff for (a, b), coeff in shifts.items()}
            for scale, shifts in self.atoms.items()
        }
        return LinearForm(moved)

    def _merge(self, other: "LinearForm", sign: int) -> "LinearForm":
        merged: dict[int, dict[Shift, Fraction]] = {
            scale: dict(shifts) for scale, shifts in self.atoms.items()
        }
        for scale, shifts in other.atoms.items():
            dest = merged.setdefault(scale, {})
            for shift, coeff in shifts.items():
                new = dest.get(shift, Fraction(0)) + sign * coeff
                if new == 0:
                    dest.pop(shift, None)
                else:
                    dest[shift] = new
        return LinearForm({s: sh for s, sh in merged.items() if sh})

    def plus(self, other: "LinearForm") -> "LinearForm":
        return self._merge(other, 1)

    def minus(self, other: "LinearForm") -> "LinearForm":
        return self._merge(other, -1)

    def max_abs_coefficient_diff(self, other: "LinearForm") -> Fraction:
        """Largest absolute coefficient of ``self - other`` (exact)."""
        diff = self.minus(other)
        worst = Fraction(0)
        for shifts in diff.atoms.values():
            for coeff in shifts.values():
                if abs(coeff) > worst:
                    worst = abs(coeff)
        return worst

    def in_origin_cone(self) -> bool:
        """True when every atom sits at a shift with both components <= 0."""
        return all(
            di <= 0 and dj <= 0
            for shifts in self.atoms.values()
            for (di, dj) in shifts
        )

    def max_shift_radius(self) -> int:
        radius = 0
        for shifts in self.atoms.values():
            for (di, dj) in shifts:
                radius = max(radius, abs(di), abs(dj))
        return radius

    def float_atoms(self) -> dict[int, dict[Shift, float]]:
        """Float rendering of the atoms, for the simulation weight builders."""
        return {
            scale: {shift: float(coeff) for shift, coeff in shifts.items()}
            for scale, shifts in self.atoms.items()
        }

    def second_moment(self, laws: LawFamily) -> float:
        """``E[form^2]`` under independent noises (sum of per-atom variances)."""
        contributions: list[float] = []
        for scale, shifts in sorted(self.atoms.items()):
            l2sq = laws.moments_for_scale(scale).l2sq
            contributions.append(
                l2sq * csum(float(coeff) ** 2 for coeff in shifts.values())
            )
        return csum(contributions)


@dataclass(frozen=True)
class DecompositionTerms:
    """The four exact parts of a truncated splitting.

    ``martingale`` keeps all of its atoms at the per-scale origin;
    ``row_coboundary`` enters the field as ``g - g shifted by (1, 0)``,
    ``column_coboundary`` as ``g - g shifted by (0, 1)``, and
    ``mixed_coboundary`` through the double difference over both directions.
    ``scale_cutoff``/``ladder_cutoff`` record the truncation box the terms
    were built on.
    """

    family: str
    alpha: float | None
    laws: LawFamily
    scales: tuple[int, ...]
    scale_cutoff: int
    ladder_cutoff: int
    martingale: LinearForm
    row_coboundary: LinearForm
    column_coboundary: LinearForm
    mixed_coboundary: LinearForm


def recombine(terms: DecompositionTerms) -> LinearForm:
    """Rebuild the field form ``m + (I-T10)g1 + (I-T01)g2 + (I-T10)(I-T01)g3``.

    ``T10``/``T01`` translate atoms by ``(1, 0)`` / ``(0, 1)``.  The result is
    exact; comparing it with :func:`field_form` is the correctness check for
    the whole splitting.
    """
    g1 = terms.row_coboundary
    g2 = terms.column_coboundary
    g3 = terms.mixed_coboundary
    out = terms.martingale
    out = out.plus(g1.minus(g1.shifted(1, 0)))
    out = out.plus(g2.minus(g2.shifted(0, 1)))
    mixed = g3.minus(g3.shifted(1, 0)).minus(g3.shifted(0, 1)).plus(g3.shifted(1, 1))
    return out.plus(mixed)


def field_form(field: CoefficientField, trunc: TruncationSpec) -> LinearForm:
    """Exact atom rendering of a coefficient field on the truncation box.

    Scale ``k`` places coefficient ``a_k(u, v)`` at shift ``(-u, -v)`` — the
    site ``(u, v)`` steps into the past in both directions.
    """
    atoms: dict[int, dict[Shift, Fraction]] = {}
    first = field.laws.first_admissible_k()
    for scale in range(first, trunc.K + 1):
        grid = field.lag_grid(scale, trunc.M)
        shifts: dict[Shift, Fraction] = {}
        for u in range(grid.shape[0]):
            for v in range(grid.shape[1]):
                value = float(grid[u, v])
                if value != 0.0:
                    shifts[(-u, -v)] = Fraction(value)
        if shifts:
            atoms[scale] = shifts
    return LinearForm(atoms)


def decompose_superlinear(
    field: CoefficientField, trunc: TruncationSpec | None = None
) -> DecompositionTerms:
    """Exact splitting of a summable-coefficient field on a truncation box.

    For each scale the suffix table ``A(d1, d2) = sum_{u >= d1, v >= d2}
    a(u, v)`` (over the retained lag box) yields the four parts directly:

    * martingale coefficient ``A(0, 0)`` at the origin,
    * row part ``A(d, 0)`` at shift ``(-d, 0)`` for ``d >= 1``,
    * column part ``A(0, d)`` at shift ``(0, -d)``,
    * mixed part ``A(d1, d2)`` at ``(-d1, -d2)`` for ``d1, d2 >= 1``.

    The recombination identity then telescopes back to ``a(u, v)`` exactly
    (four-corner difference of the suffix table), so
    ``recombine(result) == field_form(field, trunc)`` with zero error.

    ``trunc`` defaults to :func:`orthofield.fields.auto_truncation`, which is
    only available for the built-in summable family; custom fields must pass
    an explicit box.
    """
    if trunc is None:
        trunc = auto_truncation(field)
    cutoff_m = trunc.M
    first = field.laws.first_admissible_k()
    scales = tuple(range(first, trunc.K + 1))

    m_atoms: dict[int, dict[Shift, Fraction]] = {}
    g1_atoms: dict[int, dict[Shift, Fraction]] = {}
    g2_atoms: dict[int, dict[Shift, Fraction]] = {}
    g3_atoms: dict[int, dict[Shift, Fraction]] = {}

    for scale in scales:
        grid = field.lag_grid(scale, cutoff_m)
        size = cutoff_m + 1
        # Suffix-sum table with a zero sentinel row/column at index size.
        table: list[list[Fraction]] = [
            [Fraction(0)] * (size + 1) for _ in range(size + 1)
        ]
        for d1 in range(size - 1, -1, -1):
            row = table[d1]
            below = table[d1 + 1]
            for d2 in range(size - 1, -1, -1):
                row[d2] = (
                    Fraction(float(grid[d1, d2]))
                    + below[d2]
                    + row[d2 + 1]
                    - below[d2 + 1]
                )
        if table[0][0] != 0:
            m_atoms[scale] = {(0, 0): table[0][0]}
        g1_row = {(-d, 0): table[d][0] for d in range(1, size) if table[d][0] != 0}
        if g1_row:
            g1_atoms[scale] = g1_row
        g2_row = {(0, -d): table[0][d] for d in range(1, size) if table[0][d] != 0}
        if g2_row:
            g2_atoms[scale] = g2_row
        g3_row = {
            (-d1, -d2): table[d1][d2]
            for d1 in range(1, size)
            for d2 in range(1, size)
            if table[d1][d2] != 0
        }
        if g3_row:
            g3_atoms[scale] = g3_row

    return DecompositionTerms(
        family=field.name,
        alpha=field.alpha,
        laws=field.laws,
        scales=scales,
        scale_cutoff=trunc.K,
        ladder_cutoff=cutoff_m,
        martingale=LinearForm(m_atoms),
        row_coboundary=LinearForm(g1_atoms),
        column_coboundary=LinearForm(g2_atoms),
        mixed_coboundary=LinearForm(g3_atoms),
    )


def decompose_diagonal(
    scale_cutoff: int = 32, ladder_cutoff: int = 64
) -> DecompositionTerms:
    """Exact truncated splitting for the diagonal-atom showcase family.

    The ideal construction prescribes the four parts directly (rather than
    deriving them from a summable coefficient field): per scale ``k >= 2``,

    * martingale atom ``1/k^2`` at ``(-k, -k)``,
    * row ladder ``1/d^2`` at ``(-d, 0)`` for ``d = k .. k + ladder_cutoff``,
    * column ladder mirrored onto the second axis,
    * mixed atom ``1/k`` at the origin.

    The recombined field is *defined* as the telescoped sum of these parts.
    It is not measurable with respect to the past filtration alone (the mixed
    part's double difference places atoms at forward shifts), and the ideal
    ``ladder_cutoff = infinity`` field has infinite variance, so simulation
    always works with this finite truncation.
    """
    if scale_cutoff < 2:
        raise InvalidParameterError(
            f"diagonal splitting needs scale_cutoff >= 2, got {scale_cutoff!r}"
        )
    if ladder_cutoff < 0:
        raise InvalidParameterError(
            f"ladder_cutoff must be >= 0, got {ladder_cutoff!r}"
        )
    laws = LawFamily.diagonal()
    first = laws.first_admissible_k()
    scales = tuple(range(first, scale_cutoff + 1))
    m_atoms: dict[int, dict[Shift, Fraction]] = {}
    g1_atoms: dict[int, dict[Shift, Fraction]] = {}
    g2_atoms: dict[int, dict[Shift, Fraction]] = {}
    g3_atoms: dict[int, dict[Shift, Fraction]] = {}
    for k in scales:
        m_atoms[k] = {(-k, -k): Fraction(1, k * k)}
        ladder = {d: Fraction(1, d * d) for d in range(k, k + ladder_cutoff + 1)}
        g1_atoms[k] = {(-d, 0): c for d, c in ladder.items()}
        g2_atoms[k] = {(0, -d): c for d, c in ladder.items()}
        g3_atoms[k] = {(0, 0): Fraction(1, k)}
    return DecompositionTerms(
        family="diagonal",
        alpha=None,
        laws=laws,
        scales=scales,
        scale_cutoff=scale_cutoff,
        ladder_cutoff=ladder_cutoff,
        martingale=LinearForm(m_atoms),
        row_coboundary=LinearForm(g1_atoms),
        column_coboundary=LinearForm(g2_atoms),
        mixed_coboundary=LinearForm(g3_atoms),
    )


# ---------------------------------------------------------------------------
# Martingale second moment.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleNorm:
    """Certified evaluation of the martingale part's standard deviation.

    ``retained_sq`` is the exact second moment of the truncated martingale
    part (the quantity matched by simulations of the truncated field).
    ``scale_tail_sq`` bounds the mass of the discarded scales of the ideal
    family, and ``ladder_deficit_sq`` bounds how much the retained scales'
    squared coefficients fall short of their ideal (un-truncated ladder)
    values.  ``value`` is the square root of ``retained_sq``; ``upper`` adds
    the certified remainders before taking the root.
    """

    value: float
    retained_sq: float
    scale_tail_sq: float
    ladder_deficit_sq: float

    @property
    def upper(self) -> float:
        return math.sqrt(self.retained_sq + self.scale_tail_sq + self.ladder_deficit_sq)


def m_norm_l2(terms: DecompositionTerms) -> MartingaleNorm:
    """Second-moment summary for the martingale part of a splitting."""
    retained_sq = terms.martingale.second_moment(terms.laws)
    cutoff_k = terms.scale_cutoff
    cutoff_m = terms.ladder_cutoff
    if terms.family == "diagonal":
        # Ideal coefficient at scale k is exactly 1/k^2 with weight k^2, so the
        # discarded-scale mass is sum_{k > K} k^{-2}; no ladder dependence.
        scale_tail_sq = power_tail_upper(2.0, cutoff_k + 1.0)
        ladder_deficit_sq = 0.0
    elif terms.family == "superlinear":
        alpha = float(terms.alpha)  # type: ignore[arg-type]
        # Ideal martingale coefficient at scale k is the full positive-quadrant
        # coefficient sum Q(k) <= k^(1-a) + k^(2-a)/(a-2); multiplied by the
        # scale weight k^(2a-5)/log^2(k+1) and squared this is dominated by
        # [2 k^-3 + (2/(a-2)^2) k^-1] / log^2(k+1).
        scale_tail_sq = 2.0 * power_tail_upper(3.0, cutoff_k + 1.0) / math.log(
            cutoff_k + 2.0
        ) ** 2 + (2.0 / (alpha - 2.0) ** 2) / math.log(cutoff_k)
        # Retained scales: the ladder box misses at most
        # delta_k = 2 * sum_{x > k+M} zeta(alpha, x) of coefficient mass, and
        # c_ideal^2 - c_kept^2 <= delta_k * 2 * Q(k).
        deficits: list[float] = []
        for k in terms.scales:
            x0 = k + cutoff_m + 1.0
            delta = 2.0 * (
                power_tail_upper(alpha, x0)
                + power_tail_upper(alpha - 1.0, x0) / (alpha - 1.0)
            )
            q_upper = power_tail_upper(alpha - 1.0, float(k))
            weight = terms.laws.moments_for_scale(k).l2sq
            deficits.append(weight * delta * 2.0 * q_upper)
        ladder_deficit_sq = csum(deficits)
    else:
        raise UnsupportedFamilyError(
            f"no certified martingale tail for family {terms.family!r}"
        )
    return MartingaleNorm(
        value=math.sqrt(retained_sq),
        retained_sq=retained_sq,
        scale_tail_sq=scale_tail_sq,
        ladder_deficit_sq=ladder_deficit_sq,
    )


# ---------------------------------------------------------------------------
# Shifted-coboundary growth profile.
# ---------------------------------------------------------------------------


def _triangle_tail_vec(alpha: float, xs: np.ndarray) -> np.ndarray:
    """Vectorized ``sum_{t >= 0} (t + 1) (x + t)^(-alpha)`` for ``alpha > 2``."""
    return _vec_zeta(alpha - 1.0, xs) + (1.0 - xs) * _vec_zeta(alpha, xs)


def coboundary_growth(
    subject: DecompositionTerms | str,
    axis: str,
    shift: int,
    *,
    scale_cutoff: int | None = None,
    ladder_cutoff: int | None = None,
    alpha: float | None = None,
) -> float:
    """Second moment of a single-direction coboundary minus its ``shift``-fold translate.

    Evaluates ``E[(g - g shifted by shift)^2]`` for the row part (``axis="U"``,
    translation along the first coordinate) or the column part (``axis="V"``).
    Both built-in families have mirror-symmetric row/column ladders, so the two
    axes give identical values.

    The evaluation works at the family level on the ideal per-scale ladders,
    truncated to ``scale_cutoff`` scales and ``ladder_cutoff`` ladder steps:

    * diagonal family: ladder height ``1/x^2`` on ``x = k .. k + ladder_cutoff``
      with scale weight ``k^2``;
    * summable family with exponent ``alpha``: ladder height ``Q(x) =
      sum_{t >= 0} (t+1) (x+t)^(-alpha)`` on ``x = k+1 .. k + ladder_cutoff``
      with scale weight ``k^(2 alpha - 5) / log^2(k+1)``.

    Per scale the value is ``2 * (S - X(shift))`` with ``S`` the ladder's sum
    of squares and ``X`` its lag-``shift`` autocovariance; both come from two
    shared cumulative tables, so evaluating one shift costs
    ``O(scale_cutoff + ladder_cutoff + shift)``.

    Passing a :class:`DecompositionTerms` uses its family, exponent, and
    cutoffs (overridable by keyword).  Materialized atom dictionaries are
    deliberately not consumed: the profile is typically wanted at cutoffs far
    past what explicit dictionaries can hold.
    """
    if isinstance(subject, DecompositionTerms):
        family = subject.family
        alpha = subject.alpha if alpha is None else alpha
        scale_cutoff = subject.scale_cutoff if scale_cutoff is None else scale_cutoff
        ladder_cutoff = subject.ladder_cutoff if ladder_cutoff is None else ladder_cutoff
    else:
        family = subject
    if axis not in ("U", "V"):
        raise InvalidParameterError(f"axis must be 'U' or 'V', got {axis!r}")
    if scale_cutoff is None or ladder_cutoff is None:
        raise InvalidParameterError(
            "scale_cutoff and ladder_cutoff are required when no terms are given"
        )
    if shift < 1:
        raise InvalidParameterError(f"shift must be >= 1, got {shift!r}")
    if scale_cutoff < 2 or ladder_cutoff < 1:
        raise InvalidParameterError(
            "need scale_cutoff >= 2 and ladder_cutoff >= 1, got "
            f"{scale_cutoff!r}, {ladder_cutoff!r}"
        )

    ks = np.arange(2, scale_cutoff + 1, dtype=np.float64)
    ks_int = np.arange(2, scale_cutoff + 1, dtype=np.int64)
    x_max = scale_cutoff + ladder_cutoff + shift
    xs = np.arange(1, x_max + 1, dtype=np.float64)
    if family == "diagonal":
        heights = xs**-2.0
        lo = ks_int
        hi = ks_int + ladder_cutoff
        weights = ks**2
    elif family == "superlinear":
        if alpha is None or alpha <= 4.0:
            raise InvalidParameterError(
                f"summable family needs exponent alpha > 4, got {alpha!r}"
            )
        heights = _triangle_tail_vec(float(alpha), xs)
        lo = ks_int + 1
        hi = ks_int + ladder_cutoff
        weights = ks ** (2.0 * alpha - 5.0) / np.log(ks + 1.0) ** 2
    else:
        raise UnsupportedFamilyError(
            f"no ideal ladder profile for family {family!r}"
        )

    # Per scale the ladder contributes 2 * [S - X] with S the sum of squares
    # over x = lo..hi and X the lag-`shift` cross sum over x = lo..hi-shift.
    # Writing S - X = sum_{x=lo}^{hi-shift} h(x)(h(x) - h(x+shift))
    #               + sum_{x=hi-shift+1}^{hi} h(x)^2
    # makes every piece a difference of suffix sums of NONNEGATIVE terms
    # anchored at the tail, so small per-scale values at large k are never
    # extracted from a large shared prefix (which would amplify rounding by
    # the k-growing scale weights into garbage).
    drop = heights[: x_max - shift] * (heights[: x_max - shift] - heights[shift:])
    # suffix_drop[i] = sum_{x >= i+1} drop(x), index shifted by one so that
    # suffix[x0 - 1] reads "from x0 upward"; same for the squares.
    suffix_drop = np.concatenate([np.cumsum(drop[::-1])[::-1], [0.0]])
    sq = heights * heights
    suffix_sq = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    # mid - 1 <= max(hi - shift, lo - 1) <= x_max - shift, so every gather
    # below stays inside the suffix tables.
    mid = np.maximum(hi - shift + 1, lo)
    per_scale = (
        suffix_drop[lo - 1]
        - suffix_drop[mid - 1]
        + suffix_sq[mid - 1]
        - suffix_sq[hi]
    )
    return float(2.0 * np.dot(weights, per_scale))


# ---------------------------------------------------------------------------
# Weighted-norm summability diagnostic (superlinear family).
# ---------------------------------------------------------------------------


def _require_superlinear(field: CoefficientField) -> float:
    if field.name != "superlinear" or field.alpha is None:
        raise UnsupportedFamilyError(
            "this diagnostic is defined for the summable coefficient family only, "
            f"got {field.name!r}"
        )
    return float(field.alpha)


def hannan_term(
    field: CoefficientField, i: int, j: int, *, scale_cutoff: int | None = None
) -> float:
    """One term of the classical weighted projection-norm series.

    The term at lag ``(i, j)`` is ``sqrt(sum_k w_k * a_k(i, j)^2)`` with
    ``w_k`` the scale's second moment — the plane-norm of the conditional
    projection of the shifted field onto a single noise coordinate.  Only the
    anti-diagonal ``s = i + j`` matters because the coefficients depend on the
    lag through ``k + i + j``.

    The scale sum is truncated at ``scale_cutoff`` (default
    ``max(4096, 32 (s + 1))``, which keeps the discarded mass a small fraction
    of the total), and since every summand is positive the returned value is a
    certified lower bound of the ideal term.
    """
    alpha = _require_superlinear(field)
    if i < 0 or j < 0:
        raise InvalidParameterError(f"lags must be >= 0, got ({i!r}, {j!r})")
    s = i + j
    if scale_cutoff is None:
        scale_cutoff = max(4096, 32 * (s + 1))
    ks = np.arange(2, scale_cutoff + 1, dtype=np.float64)
    summands = (
        ks ** (2.0 * alpha - 5.0)
        / np.log(ks + 1.0) ** 2
        * (ks + float(s)) ** (-2.0 * alpha)
    )
    return float(math.sqrt(np.sum(summands)))


def hannan_partial_sums(
    field: CoefficientField, cutoffs: Sequence[int]
) -> dict[int, float]:
    """Partial sums ``sum_{i+j <= D}`` of the weighted projection-norm series.

    Returns ``{D: partial}`` for each requested cutoff.  Terms are constant on
    anti-diagonals, so the partial sum collapses to
    ``sum_{s <= D} (s + 1) * term(s)``.  Every rendered value is a certified
    lower bound of the ideal partial sum (positive terms, truncated scale
    sums), which is the safe direction for divergence evidence.
    """
    alpha = _require_superlinear(field)
    if not cutoffs:
        return {}
    ordered = sorted(set(int(d) for d in cutoffs))
    if ordered[0] < 0:
        raise InvalidParameterError(f"cutoffs must be >= 0, got {cutoffs!r}")
    out: dict[int, float] = {}
    running: list[float] = []
    next_idx = 0
    for s in range(ordered[-1] + 1):
        scale_cutoff = max(4096, 32 * (s + 1))
        ks = np.arange(2, scale_cutoff + 1, dtype=np.float64)
        term_sq = np.sum(
            ks ** (2.0 * alpha - 5.0)
            / np.log(ks + 1.0) ** 2
            * (ks + float(s)) ** (-2.0 * alpha)
        )
        running.append((s + 1) * math.sqrt(float(term_sq)))
        while next_idx < len(ordered) and ordered[next_idx] == s:
            out[ordered[next_idx]] = csum(running)
            next_idx += 1
    return out


# ---------------------------------------------------------------------------
# Absolute-moment projective tail.
# ---------------------------------------------------------------------------


def _box_band_counts(i0: int, j0: int) -> np.ndarray:
    """``counts[s] = #{(i, j) in [0, i0] x [0, j0] : i + j = s}``."""
    s_vals = np.arange(i0 + j0 + 1, dtype=np.int64)
    return np.minimum.reduce(
        [s_vals + 1, np.full_like(s_vals, i0 + 1), np.full_like(s_vals, j0 + 1),
         i0 + j0 - s_vals + 1]
    )


def l1_projective_tail(
    subject: CoefficientField | DecompositionTerms,
    cutoff: tuple[int, int] = (0, 0),
    *,
    scale_cutoff: int = 16384,
) -> float:
    """Certified bound on the conditional-projection absolute-moment series
    outside a lag box.

    The diagnostic series is ``sum_{i, j >= 0} E|P(shift by (i,j) field)|``
    with ``P`` the projection onto the past filtration at the origin.  This
    function bounds the part with ``(i, j)`` outside ``[0, cutoff[0]] x
    [0, cutoff[1]]``.

    * Summable family (exponent ``alpha > 4``): the projection of the
      ``(i, j)``-shifted field keeps the coefficients ``a_k(u, v)`` with
      ``u >= i, v >= j``, so its absolute moment is at most ``l1_k`` times the
      coefficient mass ``sum over the kept quadrant``.  Summing over all
      ``(i, j)`` weights the coefficient at distance ``w`` from the scale by
      the tetrahedral count ``(w+1)(w+2)(w+3)/6``, giving the per-scale total
      ``R(k)`` in closed form through four shifted-zeta evaluations.  The
      returned value is ``sum_{k <= K0} l1_k (R(k) - box_k) + tail(K0)`` where
      ``box_k`` removes the in-box lags and ``tail(K0)`` certifies the
      discarded scales via ``R(k) <= zeta(alpha - 3, k) / 6``.
    * Diagonal family: the series has no finite majorant (the origin-atom
      slice alone already diverges like ``sum 1/log^2 k``), so the tail is
      reported as ``math.inf``.
    * Anything else: a splitting whose four parts are all empty (the zero
      field) has tail exactly ``0.0``; otherwise no certified bound exists and
      :class:`UnsupportedFamilyError` is raised.
    """
    i0, j0 = int(cutoff[0]), int(cutoff[1])
    if i0 < 0 or j0 < 0:
        raise InvalidParameterError(f"cutoff box must be >= (0, 0), got {cutoff!r}")

    if isinstance(subject, DecompositionTerms):
        if subject.family == "diagonal":
            return math.inf
        if (
            subject.martingale.atom_count() == 0
            and subject.row_coboundary.atom_count() == 0
            and subject.column_coboundary.atom_count() == 0
            and subject.mixed_coboundary.atom_count() == 0
        ):
            return 0.0
        raise UnsupportedFamilyError(
            "no certified projective tail for materialized terms of family "
            f"{subject.family!r}; evaluate on the coefficient field instead"
        )

    if subject.name == "diagonal":
        return math.inf
    if subject.name == "custom":
        # Probe semantics: a custom field whose coefficients vanish on the
        # probe box (scales and lags up to 64) is taken to be the zero field
        # and has tail exactly 0; any nonzero coefficient leaves the tail
        # uncertifiable.
        first = subject.laws.first_admissible_k()
        for scale in range(first, 65):
            if np.any(subject.lag_grid(scale, 64) != 0.0):
                raise UnsupportedFamilyError(
                    "no certified projective tail for custom coefficient "
                    "fields with nonzero coefficients"
                )
        return 0.0
    alpha = _require_superlinear(subject)
    if scale_cutoff < 4:
        raise InvalidParameterError(
            f"scale_cutoff must be >= 4, got {scale_cutoff!r}"
        )

    ks = np.arange(2, scale_cutoff + 1, dtype=np.float64)
    # R(k) = sum_{w >= 0} (w+1)(w+2)(w+3)/6 * (k+w)^(-alpha), via w = x - k:
    # (x-k+1)(x-k+2)(x-k+3) expanded in x gives four shifted-zeta columns.
    c3 = -(ks**3) + 6.0 * ks**2 - 11.0 * ks + 6.0
    c2 = 3.0 * ks**2 - 12.0 * ks + 11.0
    c1 = 6.0 - 3.0 * ks
    big_r = (
        _vec_zeta(alpha - 3.0, ks)
        + c1 * _vec_zeta(alpha - 2.0, ks)
        + c2 * _vec_zeta(alpha - 1.0, ks)
        + c3 * _vec_zeta(alpha, ks)
    ) / 6.0

    counts = _box_band_counts(i0, j0).astype(np.float64)
    box = np.zeros_like(ks)
    for s in range(counts.shape[0]):
        box += counts[s] * _triangle_tail_vec(alpha, ks + float(s))

    l1_weights = ks ** (alpha - 5.0) / np.log(ks + 1.0) ** 2
    outside = big_r - box
    # Exact cancellation can leave tiny negative residues at large k.
    outside = np.maximum(outside, 0.0)
    retained = float(np.dot(l1_weights, outside))

    # Discarded scales: l1_k * R(k) <= k^(alpha-5)/log^2(k+1) * zeta(alpha-3, k)/6
    # and zeta(alpha-3, k) <= k^(4-alpha) + k^(5-alpha)/(alpha-4), so the
    # summand is at most [k^-1 /(alpha-4) + k^-2] / log^2(k+1) / ... / 6.
    k0 = float(scale_cutoff)
    k_tail = (
        power_tail_upper(2.0, k0 + 1.0) / math.log(k0 + 2.0) ** 2
        + (1.0 / (alpha - 4.0)) / math.log(k0)
    ) / 6.0
    return retained + k_tail


def l1_projective_partial(d_values: Sequence[int]) -> dict[int, float]:
    """Growth evidence for the diagonal family's projective series.

    Returns partial sums of the origin-atom slice of the series' triangle
    majorant: shells ``t = 0 .. D`` contribute ``(2t + 1) * T(max(t, 2))``
    with ``T(t) = sum_{k >= t} k^{-2} log^{-2}(k+1)`` (each of the ``2t + 1``
    lags with ``max(i, j) = t`` keeps the scale-``k`` origin atoms for all
    ``k >= t``).  These are estimates documenting unbounded growth — the
    slice behaves like ``sum 2 / log^2 t`` — not two-sided certificates.
    """
    if not d_values:
        return {}
    ordered = sorted(set(int(d) for d in d_values))
    if ordered[0] < 0:
        raise InvalidParameterError(f"shell cutoffs must be >= 0, got {d_values!r}")
    top = ordered[-1]
    k_max = max(1 << 20, 64 * (top + 2))
    ks = np.arange(2, k_max + 1, dtype=np.float64)
    weights = ks**-2.0 / np.log(ks + 1.0) ** 2
    # suffix[t] = sum_{k >= t} weights, indexed by t starting at 2.
    suffix = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
    tail_fix = power_tail_upper(2.0, k_max + 1.0) / math.log(k_max + 2.0) ** 2
    out: dict[int, float] = {}
    running = 0.0
    next_idx = 0
    for t in range(top + 1):
        t_eff = max(t, 2)
        if t_eff <= k_max:
            t_sum = float(suffix[t_eff - 2]) + tail_fix
        else:
            t_sum = power_tail_upper(2.0, float(t_eff)) / math.log(t_eff) ** 2
        running += (2 * t + 1) * t_sum
        while next_idx < len(ordered) and ordered[next_idx] == t:
            out[ordered[next_idx]] = running
            next_idx += 1
    return out
