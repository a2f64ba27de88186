"""Lattice moving-average fields and their window-summed partial sums.

A field here is a superposition over scales ``k`` of moving averages of
independent three-point noise: ``f = sum_k sum_{u,v >= 0} a(k,u,v)
U^{-u} V^{-v} e_k``.  Its partial sum over a rectangular window collects,
for every lattice site, the total coefficient weight that multiplies the
atom at that site; those window weights are computed once per window by
2-D prefix sums and then reused across Monte Carlo replications, so a
replication only ever touches sites with nonzero weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    InvalidParameterError,
    ResourceLimitError,
    UnsupportedFamilyError,
)
from .noise import LawFamily, stream_root
from .series import box_diagonal_counts, csum, power_tail_upper

__all__ = [
    "CoefficientField",
    "TruncationSpec",
    "ScaleWeights",
    "WindowWeights",
    "PartialSumSample",
    "tail_bound",
    "auto_truncation",
    "window_weights",
    "form_window_weights",
    "exact_second_moment",
    "sample_partial_sum",
    "sample_partial_sums",
    "export_weights_csv",
]

_DEFAULT_CELL_CAP = 1 << 26  # max total weight-lattice cells per window build


@dataclass(frozen=True)
class CoefficientField:
    """Nonnegative moving-average coefficients ``a(k, u, v)`` with lags >= 0.

    ``provider`` evaluates a single coefficient; ``grid`` (optional) returns
    the full ``(M+1, M+1)`` lag array for one scale in a vectorized way.
    """

    name: str
    laws: LawFamily
    provider: Callable[[int, int, int], float]
    alpha: Optional[float] = None
    grid: Optional[Callable[[int, int], np.ndarray]] = None

    @staticmethod
    def superlinear(alpha: float) -> "CoefficientField":
        """The built-in field with ``a(k, u, v) = (k + u + v)**(-alpha)``."""
        laws = LawFamily.superlinear(alpha)

        def provider(k: int, u: int, v: int) -> float:
            return float(k + u + v) ** -alpha

        def grid(k: int, m: int) -> np.ndarray:
            lag = np.arange(m + 1, dtype=np.float64)
            return (k + lag[:, None] + lag[None, :]) ** -alpha

        return CoefficientField(
            name="superlinear", laws=laws, provider=provider, alpha=float(alpha), grid=grid
        )

    @staticmethod
    def custom(
        provider: Callable[[int, int, int], float],
        laws: LawFamily,
        name: str = "custom",
    ) -> "CoefficientField":
        return CoefficientField(name=name, laws=laws, provider=provider)

    def coefficient(self, k: int, u: int, v: int) -> float:
        if k < 1 or u < 0 or v < 0:
            raise InvalidParameterError(
                f"coefficients are indexed by k >= 1 and lags >= 0, got ({k}, {u}, {v})"
            )
        return float(self.provider(k, u, v))

    def lag_grid(self, k: int, m: int) -> np.ndarray:
        """The ``(m+1, m+1)`` array of coefficients at scale ``k``."""
        if self.grid is not None:
            return np.asarray(self.grid(k, m), dtype=np.float64)
        out = np.empty((m + 1, m + 1), dtype=np.float64)
        for u in range(m + 1):
            for v in range(m + 1):
                out[u, v] = self.provider(k, u, v)
        return out


@dataclass(frozen=True)
class TruncationSpec:
    """Retained index ranges: scales ``k <= K`` and lags ``0 <= u, v <= M``.

    ``tail_l1``/``tail_l2sq`` are certified upper bounds on the discarded
    L1 mass and variance; they shrink monotonically as (K, M) grow.
    """

    K: int
    M: int
    tail_l1: float
    tail_l2sq: float

    def __post_init__(self) -> None:
        if self.K < 1 or self.M < 0:
            raise InvalidParameterError(
                f"truncation needs K >= 1 and M >= 0, got K={self.K}, M={self.M}"
            )
        if self.tail_l1 < 0.0 or self.tail_l2sq < 0.0:
            raise InvalidParameterError("certified tails cannot be negative")

    @staticmethod
    def for_field(field: CoefficientField, K: int, M: int) -> "TruncationSpec":
        tails = tail_bound(field, K, M)
        return TruncationSpec(K=K, M=M, tail_l1=tails["tail_l1"], tail_l2sq=tails["tail_l2sq"])


def _superlinear_tail(alpha: float, moment_power: float, laws: LawFamily, K: int, M: int) -> float:
    """Certified tail bound shared by the L1 (moment_power=alpha) and L2
    (moment_power=2*alpha) cases.

    Scales beyond K are covered by the integral majorant
    ``[K^-3/3 + K^-2/(2(q-2))] / log^2(K+1)`` with ``q = moment_power``,
    whose decrement in K provably dominates the per-scale lag bound added
    at K+1 — that is what makes the total monotone in K.  Lags beyond M at
    a retained scale are covered by a pure power tail starting at k+M+1.
    """
    q = moment_power
    beyond_scales = (K ** -3.0 / 3.0 + K ** -2.0 / (2.0 * (q - 2.0))) / math.log(K + 1.0) ** 2
    kept = []
    for k in range(laws.first_admissible_k(), K + 1):
        if q == alpha:
            weight = laws.moments_for_scale(k).l1
        else:
            weight = laws.moments_for_scale(k).l2sq
        kept.append(weight * power_tail_upper(q - 1.0, float(k + M + 1)))
    return beyond_scales + csum(kept)


def tail_bound(field: CoefficientField, K: int, M: int) -> dict[str, float]:
    """Certified upper bounds on the discarded L1 mass and variance.

    Only available for families with registered closed-form majorants
    (currently the superlinear field).
    """
    if K < 1 or M < 0:
        raise InvalidParameterError(f"tail bound needs K >= 1, M >= 0, got ({K}, {M})")
    if field.name != "superlinear" or field.alpha is None:
        raise UnsupportedFamilyError(
            f"no closed-form tail majorant registered for family {field.name!r}"
        )
    alpha = field.alpha
    return {
        "tail_l1": _superlinear_tail(alpha, alpha, field.laws, K, M),
        "tail_l2sq": _superlinear_tail(alpha, 2.0 * alpha, field.laws, K, M),
    }


def retained_second_moment(field: CoefficientField, K: int, M: int) -> float:
    """Exact variance of the retained (truncated) field, compensated sum."""
    counts = box_diagonal_counts(M).astype(np.float64)
    s = np.arange(2 * M + 1, dtype=np.float64)
    terms = []
    for k in range(field.laws.first_admissible_k(), K + 1):
        if field.name == "superlinear" and field.alpha is not None:
            coeff_sq = (k + s) ** (-2.0 * field.alpha)
        else:
            grid = field.lag_grid(k, M)
            terms.append(field.laws.moments_for_scale(k).l2sq * float(np.sum(grid * grid)))
            continue
        terms.append(field.laws.moments_for_scale(k).l2sq * float(counts @ coeff_sq))
    return csum(terms)


def auto_truncation(
    field: CoefficientField,
    rel_variance: float = 1e-4,
    max_dim: int = 4096,
) -> TruncationSpec:
    """Grow (K, M) until the certified variance tail is a ``rel_variance``
    fraction of the retained variance."""
    if not (0.0 < rel_variance < 1.0):
        raise InvalidParameterError(f"relative tolerance must be in (0, 1), got {rel_variance!r}")
    K = max(8, field.laws.first_admissible_k())
    M = 8
    while True:
        tails = tail_bound(field, K, M)
        retained = retained_second_moment(field, K, M)
        if retained > 0.0 and tails["tail_l2sq"] <= rel_variance * retained:
            return TruncationSpec(K=K, M=M, tail_l1=tails["tail_l1"], tail_l2sq=tails["tail_l2sq"])
        if K >= max_dim and M >= max_dim:
            raise ResourceLimitError(
                f"truncation search exceeded the {max_dim} cap without certifying "
                f"a relative tail of {rel_variance!r}"
            )
        # Grow the axis whose tail contribution dominates; doubling keeps
        # the search logarithmic.
        tighter_m = tail_bound(field, K, min(2 * M, max_dim))
        if tighter_m["tail_l2sq"] <= 0.55 * tails["tail_l2sq"] and M < max_dim:
            M = min(2 * M, max_dim)
        else:
            K = min(2 * K, max_dim)


# ---------------------------------------------------------------------------
# window weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleWeights:
    """Weight lattice of one scale: ``weights[r, c]`` multiplies the atom at
    site ``(s0 + r, t0 + c)``; ``row_lo/row_hi`` bracket the nonzero band."""

    scale: int
    s0: int
    t0: int
    weights: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray


@dataclass(frozen=True)
class WindowWeights:
    n1: int
    n2: int
    laws: LawFamily
    family_name: str
    scales: tuple[ScaleWeights, ...]

    def total_cells(self) -> int:
        return sum(sw.weights.size for sw in self.scales)


def _nonzero_bands(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = weights != 0.0
    any_row = nz.any(axis=1)
    lo = np.where(any_row, nz.argmax(axis=1), 0).astype(np.int64)
    hi = np.where(any_row, weights.shape[1] - nz[:, ::-1].argmax(axis=1), 0).astype(np.int64)
    return lo, hi


def window_weights(
    field: CoefficientField,
    n1: int,
    n2: int,
    trunc: TruncationSpec,
    max_cells: int = _DEFAULT_CELL_CAP,
) -> WindowWeights:
    """Per-site window weights ``W_k(s, t) = sum over window (i, j) of
    a(k, i - s, j - t)``, by 2-D prefix sums — O((n + M)^2) per scale.

    Sites run over ``s in [-M, n1)``, ``t in [-M, n2)``; every lag the
    truncation retains lands inside that lattice.
    """
    if n1 < 1 or n2 < 1:
        raise InvalidParameterError(f"window must be >= 1x1, got {n1}x{n2}")
    m = trunc.M
    height, width = n1 + m, n2 + m
    k_first = field.laws.first_admissible_k()
    n_scales = trunc.K - k_first + 1
    if n_scales * height * width > max_cells:
        raise ResourceLimitError(
            f"window {n1}x{n2} with M={m} over {n_scales} scales needs "
            f"{n_scales * height * width} weight cells (cap {max_cells})"
        )

    s_sites = np.arange(-m, n1)
    t_sites = np.arange(-m, n2)
    u_lo = np.maximum(0, -s_sites)
    u_hi = np.minimum(m, n1 - 1 - s_sites)
    v_lo = np.maximum(0, -t_sites)
    v_hi = np.minimum(m, n2 - 1 - t_sites)

    per_scale = []
    for k in range(k_first, trunc.K + 1):
        grid = field.lag_grid(k, m)
        prefix = np.zeros((m + 2, m + 2), dtype=np.float64)
        np.cumsum(np.cumsum(grid, axis=0), axis=1, out=prefix[1:, 1:])
        w = (
            prefix[np.ix_(u_hi + 1, v_hi + 1)]
            - prefix[np.ix_(u_lo, v_hi + 1)]
            - prefix[np.ix_(u_hi + 1, v_lo)]
            + prefix[np.ix_(u_lo, v_lo)]
        )
        lo, hi = _nonzero_bands(w)
        per_scale.append(
            ScaleWeights(scale=k, s0=-m, t0=-m, weights=w, row_lo=lo, row_hi=hi)
        )
    return WindowWeights(
        n1=n1, n2=n2, laws=field.laws, family_name=field.name, scales=tuple(per_scale)
    )


def form_window_weights(
    atoms: Mapping[int, Mapping[tuple[int, int], float]],
    laws: LawFamily,
    n1: int,
    n2: int,
    family_name: str = "linear-form",
    max_cells: int = _DEFAULT_CELL_CAP,
) -> WindowWeights:
    """Window weights for a sparse linear form over atoms.

    ``atoms[k][(di, dj)]`` is the coefficient the form puts on the atom
    shifted by ``(di, dj)`` at scale ``k`` (shifts of either sign).  Each
    atom contributes its coefficient on a full ``n1 x n2`` rectangle of
    sites, so the lattice is assembled with a difference array and one
    2-D cumulative sum per scale.
    """
    if n1 < 1 or n2 < 1:
        raise InvalidParameterError(f"window must be >= 1x1, got {n1}x{n2}")
    per_scale = []
    total = 0
    for k in sorted(atoms):
        shifts = atoms[k]
        if not shifts:
            continue
        di_min = min(d[0] for d in shifts)
        di_max = max(d[0] for d in shifts)
        dj_min = min(d[1] for d in shifts)
        dj_max = max(d[1] for d in shifts)
        height = di_max - di_min + n1
        width = dj_max - dj_min + n2
        total += height * width
        if total > max_cells:
            raise ResourceLimitError(
                f"linear-form window lattice exceeds {max_cells} cells at scale {k}"
            )
        diff = np.zeros((height + 1, width + 1), dtype=np.float64)
        for (di, dj), coeff in shifts.items():
            r, c = di - di_min, dj - dj_min
            diff[r, c] += coeff
            diff[r + n1, c] -= coeff
            diff[r, c + n2] -= coeff
            diff[r + n1, c + n2] += coeff
        w = np.cumsum(np.cumsum(diff, axis=0), axis=1)[:height, :width]
        lo, hi = _nonzero_bands(w)
        per_scale.append(
            ScaleWeights(scale=k, s0=di_min, t0=dj_min, weights=w, row_lo=lo, row_hi=hi)
        )
    return WindowWeights(
        n1=n1, n2=n2, laws=laws, family_name=family_name, scales=tuple(per_scale)
    )


# ---------------------------------------------------------------------------
# moments and sampling
# ---------------------------------------------------------------------------

def exact_second_moment(weights: WindowWeights) -> float:
    """``Var(S) = sum_k l2sq_k * sum_{s,t} W_k(s,t)^2``, compensated.

    Scales are accumulated from the largest index down (smallest terms
    first) and the cross-scale reduction is error-free.
    """
    terms = []
    for sw in sorted(weights.scales, key=lambda s: -s.scale):
        l2sq = weights.laws.moments_for_scale(sw.scale).l2sq
        row_dots = [float(np.dot(row, row)) for row in sw.weights]
        terms.append(l2sq * csum(row_dots))
    return csum(terms)


@dataclass(frozen=True)
class PartialSumSample:
    window: tuple[int, int]
    replication: int
    value: float
    normalization: float = dc_field(init=False)

    def __post_init__(self) -> None:
        n1, n2 = self.window
        object.__setattr__(self, "normalization", self.value / math.sqrt(n1 * n2))


def _site_axes(sw: ScaleWeights) -> tuple[np.ndarray, np.ndarray]:
    iu = (sw.s0 + np.arange(sw.weights.shape[0], dtype=np.int64)).view(np.uint64)
    ju = (sw.t0 + np.arange(sw.weights.shape[1], dtype=np.int64)).view(np.uint64)
    return iu, ju


def sample_partial_sum(
    weights: WindowWeights,
    master_seed: int,
    replication: int,
) -> PartialSumSample:
    """One replication of the windowed partial sum.

    Pure function of (weights, master_seed, replication); atoms are drawn
    lazily over the nonzero weight band of each scale.
    """
    per_scale = []
    for sw in sorted(weights.scales, key=lambda s: -s.scale):
        law = weights.laws.law_for_scale(sw.scale)
        root = np.uint64(stream_root(master_seed, sw.scale, replication))
        iu, ju = _site_axes(sw)
        per_scale.append(
            float(
                kernels.weighted_window_sum(
                    root, iu, ju, sw.weights, sw.row_lo, sw.row_hi,
                    law.p, 2.0 * law.p, law.v,
                )
            )
        )
    value = csum(per_scale)
    return PartialSumSample(window=(weights.n1, weights.n2), replication=replication, value=value)


def sample_partial_sums(
    weights: WindowWeights,
    master_seed: int,
    replications: Sequence[int] | range,
) -> np.ndarray:
    """Normalized partial sums ``value / sqrt(n1 n2)`` for a replication batch.

    Replications are independent streams, evaluated in parallel per scale;
    the cross-scale reduction per replication is a deterministic
    compensated sum in descending scale order, so the output is identical
    for any thread count.
    """
    reps = np.asarray(list(replications), dtype=np.int64)
    if reps.size == 0:
        return np.empty(0, dtype=np.float64)
    scale_order = sorted(weights.scales, key=lambda s: -s.scale)
    per_scale_values = np.zeros((len(scale_order), reps.size), dtype=np.float64)
    for row, sw in enumerate(scale_order):
        law = weights.laws.law_for_scale(sw.scale)
        roots = np.array(
            [stream_root(master_seed, sw.scale, int(r)) for r in reps], dtype=np.uint64
        )
        iu, ju = _site_axes(sw)
        kernels.weighted_window_sums_batch(
            roots, iu, ju, sw.weights, sw.row_lo, sw.row_hi,
            law.p, 2.0 * law.p, law.v, per_scale_values[row],
        )
    norm = math.sqrt(weights.n1 * weights.n2)
    return np.array(
        [csum(per_scale_values[:, i]) / norm for i in range(reps.size)], dtype=np.float64
    )


def export_weights_csv(weights: WindowWeights, path: str) -> None:
    """Write the nonzero weight entries as ``k,s,t,weight`` rows."""
    with open(path, "w", newline="") as fh:
        fh.write("k,s,t,weight\n")
        for sw in weights.scales:
            rows, cols = np.nonzero(sw.weights)
            for r, c in zip(rows.tolist(), cols.tolist()):
                fh.write(
                    f"{sw.scale},{sw.s0 + r},{sw.t0 + c},{sw.weights[r, c]:.17g}\n"
                )
