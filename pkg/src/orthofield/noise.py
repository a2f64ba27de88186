"""Three-point noise laws, scale families, and the counter-keyed sampler.

Every random input used anywhere in this package is an independent "atom":
a symmetric three-point variable that takes the values ``+v``, ``-v`` and
``0`` with probabilities ``p``, ``p`` and ``1 - 2p``.  Atoms are addressed
by a :class:`StreamKey` (master seed, scale index, lattice site,
replication index) and sampled by hashing the key, so the same key always
yields the same value no matter which window, batch or thread asked for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidLawError, InvalidParameterError, UnsupportedFamilyError

__all__ = [
    "ThreePointLaw",
    "LawMoments",
    "StreamKey",
    "LawFamily",
    "law_moments",
    "sample_atom",
    "sample_atoms",
    "stream_root",
    "site_hashes",
    "uniform_from_hash",
]

_MASK64 = (1 << 64) - 1

# Mixing constants.  _M1/_M2 are the multipliers of the splitmix64
# finalizer; the C_* constants decorrelate the key components before the
# final avalanche.  Changing any of these changes every sampled stream.
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GAMMA = 0x9E3779B97F4A7C15
_C_SCALE = 0xC2B2AE3D27D4EB4F
_C_REP = 0x2545F4914F6CDD1D
_C_I = 0x165667B19E3779F9
_C_J = 0x27D4EB2F165667C5

_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@dataclass(frozen=True)
class ThreePointLaw:
    """Symmetric three-point law: ``+v`` w.p. ``p``, ``-v`` w.p. ``p``, else 0."""

    v: float
    p: float

    def __post_init__(self) -> None:
        if not (self.v > 0.0 and math.isfinite(self.v)):
            raise InvalidLawError(f"magnitude must be finite and positive, got v={self.v!r}")
        if not (0.0 < self.p <= 0.5):
            raise InvalidLawError(f"probability must lie in (0, 1/2], got p={self.p!r}")


@dataclass(frozen=True)
class LawMoments:
    """First absolute moment and second moment of a three-point law."""

    l1: float
    l2sq: float


@dataclass(frozen=True)
class StreamKey:
    """Address of a single atom draw.

    Identical keys yield identical values; distinct keys yield draws that
    behave as independent.  ``site`` coordinates may be negative.
    """

    master_seed: int
    scale: int
    site: tuple[int, int]
    replication: int

    def __post_init__(self) -> None:
        if not (0 <= self.master_seed <= _MASK64):
            raise InvalidParameterError("master_seed must fit in an unsigned 64-bit integer")
        if self.scale < 0:
            raise InvalidParameterError(f"scale index must be >= 0, got {self.scale}")
        if self.replication < 0:
            raise InvalidParameterError(f"replication index must be >= 0, got {self.replication}")


def law_moments(law: ThreePointLaw) -> LawMoments:
    """Exact moments ``E|e| = 2vp`` and ``E e^2 = 2 v^2 p``."""
    return LawMoments(l1=2.0 * law.v * law.p, l2sq=2.0 * law.v * law.v * law.p)


# ---------------------------------------------------------------------------
# scale families
# ---------------------------------------------------------------------------

def _superlinear_raw(alpha: float, k: int) -> tuple[float, float]:
    # magnitude k^alpha, probability 1 / (2 k^5 log^2(k+1))
    lg = math.log(k + 1.0)
    return float(k) ** alpha, 1.0 / (2.0 * float(k) ** 5 * lg * lg)


def _diagonal_raw(k: int) -> tuple[float, float]:
    # magnitude k^2 log^2(k+1), probability 1 / (2 k^2 log^4(k+1))
    lg = math.log(k + 1.0)
    return float(k * k) * lg * lg, 1.0 / (2.0 * float(k * k) * lg ** 4)


@dataclass(frozen=True)
class LawFamily:
    """A sequence of three-point laws indexed by the scale ``k >= 1``.

    Two built-in families drive everything in this package:

    * ``superlinear`` -- magnitudes grow like ``k**alpha`` (``alpha > 4``)
      while probabilities fall like ``1/(2 k^5 log^2(k+1))``, so the second
      moments ``k**(2*alpha-5)/log^2(k+1)`` still grow superlinearly.
    * ``diagonal`` -- magnitudes ``k^2 log^2(k+1)`` with probabilities
      ``1/(2 k^2 log^4(k+1))``; the second moment at scale ``k`` is exactly
      ``k^2``.

    For small ``k`` the probability formulas may exceed 1/2, in which case
    no three-point law exists at that scale; such scales are *inadmissible*
    and every law-dependent computation starts at
    :meth:`first_admissible_k` instead.
    """

    name: str
    alpha: Optional[float] = None
    _custom: Optional[Callable[[int], tuple[float, float]]] = None

    @staticmethod
    def superlinear(alpha: float) -> "LawFamily":
        if not (alpha > 4.0 and math.isfinite(alpha)):
            raise InvalidParameterError(f"superlinear family needs alpha > 4, got {alpha!r}")
        return LawFamily(name="superlinear", alpha=float(alpha))

    @staticmethod
    def diagonal() -> "LawFamily":
        return LawFamily(name="diagonal")

    @staticmethod
    def custom(raw: Callable[[int], tuple[float, float]]) -> "LawFamily":
        """Family from a user callable mapping ``k`` to ``(v_k, p_k)``."""
        return LawFamily(name="custom", _custom=raw)

    def raw_parameters(self, k: int) -> tuple[float, float]:
        """The ``(v_k, p_k)`` formula values, *without* admissibility checks.

        Useful for displaying why a small scale is rejected; ``p_k`` may
        exceed 1/2 here.
        """
        if k < 1:
            raise InvalidParameterError(f"scale index must be >= 1, got {k}")
        if self.name == "superlinear":
            assert self.alpha is not None
            return _superlinear_raw(self.alpha, k)
        if self.name == "diagonal":
            return _diagonal_raw(k)
        if self.name == "custom" and self._custom is not None:
            v, p = self._custom(k)
            return float(v), float(p)
        raise UnsupportedFamilyError(f"unknown family {self.name!r}")

    def is_admissible(self, k: int) -> bool:
        v, p = self.raw_parameters(k)
        return v > 0.0 and 0.0 < p <= 0.5

    def law_for_scale(self, k: int) -> ThreePointLaw:
        """The validated law at scale ``k``; raises if the scale is inadmissible."""
        v, p = self.raw_parameters(k)
        if not (0.0 < p <= 0.5):
            raise InvalidLawError(
                f"scale k={k} of family {self.name!r} is inadmissible: p_k={p!r} "
                f"is not a probability <= 1/2 (first admissible k is "
                f"{self.first_admissible_k()})"
            )
        return ThreePointLaw(v=v, p=p)

    def first_admissible_k(self, search_limit: int = 1_000_000) -> int:
        """Smallest ``k`` at which the family yields a genuine law."""
        for k in range(1, search_limit + 1):
            if self.is_admissible(k):
                return k
        raise InvalidLawError(f"family {self.name!r} has no admissible scale <= {search_limit}")

    def moments_for_scale(self, k: int) -> LawMoments:
        return law_moments(self.law_for_scale(k))


# ---------------------------------------------------------------------------
# counter-keyed hashing
# ---------------------------------------------------------------------------

def _fmix64_scalar(z: int) -> int:
    z ^= z >> 30
    z = (z * _M1) & _MASK64
    z ^= z >> 27
    z = (z * _M2) & _MASK64
    z ^= z >> 31
    return z


def stream_root(master_seed: int, scale: int, replication: int) -> int:
    """Collapse (seed, scale, replication) into one 64-bit stream root.

    Sites within the stream are then hashed against this root, which keeps
    the per-site work down to a single finalizer round.
    """
    if not (0 <= master_seed <= _MASK64):
        raise InvalidParameterError("master_seed must fit in an unsigned 64-bit integer")
    h = _fmix64_scalar((master_seed + _GAMMA) & _MASK64)
    h = _fmix64_scalar(h ^ ((scale * _C_SCALE) & _MASK64))
    h = _fmix64_scalar(h ^ ((replication * _C_REP) & _MASK64))
    return h


def _site_hash_scalar(root: int, i: int, j: int) -> int:
    iu = i & _MASK64  # two's complement embedding of negative coordinates
    ju = j & _MASK64
    return _fmix64_scalar(root ^ ((iu * _C_I) & _MASK64) ^ ((ju * _C_J) & _MASK64))


def uniform_from_hash(h: int) -> float:
    """Map a 64-bit hash to the dyadic uniform ``(h >> 11) * 2**-53``."""
    return (h >> 11) * _INV53


def sample_atom(law: ThreePointLaw, key: StreamKey) -> float:
    """Draw the single atom addressed by ``key``.

    Pure function of the key: ``+v`` when the key's uniform falls below
    ``p``, ``-v`` below ``2p``, otherwise 0.
    """
    root = stream_root(key.master_seed, key.scale, key.replication)
    u = uniform_from_hash(_site_hash_scalar(root, key.site[0], key.site[1]))
    if u < law.p:
        return law.v
    if u < 2.0 * law.p:
        return -law.v
    return 0.0


def _as_u64(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.int64).view(np.uint64)


def _fmix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def site_hashes(root: int, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    """Vectorized site hash for coordinate arrays ``ii``, ``jj`` (broadcast)."""
    iu = _as_u64(ii) * np.uint64(_C_I)
    ju = _as_u64(jj) * np.uint64(_C_J)
    return _fmix64(np.uint64(root) ^ iu ^ ju)


def sample_atoms(
    law: ThreePointLaw,
    master_seed: int,
    scale: int,
    ii: np.ndarray,
    jj: np.ndarray,
    replication: int,
) -> np.ndarray:
    """Vectorized :func:`sample_atom` over broadcastable coordinate arrays."""
    root = stream_root(master_seed, scale, replication)
    u = (site_hashes(root, ii, jj) >> np.uint64(11)).astype(np.float64) * _INV53
    out = np.zeros(np.broadcast_shapes(np.shape(ii), np.shape(jj)), dtype=np.float64)
    out[u < law.p] = law.v
    out[(u >= law.p) & (u < 2.0 * law.p)] = -law.v
    return out
