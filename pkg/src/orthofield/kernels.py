"""Numba kernels for the hot Monte Carlo loops.

The hash arithmetic here must stay bit-identical to the reference
implementation in :mod:`orthofield.noise`; the test suite cross-checks the
two paths on random inputs.  Everything below is a pure function of its
arguments, so replication batches can be evaluated in parallel without
changing any sampled value.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

__all__ = ["weighted_window_sum", "weighted_window_sums_batch"]

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_C_I = np.uint64(0x165667B19E3779F9)
_C_J = np.uint64(0x27D4EB2F165667C5)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _row_accumulate(root, iu, ju, weights, row_lo, row_hi, p, two_p):
    # Walks the nonzero band of each row, hashes the site, and adds the
    # weight with the sign dictated by the sampled atom.  The magnitude v
    # is factored out by the caller (every atom of one stream shares it).
    total = 0.0
    for a in range(weights.shape[0]):
        partial = root ^ (iu[a] * _C_I)
        for b in range(row_lo[a], row_hi[a]):
            z = partial ^ (ju[b] * _C_J)
            z ^= z >> _S30
            z *= _M1
            z ^= z >> _S27
            z *= _M2
            z ^= z >> _S31
            u = np.float64(z >> _S11) * _INV53
            if u < p:
                total += weights[a, b]
            elif u < two_p:
                total -= weights[a, b]
    return total


@njit(cache=True)
def weighted_window_sum(root, iu, ju, weights, row_lo, row_hi, p, two_p, v):
    """Sum of ``weights[a, b] * atom(site a, b)`` for one stream root."""
    return v * _row_accumulate(root, iu, ju, weights, row_lo, row_hi, p, two_p)


@njit(cache=True, parallel=True)
def weighted_window_sums_batch(roots, iu, ju, weights, row_lo, row_hi, p, two_p, v, out):
    """One weighted window sum per replication root, written into ``out``.

    Each replication is independent, so the parallel schedule cannot
    change results; ``out[r]`` depends only on ``roots[r]``.
    """
    for r in prange(roots.shape[0]):
        out[r] += v * _row_accumulate(roots[r], iu, ju, weights, row_lo, row_hi, p, two_p)
