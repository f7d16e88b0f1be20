"""Pure-numpy reference implementations of the hot numeric kernels.

These are the fallback path selected by ``DMLL_NUMBA=0`` and the ground
truth the jitted kernels are tested against.  All kernels take float64
arrays, never mutate their inputs, and assume probabilities have already
been clamped away from 0 and 1 by the caller.
"""

import numpy as np

# Subsets per chunk when enumerating a powerset; bounds peak memory at
# roughly chunk * k doubles.
_CHUNK = 1 << 16


def soft_bce(probs: np.ndarray, soft: np.ndarray) -> np.ndarray:
    """Per-row binary cross-entropy against fractional targets.

    probs, soft: (n, k).  Returns (n,) with
    sum_j [ -soft*log(p) - (1-soft)*log(1-p) ].
    """
    return -(soft * np.log(probs) + (1.0 - soft) * np.log1p(-probs)).sum(axis=1)


def set_bce(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row binary cross-entropy against boolean label sets.

    probs: (n, k) float64, labels: (n, k) bool.  Returns (n,).
    """
    return -np.where(labels, np.log(probs), np.log1p(-probs)).sum(axis=1)


def powerset_expected_loss(probs: np.ndarray, cond: np.ndarray) -> float:
    """Expectation of the set BCE loss under independent per-class conditionals.

    Enumerates all 2^k label subsets; cond entries may be exactly 0 or 1
    (zero-probability subsets contribute nothing).
    """
    k = probs.shape[0]
    log_f = np.log(probs)
    log_1f = np.log1p(-probs)
    shifts = np.arange(k, dtype=np.uint64)
    total = 0.0
    n_subsets = 1 << k
    for start in range(0, n_subsets, _CHUNK):
        stop = min(start + _CHUNK, n_subsets)
        idx = np.arange(start, stop, dtype=np.uint64)
        bits = ((idx[:, None] >> shifts) & 1).astype(bool)
        losses = -(bits @ log_f + (~bits) @ log_1f)
        weights = np.prod(np.where(bits, cond, 1.0 - cond), axis=1)
        total += float(weights @ losses)
    return total


def ranking_terms(scores: np.ndarray, relevant: np.ndarray) -> np.ndarray:
    """Weighted count of mis-ordered relevant/irrelevant pairs per row.

    scores: (n, k) float64, relevant: (n, k) bool.  For each row, counts
    pairs (r in relevant, i in irrelevant) with score[i] > score[r],
    plus 0.5 for each tied pair.  Rows must be normalized by the caller.
    """
    n = scores.shape[0]
    out = np.zeros(n)
    for i in range(n):
        rel = scores[i, relevant[i]]
        irr = scores[i, ~relevant[i]]
        diff = irr[:, None] - rel[None, :]
        out[i] = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return out
