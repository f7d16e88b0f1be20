"""Numba-jitted twins of the kernels in ``_kernels_np``.

Same signatures, same float64 contract.  No ``fastmath`` so results stay
within one or two ulps of the reference path.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def soft_bce(probs, soft):
    n, k = probs.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(k):
            acc -= soft[i, j] * np.log(probs[i, j])
            acc -= (1.0 - soft[i, j]) * np.log1p(-probs[i, j])
        out[i] = acc
    return out


@njit(cache=True)
def set_bce(probs, labels):
    n, k = probs.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(k):
            if labels[i, j]:
                acc -= np.log(probs[i, j])
            else:
                acc -= np.log1p(-probs[i, j])
        out[i] = acc
    return out


@njit(cache=True)
def powerset_expected_loss(probs, cond):
    k = probs.shape[0]
    log_f = np.log(probs)
    log_1f = np.log1p(-probs)
    total = 0.0
    for s in range(1 << k):
        loss = 0.0
        weight = 1.0
        for j in range(k):
            if (s >> j) & 1:
                loss -= log_f[j]
                weight *= cond[j]
            else:
                loss -= log_1f[j]
                weight *= 1.0 - cond[j]
        total += weight * loss
    return total


@njit(cache=True)
def ranking_terms(scores, relevant):
    n, k = scores.shape
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for r in range(k):
            if not relevant[i, r]:
                continue
            for c in range(k):
                if relevant[i, c]:
                    continue
                if scores[i, c] > scores[i, r]:
                    acc += 1.0
                elif scores[i, c] == scores[i, r]:
                    acc += 0.5
        out[i] = acc
    return out
