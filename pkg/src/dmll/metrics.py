"""Rank-based multi-label evaluation: mAP, one-error, ranking loss, coverage.

All four depend only on the ordering of scores.  Tie handling is fixed and
documented per metric: ranking loss gives ties half weight, everywhere else
ties resolve toward the lower index.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DimensionError, DmllError


@dataclass
class ScoreMatrix:
    scores: np.ndarray  # (n, k)
    truths: list  # n sets of relevant class indices

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] < 1:
            raise DimensionError(f"scores must be (n >= 1, k), got {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise DmllError("scores must be finite")
        n, k = self.scores.shape
        if len(self.truths) != n:
            raise DimensionError(f"{len(self.truths)} truth sets for {n} score rows")
        self.truths = [frozenset(int(j) for j in t) for t in self.truths]
        for t in self.truths:
            if any(j < 0 or j >= k for j in t):
                raise DmllError(f"truth label out of range [0, {k})")

    def relevance_mask(self) -> np.ndarray:
        n, k = self.scores.shape
        mask = np.zeros((n, k), dtype=bool)
        for i, t in enumerate(self.truths):
            mask[i, list(t)] = True
        return mask


def mean_average_precision(sm: ScoreMatrix) -> float:
    """Macro mean over classes of average precision.

    Instances are ranked per class by score descending, ties by instance
    index ascending.  Classes with no positive instance are skipped with a
    warning; having none at all is an error.
    """
    n, k = sm.scores.shape
    rel = sm.relevance_mask()
    order_keys = np.arange(n)
    aps = []
    skipped = []
    for j in range(k):
        positives = rel[:, j]
        if not positives.any():
            skipped.append(j)
            continue
        order = np.lexsort((order_keys, -sm.scores[:, j]))
        hits = positives[order]
        ranks = np.arange(1, n + 1)
        precision_at = np.cumsum(hits) / ranks
        aps.append(float(precision_at[hits].mean()))
    if skipped:
        warnings.warn(f"mAP skipped {len(skipped)} classes with no positive instance: {skipped}")
    if not aps:
        raise DmllError("mAP undefined: no class has a positive instance")
    return float(np.mean(aps))


def one_error(sm: ScoreMatrix) -> float:
    """Fraction of instances whose top-scoring label is irrelevant."""
    for i, t in enumerate(sm.truths):
        if not t:
            raise DmllError(f"one_error undefined for instance {i} with empty truth set")
    top = np.argmax(sm.scores, axis=1)  # ties: lowest index
    wrong = [t not in truth for t, truth in zip(top, sm.truths)]
    return float(np.mean(wrong))


def ranking_loss(sm: ScoreMatrix) -> float:
    """Mean fraction of mis-ordered (relevant, irrelevant) pairs; ties count 0.5."""
    n, k = sm.scores.shape
    rel = sm.relevance_mask()
    n_rel = rel.sum(axis=1)
    if np.any(n_rel == 0) or np.any(n_rel == k):
        bad = int(np.argmax((n_rel == 0) | (n_rel == k)))
        raise DmllError(
            f"ranking_loss undefined for instance {bad}: needs both relevant and irrelevant labels"
        )
    terms = backend.ranking_terms(sm.scores, rel)
    return float(np.mean(terms / (n_rel * (k - n_rel))))


def coverage(sm: ScoreMatrix) -> float:
    """Mean of (worst descending rank over relevant labels - 1) / k.

    Ranks are 1-based; tied scores rank the lower class index first.
    """
    n, k = sm.scores.shape
    total = 0.0
    for i, truth in enumerate(sm.truths):
        if not truth:
            raise DmllError(f"coverage undefined for instance {i} with empty truth set")
        order = np.lexsort((np.arange(k), -sm.scores[i]))
        rank_of = np.empty(k, dtype=np.int64)
        rank_of[order] = np.arange(1, k + 1)
        total += (max(rank_of[j] for j in truth) - 1) / k
    return float(total / n)


def all_metrics(sm: ScoreMatrix) -> dict:
    return {
        "map": mean_average_precision(sm),
        "one_error": one_error(sm),
        "ranking_loss": ranking_loss(sm),
        "coverage": coverage(sm),
    }
