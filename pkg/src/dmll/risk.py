"""Set BCE loss, its soft-label expectation H, and the determined risk estimator.

H(f, d) = sum_j [ d_j * (-log f_j) + (1 - d_j) * (-log(1 - f_j)) ] is the
expectation of the set BCE loss over label subsets when class j is positive
independently with probability d_j; the oracle module checks this identity
against explicit powerset enumeration.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DimensionError, DmllError, NonFiniteLossError

WEIGHTINGS = ("corrected", "estimated", "oracle")


@dataclass(frozen=True)
class RiskConfig:
    """How the determined batch risk weights and differentiates samples.

    corrected: the determined class's conditional is pinned to its observed
    value, so every importance weight collapses to 1/k.
    estimated: weights 1/(p*k) with p read off the model's own soft labels,
    clamped to [epsilon, 1].
    oracle: caller supplies true conditionals; the estimator reduces to a
    plain mean of corrected-H values (see determined_batch_risk).
    """

    k: int
    epsilon: float = 1e-7
    weighting: str = "corrected"
    stop_gradient_on_soft_labels: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise DmllError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.epsilon < 0.5:
            raise DmllError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if self.weighting not in WEIGHTINGS:
            raise DmllError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")


def clamp_probs(probs: np.ndarray, epsilon: float) -> np.ndarray:
    return np.clip(probs, epsilon, 1.0 - epsilon)


def _as_rows(arr, k: int, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2 or out.shape[1] != k:
        raise DimensionError(f"{name} must have {k} columns, got shape {out.shape}")
    return out


def bce_set_loss(probs: np.ndarray, positives) -> float:
    """BCE of a probability vector against a positive-index set."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise DimensionError(f"probs must be 1-d, got shape {probs.shape}")
    k = probs.shape[0]
    mask = np.zeros(k, dtype=bool)
    for j in positives:
        if not 0 <= j < k:
            raise DmllError(f"label index {j} out of range [0, {k})")
        mask[j] = True
    return float(backend.set_bce(probs[None, :], mask[None, :])[0])


def expected_loss_H(probs: np.ndarray, soft: np.ndarray):
    """Soft-label BCE; rows for 2-d input, a scalar for vectors."""
    probs = np.asarray(probs, dtype=np.float64)
    scalar = probs.ndim == 1
    k = probs.shape[-1]
    p = _as_rows(probs, k, "probs")
    d = _as_rows(soft, k, "soft")
    if p.shape != d.shape:
        raise DimensionError(f"probs {p.shape} and soft {d.shape} disagree")
    if np.any(d < 0.0) or np.any(d > 1.0):
        raise DmllError("soft labels must lie in [0, 1]")
    h = backend.soft_bce(p, d)
    return float(h[0]) if scalar else h


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def recover_soft_labels(logits: np.ndarray, det, config: RiskConfig) -> np.ndarray:
    """Sigmoid soft labels, with the determined class pinned to its value.

    det is a (gamma, value) pair or None; with None the raw sigmoid outputs
    are returned (prior mode, no observation to pin).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (config.k,):
        raise DimensionError(f"logits must have shape ({config.k},), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise DmllError("logits must be finite")
    d = sigmoid(logits)
    if det is not None:
        gamma, value = det
        if not 0 <= gamma < config.k:
            raise DmllError(f"gamma {gamma} out of range [0, {config.k})")
        if value not in (0, 1):
            raise DmllError(f"value {value!r} not in {{0, 1}}")
        d[gamma] = float(value)
    return d


def partition_coefficients(soft, gamma, value, config: RiskConfig):
    """Per-sample multipliers t_i with loss = sum_i t_i * H_i.

    Positive (value 1) and negative (value 0) samples are averaged
    separately and the two means added; t_i folds that 1/n_partition
    together with the importance weight 1/(p_i * k).  In oracle mode the
    weights cancel against the pinned soft labels and t_i is simply 1/n.
    Also returns the raw (unclamped) p_i for gradient bookkeeping.
    """
    gamma = np.asarray(gamma)
    value = np.asarray(value)
    n = gamma.shape[0]
    if config.weighting == "oracle":
        return np.full(n, 1.0 / n), np.ones(n)
    pos = value == 1
    n_pos = int(pos.sum())
    n_neg = n - n_pos
    part = np.where(pos, 1.0 / max(n_pos, 1), 1.0 / max(n_neg, 1))
    if config.weighting == "corrected":
        return part / config.k, np.ones(n)
    d_gamma = np.asarray(soft)[np.arange(n), gamma]
    p_raw = np.where(pos, d_gamma, 1.0 - d_gamma)
    p = np.clip(p_raw, config.epsilon, 1.0)
    return part / (p * config.k), p_raw


def soft_targets(probs, gamma, value, config: RiskConfig, conditionals=None):
    """Mode-dependent soft labels for a batch of sigmoid outputs.

    Returns (soft, model_driven) where model_driven marks the entries that
    track the model's own probabilities (and so move when parameters move).
    corrected: probabilities with the determined class pinned to its value;
    estimated: the probabilities unchanged; oracle: the supplied true
    conditionals, pinned at the determined class.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n, k = probs.shape
    rows = np.arange(n)
    gamma = np.asarray(gamma, dtype=np.int64)
    value = np.asarray(value, dtype=np.int64)
    model_driven = np.zeros((n, k), dtype=bool)
    if config.weighting == "oracle":
        if conditionals is None:
            raise DmllError("oracle weighting needs caller-supplied true conditionals")
        d = np.asarray(conditionals, dtype=np.float64).copy()
        if d.shape != (n, k):
            raise DimensionError(f"conditionals must have shape {(n, k)}, got {d.shape}")
        d[rows, gamma] = value.astype(np.float64)
        return d, model_driven
    d = probs.copy()
    model_driven[:] = True
    if config.weighting == "corrected":
        d[rows, gamma] = value.astype(np.float64)
        model_driven[rows, gamma] = False
    return d, model_driven


def determined_batch_risk(probs, soft, gamma, value, config: RiskConfig) -> float:
    """Empirical determined risk of a batch.

    probs, soft: (n, k); gamma, value: (n,).  In corrected mode the caller
    passes soft labels already pinned at gamma (recover_soft_labels); in
    estimated mode raw sigmoid soft labels; in oracle mode the true
    conditionals, which this function pins at gamma itself before taking a
    plain mean.  The partition-mean form 1/(p*k) is kept for the first two
    modes; in oracle mode it is dropped because pinning makes every
    per-sample expectation equal the true risk with no reweighting, which
    is the form that is actually unbiased.
    """
    p = _as_rows(probs, config.k, "probs")
    d = _as_rows(soft, config.k, "soft")
    gamma = np.asarray(gamma, dtype=np.int64)
    value = np.asarray(value, dtype=np.int64)
    n = p.shape[0]
    if n == 0:
        raise DmllError("batch must be nonempty")
    if d.shape != p.shape or gamma.shape != (n,) or value.shape != (n,):
        raise DimensionError(
            f"batch shapes disagree: probs {p.shape}, soft {d.shape}, "
            f"gamma {gamma.shape}, value {value.shape}"
        )
    if config.weighting == "oracle":
        d = d.copy()
        d[np.arange(n), gamma] = value.astype(np.float64)
    t, _ = partition_coefficients(d, gamma, value, config)
    h = backend.soft_bce(clamp_probs(p, config.epsilon), d)
    if not np.all(np.isfinite(h)):
        raise NonFiniteLossError("non-finite per-sample loss in determined_batch_risk")
    return float(t @ h)
