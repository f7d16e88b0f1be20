"""Ground-truth machinery used to verify the closed forms.

Exact powerset enumeration of the expected set loss, synthetic label
worlds with known per-class conditionals, Monte Carlo unbiasedness
reports for the determined risk estimator, and deliberately naive
counting implementations of the four ranking metrics.
"""

from dataclasses import dataclass

import numpy as np

from . import backend, dataset, model
from .errors import DimensionError, DmllError
from .risk import (
    RiskConfig,
    clamp_probs,
    determined_batch_risk,
    partition_coefficients,
    sigmoid,
    soft_targets,
)

ENUM_CAP = 20


def enumerate_expected_loss(probs: np.ndarray, conditionals: np.ndarray) -> float:
    """Expected set BCE under independent conditionals, by explicit 2^k sum."""
    probs = np.asarray(probs, dtype=np.float64)
    conditionals = np.asarray(conditionals, dtype=np.float64)
    if probs.ndim != 1 or probs.shape != conditionals.shape:
        raise DimensionError(
            f"probs {probs.shape} and conditionals {conditionals.shape} must be equal-length vectors"
        )
    k = probs.shape[0]
    if k > ENUM_CAP:
        raise DmllError(f"refusing to enumerate 2^{k} subsets (cap is k <= {ENUM_CAP})")
    if np.any(conditionals < 0.0) or np.any(conditionals > 1.0):
        raise DmllError("conditionals must lie in [0, 1]")
    return float(backend.powerset_expected_loss(probs, conditionals))


@dataclass(frozen=True)
class SyntheticWorld:
    """p(y^j = 1 | x) = sigmoid(weights_j . x + biases_j), labels independent."""

    weights: np.ndarray  # (k, d)
    biases: np.ndarray  # (k,)
    seed: int

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def conditionals(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(np.asarray(X, dtype=np.float64) @ self.weights.T + self.biases)


def make_world(seed: int, k: int, d: int, weight_scale: float = 1.0, bias_shift: float = 0.0) -> SyntheticWorld:
    """Random world; bias_shift moves every conditional toward 0 or 1."""
    rng = np.random.default_rng(seed)
    weights = weight_scale * rng.standard_normal((k, d)) / np.sqrt(d)
    biases = bias_shift + 0.5 * rng.standard_normal(k)
    return SyntheticWorld(weights, biases, seed)


def _sample_arrays(world: SyntheticWorld, n: int, rng: np.random.Generator):
    """(features, label matrix, conditionals) drawn from the world."""
    X = rng.standard_normal((n, world.d))
    cond = world.conditionals(X)
    Y = rng.random((n, world.k)) < cond
    return X, Y, cond


def synth_generate(world: SyntheticWorld, n: int, seed: int | None = None):
    """Seeded draw of n instances with full labels, determined labels, and
    the true conditionals used to generate them."""
    if n < 1:
        raise DmllError(f"n must be >= 1, got {n}")
    seed = world.seed if seed is None else seed
    X, Y, cond = _sample_arrays(world, n, np.random.default_rng([seed, n]))
    vocab = dataset.LabelVocabulary(tuple(f"label{j:03d}" for j in range(world.k)))
    instances = [
        dataset.MultiLabelInstance(f"i{i:06d}", X[i], frozenset(np.flatnonzero(Y[i]).tolist()))
        for i in range(n)
    ]
    full = dataset.MultiLabelDataset(vocab, instances)
    determined = dataset.generate_determined(full, seed)
    return full, determined, cond


def unbiasedness_report(
    world: SyntheticWorld,
    params: model.ModelParams,
    n_samples: int,
    seed: int = 0,
    weighting: str = "oracle",
    epsilon: float = 1e-7,
) -> dict:
    """Monte Carlo comparison of the determined risk estimator to the true risk.

    The true risk is estimated from fully labeled samples; the determined
    estimate from an independent stream of (gamma, value) samples.  Only
    oracle weighting carries an unbiasedness claim; other modes are
    reported for inspection with the claim flag off.
    """
    if n_samples < 10_000:
        raise DmllError(f"n_samples must be >= 10000 for a stable report, got {n_samples}")
    config = RiskConfig(k=world.k, epsilon=epsilon, weighting=weighting)
    rng_true = np.random.default_rng([seed, 1])
    rng_det = np.random.default_rng([seed, 2])

    X, Y, _ = _sample_arrays(world, n_samples, rng_true)
    probs = clamp_probs(model.forward_batch(params, X)[1], epsilon)
    losses = backend.set_bce(probs, Y)
    true_risk = float(losses.mean())
    true_se = float(losses.std(ddof=1) / np.sqrt(n_samples))

    X2, Y2, cond2 = _sample_arrays(world, n_samples, rng_det)
    gamma = rng_det.integers(world.k, size=n_samples)
    value = Y2[np.arange(n_samples), gamma].astype(np.int64)
    probs2 = model.forward_batch(params, X2)[1]
    soft, _ = soft_targets(probs2, gamma, value, config, conditionals=cond2)
    estimated = determined_batch_risk(probs2, soft, gamma, value, config)
    # per-sample spread of the same estimator, for the combined z-score
    per_sample = _per_sample_terms(probs2, soft, gamma, value, config)
    est_se = float(per_sample.std(ddof=1) / np.sqrt(n_samples))

    z = abs(estimated - true_risk) / float(np.hypot(true_se, est_se))
    return {
        "weighting": weighting,
        "unbiasedness_claim": weighting == "oracle",
        "k": world.k,
        "d": world.d,
        "n_samples": n_samples,
        "true_risk": true_risk,
        "true_se": true_se,
        "estimated_risk": float(estimated),
        "estimated_se": est_se,
        "z_score": float(z),
    }


def _per_sample_terms(probs, soft, gamma, value, config: RiskConfig) -> np.ndarray:
    """n times each sample's contribution to determined_batch_risk."""
    n = probs.shape[0]
    d = np.asarray(soft, dtype=np.float64)
    if config.weighting == "oracle":
        d = d.copy()
        d[np.arange(n), gamma] = np.asarray(value, dtype=np.float64)
    t, _ = partition_coefficients(d, gamma, value, config)
    h = backend.soft_bce(clamp_probs(np.asarray(probs, dtype=np.float64), config.epsilon), d)
    return n * t * h


def gradient_check(
    params: model.ModelParams,
    X: np.ndarray,
    gamma: np.ndarray,
    value: np.ndarray,
    config: RiskConfig,
    step: float = 1e-5,
    conditionals=None,
) -> float:
    """Worst per-coordinate discrepancy, analytic vs central differences.

    With stop-gradient soft labels the analytic gradient differentiates the
    loss at frozen (soft, coeffs); the probe therefore perturbs
    evaluate_loss on exactly those frozen tensors.  Without stop-gradient
    the full loss is recomputed per perturbation.  Errors are relative
    where either side is appreciable, absolute where both vanish.
    """
    _, grads, aux = model.loss_and_gradient(params, X, gamma, value, config, conditionals)
    if config.stop_gradient_on_soft_labels:
        soft, coeffs = aux["soft"], aux["coeffs"]

        def f() -> float:
            return model.evaluate_loss(params, X, soft, coeffs, config.epsilon)

    else:

        def f() -> float:
            return model.loss_and_gradient(params, X, gamma, value, config, conditionals)[0]

    worst = 0.0

    def probe(read, write, analytic):
        nonlocal worst
        base = read()
        write(base + step)
        hi = f()
        write(base - step)
        lo = f()
        write(base)
        numeric = (hi - lo) / (2.0 * step)
        scale = max(abs(analytic), abs(numeric))
        err = abs(analytic - numeric) if scale < 1e-6 else abs(analytic - numeric) / scale
        worst = max(worst, err)

    for arr, g in ((params.projection, grads.projection), (params.biases, grads.biases)):
        for idx in np.ndindex(arr.shape):
            probe(
                lambda a=arr, i=idx: a[i],
                lambda x, a=arr, i=idx: a.__setitem__(i, x),
                g[idx],
            )

    def read_tau():
        return params.temperature

    def write_tau(x):
        params.temperature = float(x)

    probe(read_tau, write_tau, grads.temperature)
    return worst


def gradient_check_random(
    seed: int,
    weighting: str = "corrected",
    stop_gradient: bool = True,
    step: float = 1e-5,
) -> float:
    """gradient_check on one random small configuration."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    m = int(rng.integers(2, 5))
    k = int(rng.integers(2, 6))
    n = int(rng.integers(2, 7))
    params = model.init(seed, d, m, k)
    params.biases = rng.normal(0.0, 0.5, k)
    params.temperature = float(rng.uniform(2.0, 8.0))
    X = rng.standard_normal((n, d))
    gamma = rng.integers(k, size=n)
    value = rng.integers(2, size=n)
    conditionals = rng.uniform(0.05, 0.95, (n, k)) if weighting == "oracle" else None
    config = RiskConfig(k=k, weighting=weighting, stop_gradient_on_soft_labels=stop_gradient)
    return gradient_check(params, X, gamma, value, config, step=step, conditionals=conditionals)


def average_precision_bruteforce(scores: np.ndarray, truths) -> float:
    """Macro AP by explicit pair counting; no sorting, no vector tricks."""
    n, k = scores.shape
    aps = []
    for j in range(k):
        positives = [i for i in range(n) if j in truths[i]]
        if not positives:
            continue
        ap_terms = []
        for i in positives:
            ahead = [
                i2
                for i2 in range(n)
                if scores[i2, j] > scores[i, j] or (scores[i2, j] == scores[i, j] and i2 < i)
            ]
            rank = 1 + len(ahead)
            pos_ahead = 1 + sum(1 for i2 in ahead if j in truths[i2])
            ap_terms.append(pos_ahead / rank)
        aps.append(sum(ap_terms) / len(ap_terms))
    if not aps:
        raise DmllError("mAP undefined: no class has a positive instance")
    return sum(aps) / len(aps)


def one_error_bruteforce(scores: np.ndarray, truths) -> float:
    n, k = scores.shape
    wrong = 0
    for i in range(n):
        best = 0
        for j in range(1, k):
            if scores[i, j] > scores[i, best]:
                best = j
        wrong += best not in truths[i]
    return wrong / n


def ranking_loss_bruteforce(scores: np.ndarray, truths) -> float:
    n, k = scores.shape
    total = 0.0
    for i in range(n):
        rel = [j for j in range(k) if j in truths[i]]
        irr = [j for j in range(k) if j not in truths[i]]
        bad = 0.0
        for r in rel:
            for q in irr:
                if scores[i, q] > scores[i, r]:
                    bad += 1.0
                elif scores[i, q] == scores[i, r]:
                    bad += 0.5
        total += bad / (len(rel) * len(irr))
    return total / n


def coverage_bruteforce(scores: np.ndarray, truths) -> float:
    n, k = scores.shape
    total = 0.0
    for i in range(n):
        worst = 0
        for j in truths[i]:
            rank = 1 + sum(
                1
                for j2 in range(k)
                if scores[i, j2] > scores[i, j] or (scores[i, j2] == scores[i, j] and j2 < j)
            )
            worst = max(worst, rank)
        total += (worst - 1) / k
    return total / n
