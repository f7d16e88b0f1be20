"""Cosine-prototype scoring model with exact analytic gradients.

logit_j = temperature * cos(projection @ x, prototype_j) + bias_j, squashed
through a sigmoid into per-class probabilities.  Prototypes come from the
prompt module and stay fixed during gradient steps; projection, biases and
temperature are the trainable parameters.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DataFormatError, DimensionError, DmllError, NonFiniteLossError
from .fileio import atomic_write_text
from .risk import RiskConfig, clamp_probs, partition_coefficients, sigmoid, soft_targets


@dataclass
class ModelParams:
    projection: np.ndarray  # (m, d)
    biases: np.ndarray  # (k,)
    temperature: float
    prototypes: np.ndarray  # (k, m), unit rows

    @property
    def d(self) -> int:
        return self.projection.shape[1]

    @property
    def m(self) -> int:
        return self.projection.shape[0]

    @property
    def k(self) -> int:
        return self.biases.shape[0]


@dataclass
class ModelGrads:
    projection: np.ndarray
    biases: np.ndarray
    temperature: float


def validate_params(params: ModelParams) -> None:
    w, b, p = params.projection, params.biases, params.prototypes
    if w.ndim != 2 or b.ndim != 1 or p.ndim != 2 or p.shape != (b.shape[0], w.shape[0]):
        raise DimensionError(
            f"inconsistent parameter shapes: projection {w.shape}, "
            f"biases {b.shape}, prototypes {p.shape}"
        )
    for name, arr in (("projection", w), ("biases", b), ("prototypes", p)):
        if not np.all(np.isfinite(arr)):
            raise DmllError(f"non-finite values in {name}")
    if not np.isfinite(params.temperature) or params.temperature <= 0:
        raise DmllError(f"temperature must be a positive finite number, got {params.temperature}")
    norms = np.linalg.norm(p, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise DmllError("prototype rows must have unit norm (+-1e-6)")


def init(seed: int, d: int, m: int, k: int) -> ModelParams:
    """Seeded start: projection ~ N(0, 1/d), zero biases, temperature 10.

    Prototype rows are random unit vectors; the trainer replaces them with
    composed prompt embeddings before the first step.
    """
    if min(d, m, k) < 1:
        raise DmllError(f"dimensions must be positive, got d={d}, m={m}, k={k}")
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((m, d)) / np.sqrt(d)
    prototypes = rng.standard_normal((k, m))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    return ModelParams(projection, np.zeros(k), 10.0, prototypes)


@dataclass
class _Forward:
    zhat: np.ndarray  # (n, m) unit (or zero) projected features
    rnorm: np.ndarray  # (n,) projection norms
    cosines: np.ndarray  # (n, k)
    logits: np.ndarray  # (n, k)
    probs: np.ndarray  # (n, k)


def _forward(params: ModelParams, X: np.ndarray) -> _Forward:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise DimensionError(f"features must have shape (n, {params.d}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DmllError("non-finite features")
    z = X @ params.projection.T
    r = np.linalg.norm(z, axis=1)
    safe = np.where(r > 0.0, r, 1.0)
    zhat = z / safe[:, None]  # zero rows stay zero: cosine 0 by convention
    cos = zhat @ params.prototypes.T
    logits = params.temperature * cos + params.biases
    return _Forward(zhat, r, cos, logits, sigmoid(logits))


def forward_batch(params: ModelParams, X: np.ndarray):
    fwd = _forward(params, X)
    return fwd.logits, fwd.probs


def forward(params: ModelParams, features: np.ndarray):
    logits, probs = forward_batch(params, np.asarray(features, dtype=np.float64)[None, :])
    return logits[0], probs[0]


def _backprop(params: ModelParams, X: np.ndarray, fwd: _Forward, g_logits: np.ndarray) -> ModelGrads:
    """Push a per-logit gradient back to projection, biases, temperature."""
    tau = params.temperature
    a = g_logits @ params.prototypes  # (n, m)
    along = np.einsum("ij,ij->i", g_logits, fwd.cosines)
    safe = np.where(fwd.rnorm > 0.0, fwd.rnorm, 1.0)
    g_z = tau * (a - along[:, None] * fwd.zhat) / safe[:, None]
    g_z[fwd.rnorm == 0.0] = 0.0
    return ModelGrads(
        projection=g_z.T @ np.asarray(X, dtype=np.float64),
        biases=g_logits.sum(axis=0),
        temperature=float(along.sum()),
    )


def evaluate_loss(
    params: ModelParams,
    X: np.ndarray,
    soft: np.ndarray,
    coeffs: np.ndarray,
    epsilon: float,
) -> float:
    """sum_i coeffs_i * H(probs_i, soft_i) with soft and coeffs held fixed.

    This is the surface the stop-gradient analytic gradient differentiates;
    finite-difference checks probe it directly.
    """
    fwd = _forward(params, X)
    h = backend.soft_bce(clamp_probs(fwd.probs, epsilon), np.asarray(soft, dtype=np.float64))
    return float(np.asarray(coeffs) @ h)


def loss_and_gradient(
    params: ModelParams,
    X: np.ndarray,
    gamma: np.ndarray,
    value: np.ndarray,
    config: RiskConfig,
    conditionals: np.ndarray | None = None,
):
    """Determined batch risk and its exact gradient.

    Returns (loss, ModelGrads, aux) where aux holds the soft labels and
    per-sample coefficients actually used, so callers can re-evaluate the
    identical loss surface (evaluate_loss) after a parameter update.
    """
    gamma = np.asarray(gamma, dtype=np.int64)
    value = np.asarray(value, dtype=np.int64)
    if gamma.size == 0:
        raise DmllError("batch must be nonempty")
    fwd = _forward(params, X)
    n, k = fwd.probs.shape
    rows = np.arange(n)
    d, model_driven = soft_targets(fwd.probs, gamma, value, config, conditionals)
    t, p_raw = partition_coefficients(d, gamma, value, config)
    probs_c = clamp_probs(fwd.probs, config.epsilon)
    h = backend.soft_bce(probs_c, d)
    if not np.all(np.isfinite(h)):
        raise NonFiniteLossError("non-finite per-sample loss")
    loss = float(t @ h)

    unclamped = (fwd.probs >= config.epsilon) & (fwd.probs <= 1.0 - config.epsilon)
    g_logits = t[:, None] * (fwd.probs - d) * unclamped
    if not config.stop_gradient_on_soft_labels:
        # d follows sigmoid(logit) wherever it is model-driven.
        dsig = fwd.probs * (1.0 - fwd.probs)
        ell_gap = np.log1p(-probs_c) - np.log(probs_c)  # ell_j - ellbar_j
        g_logits = g_logits + t[:, None] * dsig * ell_gap * model_driven
        if config.weighting == "estimated":
            # weight path: t_i = part_i / (k * clip(p_raw)); p_raw = d_gamma or 1 - d_gamma
            active = (p_raw > config.epsilon) & (p_raw < 1.0)
            part = t * np.clip(p_raw, config.epsilon, 1.0) * config.k
            dt_dp = -part / (config.k * np.clip(p_raw, config.epsilon, 1.0) ** 2)
            sign = np.where(value == 1, 1.0, -1.0)
            dp_du = sign * dsig[rows, gamma]
            g_logits[rows, gamma] += active * dt_dp * h * dp_du
    grads = _backprop(params, X, fwd, g_logits)
    aux = {"soft": d, "coeffs": t, "logits": fwd.logits, "probs": fwd.probs}
    return loss, grads, aux


def bce_loss_and_gradient(
    params: ModelParams,
    X: np.ndarray,
    targets: np.ndarray,
    class_weights: np.ndarray,
    sample_weights: np.ndarray,
    epsilon: float,
):
    """Weighted BCE against constant targets; shared by the baseline losses.

    loss = sum_i sw_i * sum_j Cw_ij * [D_ij*(-log f_ij) + (1-D_ij)*(-log(1-f_ij))]
    """
    fwd = _forward(params, X)
    D = np.asarray(targets, dtype=np.float64)
    Cw = np.asarray(class_weights, dtype=np.float64)
    sw = np.asarray(sample_weights, dtype=np.float64)
    probs_c = clamp_probs(fwd.probs, epsilon)
    per = -(D * np.log(probs_c) + (1.0 - D) * np.log1p(-probs_c)) * Cw
    loss = float(sw @ per.sum(axis=1))
    if not np.isfinite(loss):
        raise NonFiniteLossError("non-finite loss", loss)
    unclamped = (fwd.probs >= epsilon) & (fwd.probs <= 1.0 - epsilon)
    g_logits = sw[:, None] * Cw * (fwd.probs - D) * unclamped
    grads = _backprop(params, X, fwd, g_logits)
    return loss, grads, {"logits": fwd.logits, "probs": fwd.probs}


def save_model(params: ModelParams, path: str) -> None:
    validate_params(params)
    payload = {
        "d": params.d,
        "m": params.m,
        "k": params.k,
        "projection": params.projection.tolist(),
        "biases": params.biases.tolist(),
        "temperature": float(params.temperature),
        "prototypes": params.prototypes.tolist(),
    }
    atomic_write_text(path, json.dumps(payload) + "\n")


def load_model(path: str, expect_k: int | None = None) -> ModelParams:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read model file: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not a valid model file: {exc}") from exc
    needed = {"d", "m", "k", "projection", "biases", "temperature", "prototypes"}
    if not isinstance(payload, dict) or not needed <= set(payload):
        raise DataFormatError(f"{path}: model file missing fields {sorted(needed - set(payload))}")
    d, m, k = payload["d"], payload["m"], payload["k"]
    if expect_k is not None and k != expect_k:
        raise DataFormatError(f"{path}: model has k={k} but vocabulary has k={expect_k}")
    params = ModelParams(
        projection=np.asarray(payload["projection"], dtype=np.float64),
        biases=np.asarray(payload["biases"], dtype=np.float64),
        temperature=float(payload["temperature"]),
        prototypes=np.asarray(payload["prototypes"], dtype=np.float64),
    )
    if params.projection.shape != (m, d) or params.biases.shape != (k,) or params.prototypes.shape != (k, m):
        raise DataFormatError(f"{path}: array shapes disagree with header d={d}, m={m}, k={k}")
    validate_params(params)
    return params
