"""Training loop: mini-batch risk minimization with periodic prompt updates.

Every epoch shuffles with an epoch-keyed generator, runs one AdamW step
per batch with prototypes fixed, and every prompt_update_period epochs
re-selects per-class lambda values on the final batch of that epoch.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import metrics, model, prompt
from .errors import DmllError, NonFiniteLossError, TrainingDiverged
from .risk import WEIGHTINGS, RiskConfig

LOSS_MODES = ("rc", "an", "wan", "bce_determined")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    prompt_update_period: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-2
    weight_decay: float = 5e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    sigma: int = 5
    loss_mode: str = "rc"
    weighting: str = "corrected"
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.epochs < 1 or self.prompt_update_period < 1 or self.batch_size < 1:
            raise DmllError("epochs, prompt_update_period and batch_size must be >= 1")
        if min(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_epsilon) <= 0:
            raise DmllError("learning rate, betas and adam_epsilon must be positive")
        if self.weight_decay < 0:
            raise DmllError("weight_decay must be >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise DmllError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.weighting not in WEIGHTINGS:
            raise DmllError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    metrics: dict | None
    lambdas: tuple


@dataclass
class TrainHistory:
    """Metrics before the first step, then exactly one record per epoch."""

    initial_metrics: dict | None
    records: list = field(default_factory=list)


def adamw_step(params: dict, grads: dict, moments, hyper, step_index: int):
    """One decoupled-weight-decay adaptive step; pure, returns new values.

    params/grads map names to arrays; moments is None on the first call or
    the (m, v) pair returned previously.  theta' = theta - lr * (mhat /
    (sqrt(vhat) + eps) + weight_decay * theta).
    """
    if step_index < 1:
        raise DmllError(f"step_index must be >= 1, got {step_index}")
    if set(params) != set(grads):
        raise DmllError(f"params and grads name different tensors: {set(params) ^ set(grads)}")
    if moments is None:
        moments = (
            {name: np.zeros_like(arr) for name, arr in params.items()},
            {name: np.zeros_like(arr) for name, arr in params.items()},
        )
    m_prev, v_prev = moments
    b1, b2 = hyper.adam_beta1, hyper.adam_beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(theta):
            raise DmllError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(theta)} for {name}")
        m = b1 * m_prev[name] + (1.0 - b1) * g
        v = b2 * v_prev[name] + (1.0 - b2) * np.square(g)
        mhat = m / (1.0 - b1**step_index)
        vhat = v / (1.0 - b2**step_index)
        new_params[name] = theta - hyper.learning_rate * (
            mhat / (np.sqrt(vhat) + hyper.adam_epsilon) + hyper.weight_decay * theta
        )
        new_m[name], new_v[name] = m, v
    return new_params, (new_m, new_v)


def _baseline_tensors(gamma, value, k: int, mode: str):
    """Targets and class weights for the an / wan / bce_determined losses.

    All three supervise the determined class with its observed value; an
    additionally assumes every other class negative, wan does the same but
    down-weights those assumed negatives by 1/(k-1), bce_determined ignores
    the other classes entirely.
    """
    n = gamma.shape[0]
    rows = np.arange(n)
    targets = np.zeros((n, k))
    targets[rows, gamma] = value
    if mode == "bce_determined":
        class_w = np.zeros((n, k))
        class_w[rows, gamma] = 1.0
    elif mode == "wan" and k > 1:
        class_w = np.full((n, k), 1.0 / (k - 1))
        class_w[rows, gamma] = 1.0
    else:
        class_w = np.ones((n, k))
    return targets, class_w


def _batch_loss_and_grads(params, X, gamma, value, cfg: TrainConfig, rc_config, conditionals):
    if cfg.loss_mode == "rc":
        loss, grads, _ = model.loss_and_gradient(params, X, gamma, value, rc_config, conditionals)
        return loss, grads
    targets, class_w = _baseline_tensors(gamma, value, rc_config.k, cfg.loss_mode)
    sample_w = np.full(gamma.shape[0], 1.0 / gamma.shape[0])
    loss, grads, _ = model.bce_loss_and_gradient(params, X, targets, class_w, sample_w, cfg.epsilon)
    return loss, grads


def _snapshot(params, eval_data) -> dict | None:
    """Ranking metrics on eval instances that have 1 <= |Y| <= k-1."""
    if eval_data is None or len(eval_data) == 0:
        return None
    k = eval_data.vocab.k
    keep = [i for i in eval_data.instances if 0 < len(i.positives) < k]
    if not keep:
        return None
    X = np.stack([i.features for i in keep])
    scores = model.forward_batch(params, X)[0]
    return metrics.all_metrics(metrics.ScoreMatrix(scores, [i.positives for i in keep]))


def train(
    data,
    large_vocab,
    provider,
    config: TrainConfig,
    eval_data=None,
    template: prompt.PromptTemplate = prompt.DEFAULT_TEMPLATE,
    true_conditionals=None,
):
    """Run the full loop; returns (ModelParams, PromptState, TrainHistory)."""
    n = len(data)
    if n == 0:
        raise DmllError("training dataset is empty")
    k = data.vocab.k
    if config.weighting == "oracle" and true_conditionals is None:
        raise DmllError("weighting='oracle' requires true_conditionals for every instance")
    rc_config = RiskConfig(k=k, epsilon=config.epsilon, weighting=config.weighting)
    X = data.feature_matrix()
    gamma = data.gammas()
    value = data.values()
    cond = None if true_conditionals is None else np.asarray(true_conditionals, dtype=np.float64)
    if cond is not None and cond.shape != (n, k):
        raise DmllError(f"true_conditionals must have shape {(n, k)}, got {cond.shape}")
    if eval_data is not None and eval_data.vocab.names != data.vocab.names:
        raise DmllError("eval vocabulary differs from training vocabulary")

    params = model.init(config.seed, d=X.shape[1], m=provider.dim, k=k)
    index = prompt.build_similarity_index(provider, template, data.vocab.names, large_vocab, config.sigma)
    state = prompt.initial_prompt_state(provider, template, index)
    params.prototypes = state.prototypes

    history = TrainHistory(initial_metrics=_snapshot(params, eval_data))
    moments = None
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        batch_losses = []
        last = None
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            last = idx
            cond_b = None if cond is None else cond[idx]
            try:
                loss, grads = _batch_loss_and_grads(
                    params, X[idx], gamma[idx], value[idx], config, rc_config, cond_b
                )
            except NonFiniteLossError as exc:
                raise TrainingDiverged(epoch, b, exc.loss) from exc
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            batch_losses.append(loss)
            step += 1
            tensors = {
                "projection": params.projection,
                "biases": params.biases,
                "temperature": np.float64(params.temperature),
            }
            gradients = {
                "projection": grads.projection,
                "biases": grads.biases,
                "temperature": np.float64(grads.temperature),
            }
            tensors, moments = adamw_step(tensors, gradients, moments, config, step)
            params.projection = tensors["projection"]
            params.biases = tensors["biases"]
            params.temperature = float(tensors["temperature"])
        if epoch % config.prompt_update_period == 0:
            state = prompt.select_optimal_prompt(
                params,
                X[last],
                gamma[last],
                value[last],
                index,
                rc_config,
                provider,
                template,
                state=state,
                conditionals=None if cond is None else cond[last],
            )
            params.prototypes = state.prototypes
        history.records.append(
            EpochRecord(
                epoch=epoch,
                loss=float(np.mean(batch_losses)),
                metrics=_snapshot(params, eval_data),
                lambdas=state.lambdas,
            )
        )
    return params, state, history


def history_to_jsonl(history: TrainHistory) -> str:
    lines = [json.dumps({"initial_metrics": history.initial_metrics})]
    for rec in history.records:
        lines.append(
            json.dumps(
                {
                    "epoch": rec.epoch,
                    "loss": rec.loss,
                    "metrics": rec.metrics,
                    "lambdas": list(rec.lambdas),
                }
            )
        )
    return "\n".join(lines) + "\n"


def history_from_jsonl(text: str) -> TrainHistory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DmllError("empty history file")
    head = json.loads(lines[0])
    history = TrainHistory(initial_metrics=head.get("initial_metrics"))
    for ln in lines[1:]:
        rec = json.loads(ln)
        history.records.append(
            EpochRecord(rec["epoch"], rec["loss"], rec["metrics"], tuple(rec["lambdas"]))
        )
    return history


def history_to_csv(history: TrainHistory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["epoch", "loss", "map", "one_error", "ranking_loss", "coverage", "lambdas"])
    rows = [(0, "", history.initial_metrics, None)] + [
        (r.epoch, r.loss, r.metrics, r.lambdas) for r in history.records
    ]
    for epoch, loss, snap, lambdas in rows:
        snap = snap or {}
        writer.writerow(
            [
                epoch,
                loss,
                snap.get("map", ""),
                snap.get("one_error", ""),
                snap.get("ranking_loss", ""),
                snap.get("coverage", ""),
                "" if lambdas is None else "|".join(str(v) for v in lambdas),
            ]
        )
    return buf.getvalue()
