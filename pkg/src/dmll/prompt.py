"""Similarity-based prompt machinery.

Each class is scored against the embedding of a composed prompt: a prefix
naming the class, optionally extended with the lambda most similar labels
drawn from a large vocabulary.  Per-class lambda values are chosen to
minimize the determined batch risk.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from . import embfile
from .errors import DimensionError, DmllError
from .risk import RiskConfig, determined_batch_risk, sigmoid, soft_targets

CLASS_SLOT = "{class}"


@dataclass(frozen=True)
class PromptTemplate:
    prefix: str = "a photo of a {class}"
    connector: str = "similar to"
    separator: str = ", "

    def __post_init__(self):
        if self.prefix.count(CLASS_SLOT) != 1:
            raise DmllError(f"template prefix must contain exactly one {CLASS_SLOT} slot")


DEFAULT_TEMPLATE = PromptTemplate()


def compose_prompt_text(template: PromptTemplate, class_name: str, similar=()) -> str:
    if not class_name:
        raise DmllError("class name must be nonempty")
    text = template.prefix.replace(CLASS_SLOT, class_name)
    similar = list(similar)
    if similar:
        text = f"{text} {template.connector} {template.separator.join(similar)}"
    return text


class SyntheticProvider:
    """Deterministic stand-in for a text encoder.

    Every token hashes (keyed by the seed) to a fixed Gaussian vector; a
    prompt embeds as the normalized mean of its token vectors.  Note the
    template separator glues punctuation onto tokens, so different label
    orders generally tokenize differently and embed differently.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise DmllError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed
        self._key = hashlib.blake2b(
            f"dmll-synth-{seed}".encode("utf-8"), digest_size=16
        ).digest()
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16, key=self._key).digest()
            words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
            vec = np.random.default_rng(np.random.SeedSequence(words)).standard_normal(self.dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, tokens) -> np.ndarray:
        tokens = list(tokens)
        if not tokens:
            raise DmllError("cannot embed an empty token sequence")
        mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise DmllError("token vectors cancelled to a zero embedding")
        return mean / norm


class FileProvider:
    """Embeddings precomputed elsewhere, keyed by the exact prompt text."""

    def __init__(self, path: str):
        raw = embfile.read_embeddings(path)
        if not raw:
            raise DmllError(f"{path}: embedding file has no entries")
        self.dim = next(iter(raw.values())).shape[0]
        self._table = {}
        for key, vec in raw.items():
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise DmllError(f"{path}: zero vector for key {key!r}")
            self._table[key] = vec / norm

    def embed(self, tokens) -> np.ndarray:
        key = " ".join(tokens)
        vec = self._table.get(key)
        if vec is None:
            raise DmllError(f"no precomputed embedding for prompt {key!r}")
        return vec


def embed_prompt(provider, template: PromptTemplate, class_name: str, similar=()) -> np.ndarray:
    """Unit embedding of the composed prompt; lambda = len(similar)."""
    return provider.embed(compose_prompt_text(template, class_name, similar).split())


@dataclass(frozen=True)
class SimilarLabelIndex:
    """Per target class, up to sigma (vocabulary label, cosine) candidates,
    similarity descending with ties broken by label string ascending."""

    targets: tuple
    entries: tuple  # per target, tuple of (label, similarity)

    def labels_for(self, j: int, lam: int) -> list:
        if lam > len(self.entries[j]):
            raise DmllError(
                f"lambda {lam} exceeds the {len(self.entries[j])} similar labels of class {j}"
            )
        return [label for label, _ in self.entries[j][:lam]]


def build_similarity_index(provider, template, targets, vocabulary, sigma: int) -> SimilarLabelIndex:
    """Rank a large vocabulary against each target by prefix-prompt cosine."""
    if sigma < 0:
        raise DmllError(f"sigma must be >= 0, got {sigma}")
    vocab = sorted(set(vocabulary))
    if not vocab:
        raise DmllError("similar-label vocabulary must be nonempty")
    targets = tuple(targets)
    tvecs = np.stack([embed_prompt(provider, template, t) for t in targets])
    vvecs = np.stack([embed_prompt(provider, template, v) for v in vocab])
    sims = tvecs @ vvecs.T
    entries = []
    for j, target in enumerate(targets):
        ranked = sorted(
            ((label, float(s)) for label, s in zip(vocab, sims[j]) if label != target),
            key=lambda pair: (-pair[1], pair[0]),
        )
        entries.append(tuple(ranked[:sigma]))
    return SimilarLabelIndex(targets, tuple(entries))


def compose_prototypes(provider, template, index: SimilarLabelIndex, lambdas) -> np.ndarray:
    """Row j = embedding of class j's prompt with its first lambda_j similar labels."""
    rows = [
        embed_prompt(provider, template, target, index.labels_for(j, int(lam)))
        for j, (target, lam) in enumerate(zip(index.targets, lambdas))
    ]
    return np.stack(rows)


@dataclass(frozen=True)
class PromptState:
    lambdas: tuple  # per-class chosen similar-label count
    prototypes: np.ndarray  # (k, m) unit rows


def initial_prompt_state(provider, template, index: SimilarLabelIndex) -> PromptState:
    lambdas = (0,) * len(index.targets)
    return PromptState(lambdas, compose_prototypes(provider, template, index, lambdas))


def _risk_from_logits(logits, gamma, value, config, conditionals):
    probs = sigmoid(logits)
    d, _ = soft_targets(probs, gamma, value, config, conditionals)
    return determined_batch_risk(probs, d, gamma, value, config)


def select_optimal_prompt(
    params,
    X,
    gamma,
    value,
    index: SimilarLabelIndex,
    config: RiskConfig,
    provider,
    template: PromptTemplate,
    state: PromptState | None = None,
    conditionals=None,
) -> PromptState:
    """Coordinate-descent choice of lambda_j minimizing the batch risk.

    Classes are visited once in index order; for each, every lambda in
    [0, sigma_j] is scored with all other rows fixed and the smallest
    arg-min kept.  The incumbent is always among the candidates, so the
    selected state never scores worse than the state passed in.  Projected
    features are computed once and shared across candidates.
    """
    gamma = np.asarray(gamma, dtype=np.int64)
    value = np.asarray(value, dtype=np.int64)
    if gamma.size == 0:
        raise DmllError("selection batch must be nonempty")
    if state is None:
        state = initial_prompt_state(provider, template, index)
    X = np.asarray(X, dtype=np.float64)
    z = X @ params.projection.T
    r = np.linalg.norm(z, axis=1)
    zhat = z / np.where(r > 0.0, r, 1.0)[:, None]

    prototypes = state.prototypes.copy()
    lambdas = list(state.lambdas)
    logits = params.temperature * (zhat @ prototypes.T) + params.biases
    for j, target in enumerate(index.targets):
        best_lam, best_loss, best_row = None, None, None
        for lam in range(len(index.entries[j]) + 1):
            row = embed_prompt(provider, template, target, index.labels_for(j, lam))
            logits[:, j] = params.temperature * (zhat @ row) + params.biases[j]
            loss = _risk_from_logits(logits, gamma, value, config, conditionals)
            if best_loss is None or loss < best_loss:
                best_lam, best_loss, best_row = lam, loss, row
        prototypes[j] = best_row
        lambdas[j] = best_lam
        logits[:, j] = params.temperature * (zhat @ best_row) + params.biases[j]
    return PromptState(tuple(lambdas), prototypes)
