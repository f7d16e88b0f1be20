"""Multi-label and determined-label datasets.

A determined dataset replaces each full positive-label set with a single
(gamma, value) pair: gamma is a class index drawn uniformly at random and
value records whether gamma is one of the instance's positive labels.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import embfile
from .errors import DataFormatError, DimensionError, DmllError
from .fileio import atomic_write_text


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered, index-addressable label names."""

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if any(not isinstance(n, str) or not n for n in self.names):
            raise DmllError("vocabulary names must be non-empty strings")
        if len(set(self.names)) != len(self.names):
            raise DmllError("vocabulary names must be unique")

    @property
    def k(self) -> int:
        return len(self.names)


@dataclass(eq=False)
class MultiLabelInstance:
    id: str
    features: np.ndarray
    positives: frozenset


@dataclass(eq=False)
class DeterminedInstance:
    id: str
    features: np.ndarray
    gamma: int
    value: int


def _check_instances(instances, k: int) -> None:
    seen = set()
    dim = None
    for inst in instances:
        if inst.id in seen:
            raise DataFormatError(f"duplicate instance id {inst.id!r}")
        seen.add(inst.id)
        feats = np.asarray(inst.features, dtype=np.float64)
        if feats.ndim != 1:
            raise DimensionError(f"instance {inst.id!r}: features must be 1-d")
        if dim is None:
            dim = feats.shape[0]
        elif feats.shape[0] != dim:
            raise DimensionError(
                f"instance {inst.id!r}: feature length {feats.shape[0]} != {dim}"
            )
        if not np.all(np.isfinite(feats)):
            raise DmllError(f"instance {inst.id!r}: non-finite features")
        inst.features = feats
        if isinstance(inst, MultiLabelInstance):
            inst.positives = frozenset(int(j) for j in inst.positives)
            if any(j < 0 or j >= k for j in inst.positives):
                raise DmllError(f"instance {inst.id!r}: label index out of range [0, {k})")
        else:
            if not 0 <= inst.gamma < k:
                raise DmllError(f"instance {inst.id!r}: gamma {inst.gamma} out of range [0, {k})")
            if inst.value not in (0, 1):
                raise DmllError(f"instance {inst.id!r}: value {inst.value!r} not in {{0, 1}}")


@dataclass
class MultiLabelDataset:
    vocab: LabelVocabulary
    instances: list = field(default_factory=list)

    def __post_init__(self):
        _check_instances(self.instances, self.vocab.k)

    def __len__(self) -> int:
        return len(self.instances)

    def feature_matrix(self) -> np.ndarray:
        return np.stack([i.features for i in self.instances]) if self.instances else np.zeros((0, 0))

    def positive_sets(self) -> list:
        return [i.positives for i in self.instances]


@dataclass
class DeterminedDataset:
    vocab: LabelVocabulary
    instances: list = field(default_factory=list)

    def __post_init__(self):
        _check_instances(self.instances, self.vocab.k)

    def __len__(self) -> int:
        return len(self.instances)

    def feature_matrix(self) -> np.ndarray:
        return np.stack([i.features for i in self.instances]) if self.instances else np.zeros((0, 0))

    def gammas(self) -> np.ndarray:
        return np.array([i.gamma for i in self.instances], dtype=np.int64)

    def values(self) -> np.ndarray:
        return np.array([i.value for i in self.instances], dtype=np.int64)


@dataclass(frozen=True)
class DatasetStats:
    n: int
    k: int
    positive_fraction: float
    gamma_histogram: np.ndarray
    chi_square: float
    chi_square_pvalue: float


def _draw_gamma(seed: int, instance_id: str, k: int) -> int:
    # Counter keyed by the instance id, so draws do not depend on dataset order.
    digest = hashlib.blake2b(instance_id.encode("utf-8"), digest_size=16).digest()
    counter = [
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:], "little"),
        0,
        0,
    ]
    gen = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    return int(gen.integers(k))


def generate_determined(data: MultiLabelDataset, seed: int) -> DeterminedDataset:
    """Draw one uniform class per instance and record its membership bit."""
    k = data.vocab.k
    if k < 1:
        raise DmllError("cannot generate determined labels from an empty vocabulary")
    out = []
    for inst in data.instances:
        gamma = _draw_gamma(seed, inst.id, k)
        value = 1 if gamma in inst.positives else 0
        out.append(DeterminedInstance(inst.id, inst.features, gamma, value))
    return DeterminedDataset(data.vocab, out)


def compute_stats(data: DeterminedDataset) -> DatasetStats:
    """Counts plus a chi-square fit of the gamma histogram against uniform."""
    if not data.instances:
        raise DmllError("cannot compute stats of an empty dataset")
    k = data.vocab.k
    hist = np.bincount(data.gammas(), minlength=k).astype(np.int64)
    chi2, pvalue = stats.chisquare(hist)
    return DatasetStats(
        n=len(data),
        k=k,
        positive_fraction=float(np.mean(data.values())),
        gamma_histogram=hist,
        chi_square=float(chi2),
        chi_square_pvalue=float(pvalue),
    )


def random_multilabel_dataset(
    seed: int,
    k: int,
    n: int,
    mean_positives: float = 1.38,
    feature_dim: int = 8,
) -> MultiLabelDataset:
    """Synthetic fully labeled data with |Y| = 1 + Binomial(k-1, p).

    p is set so E|Y| = mean_positives, hence the expected determined-label
    positive fraction is mean_positives / k.
    """
    if not 1.0 <= mean_positives <= k:
        raise DmllError(f"mean_positives must lie in [1, {k}], got {mean_positives}")
    vocab = LabelVocabulary(tuple(f"label{j:03d}" for j in range(k)))
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, feature_dim))
    extra = rng.binomial(k - 1, (mean_positives - 1.0) / (k - 1), size=n) if k > 1 else np.zeros(n, dtype=np.int64)
    instances = []
    for i in range(n):
        positives = frozenset(int(j) for j in rng.choice(k, size=1 + int(extra[i]), replace=False))
        instances.append(MultiLabelInstance(f"i{i:06d}", feats[i], positives))
    return MultiLabelDataset(vocab, instances)


_FULL_KEYS = {"id", "features", "positives"}
_DET_KEYS = {"id", "features", "gamma", "value"}


def save_dataset(dataset, path: str, features_path: str | None = None) -> None:
    """Write JSON lines: a {"k", "names"} header, then one instance per line.

    With features_path, feature vectors go to a float32 binary sidecar keyed
    by instance id and are omitted from the JSON lines.
    """
    lines = [json.dumps({"k": dataset.vocab.k, "names": list(dataset.vocab.names)}, separators=(",", ":"))]
    sidecar: dict[str, np.ndarray] = {}
    for inst in dataset.instances:
        rec: dict = {"id": inst.id}
        if features_path is None:
            rec["features"] = inst.features.tolist()
        else:
            sidecar[inst.id] = inst.features
        if isinstance(inst, MultiLabelInstance):
            rec["positives"] = sorted(inst.positives)
        else:
            rec["gamma"] = inst.gamma
            rec["value"] = inst.value
        lines.append(json.dumps(rec, separators=(",", ":")))
    atomic_write_text(path, "\n".join(lines) + "\n")
    if features_path is not None:
        embfile.write_embeddings(features_path, sidecar)


def _parse_features(rec: dict, lineno: int, sidecar: dict | None):
    if "features" in rec:
        feats = rec["features"]
        if not isinstance(feats, list) or not all(isinstance(v, (int, float)) for v in feats):
            raise DataFormatError(f"line {lineno}: features must be a list of numbers")
        return np.asarray(feats, dtype=np.float64)
    if sidecar is None:
        raise DataFormatError(f"line {lineno}: no inline features and no sidecar file given")
    if rec["id"] not in sidecar:
        raise DataFormatError(f"line {lineno}: id {rec['id']!r} missing from feature sidecar")
    return sidecar[rec["id"]]


def load_dataset(path: str, kind: str, features_path: str | None = None):
    """Load a dataset written by save_dataset; kind is "full" or "determined"."""
    if kind not in ("full", "determined"):
        raise DmllError(f"kind must be 'full' or 'determined', got {kind!r}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read dataset: {exc}") from exc
    cls = MultiLabelDataset if kind == "full" else DeterminedDataset
    if not raw_lines:
        return cls(LabelVocabulary(()), [])
    sidecar = embfile.read_embeddings(features_path) if features_path is not None else None

    def fail(lineno, msg):
        raise DataFormatError(f"{path}: line {lineno}: {msg}")

    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as exc:
        fail(1, f"invalid JSON: {exc}")
    if not isinstance(header, dict) or set(header) != {"k", "names"}:
        fail(1, 'header must be {"k", "names"}')
    names = header["names"]
    if not isinstance(names, list) or header["k"] != len(names):
        fail(1, f"k = {header['k']} does not match {len(names)} names")
    vocab = LabelVocabulary(tuple(names))

    required = _FULL_KEYS if kind == "full" else _DET_KEYS
    instances = []
    for lineno, line in enumerate(raw_lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            fail(lineno, f"invalid JSON: {exc}")
        if not isinstance(rec, dict):
            fail(lineno, "record must be a JSON object")
        keys = set(rec) | ({"features"} if "features" not in rec else set())
        if keys != required:
            fail(lineno, f"expected keys {sorted(required)}, got {sorted(rec)}")
        if not isinstance(rec["id"], str):
            fail(lineno, "id must be a string")
        feats = _parse_features(rec, lineno, sidecar)
        if kind == "full":
            pos = rec["positives"]
            if not isinstance(pos, list) or not all(
                isinstance(j, int) and not isinstance(j, bool) for j in pos
            ):
                fail(lineno, "positives must be a list of integers")
            if len(set(pos)) != len(pos):
                fail(lineno, "positives contains duplicates")
            if any(j < 0 or j >= vocab.k for j in pos):
                fail(lineno, f"label index out of range [0, {vocab.k})")
            instances.append(MultiLabelInstance(rec["id"], feats, frozenset(pos)))
        else:
            gamma, value = rec["gamma"], rec["value"]
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in (gamma, value)):
                fail(lineno, "gamma and value must be integers")
            if not 0 <= gamma < vocab.k:
                fail(lineno, f"gamma {gamma} out of range [0, {vocab.k})")
            if value not in (0, 1):
                fail(lineno, f"value {value} not in {{0, 1}}")
            instances.append(DeterminedInstance(rec["id"], feats, gamma, value))
    try:
        return cls(vocab, instances)
    except DmllError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
