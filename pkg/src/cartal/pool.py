"""Datasets, synthetic sources, and labelled/unlabelled pool bookkeeping.

A :class:`Dataset` is immutable after construction and shareable across runs.
:class:`PoolState` tracks the disjoint labelled/unlabelled id partition and is
only ever advanced through :func:`transfer`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, StateError

__all__ = [
    "Example",
    "Dataset",
    "PoolState",
    "SyntheticSourceSpec",
    "load_dataset",
    "generate_synthetic_source",
    "build_multi_source_pool",
    "concat_datasets",
    "seed_split",
    "split_dataset",
    "transfer",
]


@dataclass(frozen=True, slots=True)
class Example:
    """One data point: feature vector, gold label, and its source tag."""

    id: int
    source: str
    features: np.ndarray
    label: int
    tokens: tuple[str, ...] = ()


class Dataset:
    """Ordered, validated collection of examples with a shared schema.

    ``metadata`` carries bookkeeping that is not part of the schema proper:
    ``flipped_ids`` (planted label noise), ``true_labels`` (pre-flip labels
    for flipped ids) and ``provenance`` (pooled id -> (source, original id)).
    """

    def __init__(self, name, examples, num_classes, metadata=None):
        self.name = str(name)
        self.examples: tuple[Example, ...] = tuple(examples)
        self.num_classes = int(num_classes)
        self.metadata: dict = dict(metadata or {})
        self.feature_dim = int(self.examples[0].features.shape[0]) if self.examples else 0
        self._validate()
        self._by_id = {e.id: e for e in self.examples}
        self._X: np.ndarray | None = None
        self._y: np.ndarray | None = None

    def _validate(self):
        if self.num_classes < 1:
            raise SchemaError(f"dataset {self.name!r}: num_classes must be >= 1")
        prev_id = None
        for e in self.examples:
            if e.id < 0:
                raise SchemaError(f"dataset {self.name!r}: negative id {e.id}")
            if prev_id is not None and e.id <= prev_id:
                kind = "duplicate" if e.id == prev_id else "non-increasing"
                raise SchemaError(f"dataset {self.name!r}: {kind} id {e.id}")
            prev_id = e.id
            if e.features.shape != (self.feature_dim,):
                raise SchemaError(
                    f"dataset {self.name!r}: example {e.id} has feature dim "
                    f"{e.features.shape[0]}, expected {self.feature_dim}"
                )
            if not 0 <= e.label < self.num_classes:
                raise SchemaError(
                    f"dataset {self.name!r}: example {e.id} has label {e.label} "
                    f"outside [0, {self.num_classes})"
                )

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_id(self, example_id: int) -> Example:
        return self._by_id[example_id]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.examples)

    def features_matrix(self) -> np.ndarray:
        if self._X is None:
            self._X = (
                np.stack([e.features for e in self.examples])
                if self.examples
                else np.zeros((0, self.feature_dim))
            )
        return self._X

    def labels_array(self) -> np.ndarray:
        if self._y is None:
            self._y = np.array([e.label for e in self.examples], dtype=np.int64)
        return self._y

    def sources(self) -> tuple[str, ...]:
        """Distinct source tags in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.examples:
            seen.setdefault(e.source, None)
        return tuple(seen)

    def source_of(self) -> dict[int, str]:
        return {e.id: e.source for e in self.examples}

    def subset(self, ids, name=None) -> "Dataset":
        """New dataset holding the given ids (original id values preserved)."""
        wanted = set(ids)
        unknown = wanted - set(self._by_id)
        if unknown:
            raise ValueError(f"unknown ids in subset request: {sorted(unknown)[:10]}")
        kept = [e for e in self.examples if e.id in wanted]
        meta = {}
        if "flipped_ids" in self.metadata:
            meta["flipped_ids"] = sorted(set(self.metadata["flipped_ids"]) & wanted)
        if "true_labels" in self.metadata:
            meta["true_labels"] = {
                i: lab for i, lab in self.metadata["true_labels"].items() if i in wanted
            }
        if "provenance" in self.metadata:
            meta["provenance"] = {
                i: prov for i, prov in self.metadata["provenance"].items() if i in wanted
            }
        return Dataset(name or self.name, kept, self.num_classes, meta)


@dataclass
class PoolState:
    """Disjoint labelled/unlabelled id partition over a backing dataset."""

    labelled: frozenset[int]
    unlabelled: frozenset[int]
    universe: Dataset = field(repr=False)

    def __post_init__(self):
        overlap = self.labelled & self.unlabelled
        if overlap:
            raise StateError(f"labelled/unlabelled overlap: {sorted(overlap)[:10]}")
        known = set(self.universe.ids)
        stray = (self.labelled | self.unlabelled) - known
        if stray:
            raise StateError(f"ids outside the universe: {sorted(stray)[:10]}")

    def source_shares(self) -> dict[str, float]:
        """Fraction of the unlabelled pool contributed by each source."""
        counts: dict[str, int] = {}
        for i in self.unlabelled:
            src = self.universe.by_id(i).source
            counts[src] = counts.get(src, 0) + 1
        total = sum(counts.values())
        return {s: c / total for s, c in counts.items()} if total else {}


@dataclass(frozen=True)
class SyntheticSourceSpec:
    """Gaussian-blob source with optional planted label noise.

    ``centroid_overlap`` pulls the class centroids toward their common mean:
    0 leaves them as given, values approaching 1 collapse them together.
    """

    name: str
    n: int
    class_centroids: tuple[tuple[float, ...], ...]
    noise_scale: float = 1.0
    label_flip_rate: float = 0.0
    centroid_overlap: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise ConfigError("label_flip_rate must lie in [0, 1]", key=f"{self.name}.label_flip_rate")
        if self.noise_scale <= 0:
            raise ConfigError("noise_scale must be > 0", key=f"{self.name}.noise_scale")
        if not 0.0 <= self.centroid_overlap < 1.0:
            raise ConfigError("centroid_overlap must lie in [0, 1)", key=f"{self.name}.centroid_overlap")
        if self.n < 0:
            raise ConfigError("n must be >= 0", key=f"{self.name}.n")
        dims = {len(c) for c in self.class_centroids}
        if len(dims) > 1:
            raise ConfigError("class_centroids must share one dimension", key=f"{self.name}.class_centroids")

    @property
    def num_classes(self) -> int:
        return len(self.class_centroids)

    @property
    def feature_dim(self) -> int:
        return len(self.class_centroids[0]) if self.class_centroids else 0


def _feature_tokens(features: np.ndarray) -> tuple[str, ...]:
    # One-decimal quantization; +0.0 folds the negative-zero artefact.
    return tuple(f"f{j}={round(float(v), 1) + 0.0:.1f}" for j, v in enumerate(features))


def generate_synthetic_source(spec: SyntheticSourceSpec, rng_seed: int) -> Dataset:
    """Draw ``spec.n`` examples around class centroids, then plant label flips.

    Exactly ``round(label_flip_rate * n)`` examples, chosen by shuffling, get
    their label replaced with a uniformly random *different* class. Flipped
    ids and their original labels land in the dataset metadata.
    """
    if spec.num_classes < 2:
        raise ConfigError("need at least 2 classes", key=f"{spec.name}.class_centroids")
    rng = np.random.default_rng(rng_seed)
    centroids = np.asarray(spec.class_centroids, dtype=float)
    mean = centroids.mean(axis=0)
    centroids = mean + (centroids - mean) * (1.0 - spec.centroid_overlap)

    n, d, C = spec.n, spec.feature_dim, spec.num_classes
    gold = rng.integers(0, C, size=n)
    feats = centroids[gold] + rng.standard_normal((n, d)) * spec.noise_scale

    labels = gold.copy()
    n_flip = round(spec.label_flip_rate * n)
    flip_ids = np.sort(rng.permutation(n)[:n_flip])
    # Shift by a nonzero offset mod C so the flipped label always differs.
    offsets = rng.integers(1, C, size=n_flip)
    labels[flip_ids] = (gold[flip_ids] + offsets) % C

    examples = [
        Example(
            id=i,
            source=spec.name,
            features=feats[i],
            label=int(labels[i]),
            tokens=_feature_tokens(feats[i]),
        )
        for i in range(n)
    ]
    metadata = {
        "flipped_ids": [int(i) for i in flip_ids],
        "true_labels": {int(i): int(gold[i]) for i in flip_ids},
    }
    return Dataset(spec.name, examples, C, metadata)


def _parse_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", line=lineno)
            rec["_line"] = lineno
            records.append(rec)
    return records


def _parse_csv(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return records
        tok_cols = [i for i, h in enumerate(header) if h.startswith("tok")]
        feat_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
        for col in ("id", "source", "label"):
            if col not in header:
                raise ParseError(f"missing required column {col!r}", line=1)
        id_i, src_i, lab_i = header.index("id"), header.index("source"), header.index("label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rec = {
                    "id": int(row[id_i]),
                    "source": row[src_i],
                    "label": int(row[lab_i]),
                    "features": [float(row[c]) for c in feat_cols],
                    "tokens": [row[c] for c in tok_cols if row[c]],
                    "_line": lineno,
                }
            except (ValueError, IndexError) as exc:
                raise ParseError(f"malformed row: {exc}", line=lineno) from exc
            records.append(rec)
    return records


def load_dataset(path, format="jsonl", name=None, num_classes=None,
                 embeddings_path=None) -> Dataset:
    """Read a JSONL or CSV dataset file and validate all invariants.

    ``num_classes`` defaults to ``max(label) + 1`` over the file. Records must
    carry id, source, features and label; order is preserved. Records without
    inline features (token-only subsets) may take them from a side embedding
    file: a JSON object mapping id to a feature vector.
    """
    if format == "jsonl":
        records = _parse_jsonl(path)
    elif format == "csv":
        records = _parse_csv(path)
    else:
        raise ValueError(f"unknown format {format!r} (expected 'jsonl' or 'csv')")

    side_features = None
    if embeddings_path is not None:
        with open(embeddings_path, "r", encoding="utf-8") as fh:
            side_features = {int(k): v for k, v in json.load(fh).items()}

    examples = []
    for rec in records:
        lineno = rec.get("_line")
        if not rec.get("features") and side_features is not None:
            try:
                rec["features"] = side_features[int(rec["id"])]
            except (KeyError, TypeError, ValueError):
                raise ParseError(
                    f"no embedding for id {rec.get('id')!r} in {embeddings_path}", line=lineno
                ) from None
        for key in ("id", "source", "features", "label"):
            if key not in rec:
                raise ParseError(f"record missing field {key!r}", line=lineno)
        try:
            feats = np.asarray(rec["features"], dtype=float)
            ex = Example(
                id=int(rec["id"]),
                source=str(rec["source"]),
                features=feats,
                label=int(rec["label"]),
                tokens=tuple(str(t) for t in rec.get("tokens", ()) or ()),
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(f"malformed record: {exc}", line=lineno) from exc
        if ex.features.ndim != 1:
            raise ParseError("features must be a flat vector", line=lineno)
        examples.append(ex)

    if num_classes is None:
        num_classes = max((e.label for e in examples), default=-1) + 1
        num_classes = max(num_classes, 1)
    return Dataset(name or str(path), examples, num_classes)


def _check_schemas_match(sources):
    dim = sources[0].feature_dim
    n_classes = sources[0].num_classes
    for s in sources[1:]:
        if s.feature_dim != dim:
            raise SchemaError(
                f"source {s.name!r} has feature_dim {s.feature_dim}, expected {dim}"
            )
        if s.num_classes != n_classes:
            raise SchemaError(
                f"source {s.name!r} has num_classes {s.num_classes}, expected {n_classes}"
            )


def _merge_sources(sources, positions_per_source, name) -> Dataset:
    """Re-id and merge picked examples, carrying provenance and flip metadata."""
    examples = []
    provenance: dict[int, tuple[str, int]] = {}
    flipped: list[int] = []
    true_labels: dict[int, int] = {}
    new_id = 0
    for src, positions in zip(sources, positions_per_source):
        src_flipped = set(src.metadata.get("flipped_ids", ()))
        src_true = src.metadata.get("true_labels", {})
        for pos in positions:
            e = src.examples[pos]
            examples.append(Example(new_id, e.source, e.features, e.label, e.tokens))
            provenance[new_id] = (src.name, e.id)
            if e.id in src_flipped:
                flipped.append(new_id)
                true_labels[new_id] = src_true.get(e.id, e.label)
            new_id += 1
    metadata = {"provenance": provenance, "flipped_ids": flipped, "true_labels": true_labels}
    return Dataset(name, examples, sources[0].num_classes, metadata)


def build_multi_source_pool(sources, per_source_cap, rng_seed) -> Dataset:
    """Down-sample every source to min(minority size, cap) and pool them.

    Ids are re-assigned contiguously; a provenance map (new id -> (source,
    original id)) and merged flipped-id metadata are kept on the result.
    """
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source")
    _check_schemas_match(sources)
    minority = min(len(s) for s in sources)
    take = min(minority, int(per_source_cap))
    rng = np.random.default_rng(rng_seed)
    picks = [np.sort(rng.choice(len(src), size=take, replace=False)) for src in sources]
    return _merge_sources(sources, picks, "pool")


def concat_datasets(sources, name) -> Dataset:
    """Concatenate sources completely (no down-sampling), re-assigning ids."""
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source")
    _check_schemas_match(sources)
    return _merge_sources(sources, [range(len(s)) for s in sources], name)


def split_dataset(dataset: Dataset, fraction: float, rng_seed: int):
    """Hold out round(fraction * n) examples uniformly; returns (rest, held)."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must lie in [0, 1): {fraction}")
    n_hold = round(fraction * len(dataset))
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(dataset))
    held_ids = {dataset.examples[i].id for i in order[:n_hold]}
    rest_ids = [e.id for e in dataset.examples if e.id not in held_ids]
    return dataset.subset(rest_ids), dataset.subset(sorted(held_ids), name=f"{dataset.name}-held")


def seed_split(pool: Dataset, seed_size: int, rng_seed: int) -> PoolState:
    """Sample the initial labelled seed uniformly without replacement."""
    if seed_size > len(pool):
        raise ValueError(f"seed_size {seed_size} exceeds pool size {len(pool)}")
    if seed_size < 0:
        raise ValueError("seed_size must be >= 0")
    rng = np.random.default_rng(rng_seed)
    all_ids = np.array(pool.ids)
    picked = rng.choice(len(all_ids), size=seed_size, replace=False)
    labelled = frozenset(int(all_ids[i]) for i in picked)
    unlabelled = frozenset(int(i) for i in all_ids) - labelled
    return PoolState(labelled=labelled, unlabelled=unlabelled, universe=pool)


def transfer(state: PoolState, batch_ids) -> PoolState:
    """Move a batch from the unlabelled to the labelled side."""
    batch = frozenset(int(i) for i in batch_ids)
    bad = batch - state.unlabelled
    if bad:
        raise StateError(
            f"ids not in the unlabelled pool (already labelled or unknown): {sorted(bad)[:10]}"
        )
    return PoolState(
        labelled=state.labelled | batch,
        unlabelled=state.unlabelled - batch,
        universe=state.universe,
    )
