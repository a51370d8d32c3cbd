"""Hybrid CNN-MLP assembly, dataset splitting, and evaluation artifacts.

The image branch is three conv/pool stages (16, 32, 64 kernels of 3x3 with
same-size zero padding, 2x2 pooling) flattened into dense layers of 16 and
8 units with dropout 0.5 between them; the feature branch maps the two
band-power scalars through dense layers of 16 and 8 units. The branch
outputs are concatenated into a dense layer of 8 units and a 5-way softmax
output. Single-branch variants reuse the same head for ablations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from vibediag.band_features import FeaturePair, MinMaxScaler
from vibediag.hht import IMAGE_SIZE, SpectrumImage
from vibediag.nn_engine import (
    Conv3x3,
    Dense,
    Dropout,
    Flatten,
    MaxPool2x2,
    Model,
    ReLU,
    Softmax,
)
from vibediag.signal_model import N_CLASSES, FaultLabel

FLATTEN_WIDTH = 64 * (IMAGE_SIZE // 8) ** 2  # 64 maps of 4x4 -> 1024


@dataclass
class Example:
    image: SpectrumImage
    features: FeaturePair  # normalized to [0, 1]
    label: FaultLabel
    recording_id: str
    start_index: int

    @property
    def key(self) -> str:
        return f"{self.recording_id}:{self.start_index}"


@dataclass
class SplitSpec:
    test_fraction: float = 0.15
    val_fraction: float = 0.15  # of the remainder after the test cut
    seed: int = 0
    stratified: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.test_fraction < 1.0 and 0.0 < self.val_fraction < 1.0):
            raise ValueError("split fractions must lie in (0, 1)")


def _cut(count: int, fraction: float) -> int:
    return int(np.ceil(fraction * count))


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle, then ceil-sized test and validation cuts."""
    if n < 3:
        raise ValueError("need at least 3 examples to split")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_test = _cut(n, spec.test_fraction)
    n_val = _cut(n - n_test, spec.val_fraction)
    if n_test + n_val >= n:
        raise ValueError("split leaves an empty training set")
    test = order[:n_test]
    val = order[n_test : n_test + n_val]
    train = order[n_test + n_val :]
    return train, val, test


def split(examples: Sequence, spec: SplitSpec):
    """Split any sequence into (train, val, test) lists, disjoint and exhaustive.

    Plain random by default; with ``spec.stratified`` the same ceil rule is
    applied within each label (items must then expose ``.label``).
    """
    n = len(examples)
    if not spec.stratified:
        tr, va, te = split_indices(n, spec)
    else:
        labels = np.array([int(e.label) for e in examples])
        rng = np.random.default_rng(spec.seed)
        tr_parts, va_parts, te_parts = [], [], []
        for cls in np.unique(labels):
            members = np.flatnonzero(labels == cls)
            order = members[rng.permutation(members.size)]
            n_test = _cut(members.size, spec.test_fraction)
            n_val = _cut(members.size - n_test, spec.val_fraction)
            te_parts.append(order[:n_test])
            va_parts.append(order[n_test : n_test + n_val])
            tr_parts.append(order[n_test + n_val :])
        tr = np.concatenate(tr_parts)
        va = np.concatenate(va_parts)
        te = np.concatenate(te_parts)
        if min(tr.size, va.size, te.size) == 0:
            raise ValueError("split produced an empty subset")
    pick = lambda idx: [examples[i] for i in idx]
    return pick(tr), pick(va), pick(te)


def _cnn_branch(channels: int, rng, dtype) -> list:
    return [
        Conv3x3(channels, 16, rng, dtype), ReLU(),
        MaxPool2x2(),
        Conv3x3(16, 32, rng, dtype), ReLU(),
        MaxPool2x2(),
        Conv3x3(32, 64, rng, dtype), ReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(FLATTEN_WIDTH, 16, rng, dtype), ReLU(),
        Dropout(0.5),
        Dense(16, 8, rng, dtype), ReLU(),
    ]


def _mlp_branch(rng, dtype) -> list:
    return [
        Dense(2, 16, rng, dtype), ReLU(),
        Dense(16, 8, rng, dtype), ReLU(),
    ]


def _head(in_width: int, rng, dtype) -> list:
    return [
        Dense(in_width, 8, rng, dtype), ReLU(),
        Dense(8, N_CLASSES, rng, dtype),
        Softmax(),
    ]


def build_hybrid(channels: int = 3, seed: int = 0, dtype=np.float64) -> Model:
    """Both branches, concatenated feature-wise into the shared head."""
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    rng = np.random.default_rng(seed)
    return Model(_cnn_branch(channels, rng, dtype), _mlp_branch(rng, dtype), _head(16, rng, dtype), dtype)


def build_cnn_only(channels: int = 3, seed: int = 0, dtype=np.float64) -> Model:
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    rng = np.random.default_rng(seed)
    return Model(_cnn_branch(channels, rng, dtype), None, _head(8, rng, dtype), dtype)


def build_mlp_only(seed: int = 0, dtype=np.float64) -> Model:
    rng = np.random.default_rng(seed)
    return Model(None, _mlp_branch(rng, dtype), _head(8, rng, dtype), dtype)


BRANCH_BUILDERS = {
    "hybrid": build_hybrid,
    "cnn": lambda channels=3, seed=0: build_cnn_only(channels, seed),
    "mlp": lambda channels=3, seed=0: build_mlp_only(seed),
}


def shape_trace(model: Model, channels: int = 3, feature_width: int = 2):
    """Per-layer (type, output shape) rows from a zeros probe, for shape audits."""

    def run(layers, x):
        rows = []
        for layer in layers:
            x = layer.forward(x, training=False)
            rows.append((layer.spec()["type"], x.shape[1:]))
        return rows, x

    trace = {}
    parts = []
    if model.image_layers is not None:
        rows, out = run(model.image_layers, np.zeros((1, IMAGE_SIZE, IMAGE_SIZE, channels)))
        trace["image"] = rows
        parts.append(out)
    if model.feature_layers is not None:
        rows, out = run(model.feature_layers, np.zeros((1, feature_width)))
        trace["feature"] = rows
        parts.append(out)
    merged = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
    trace["head"], _ = run(model.head_layers, merged)
    return trace


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class Metrics:
    confusion: np.ndarray  # rows = true class, columns = predicted class
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    degenerate_classes: list[int] = field(default_factory=list)


def metrics_from_confusion(confusion: np.ndarray) -> Metrics:
    """Accuracy, per-class precision/recall/f1 from a confusion matrix.

    Zero-denominator classes yield 0 and are listed in
    ``degenerate_classes`` as a warning flag.
    """
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValueError("confusion matrix must be square")
    k = confusion.shape[0]
    total = confusion.sum()
    diag = np.diag(confusion).astype(np.float64)
    col_sums = confusion.sum(axis=0).astype(np.float64)
    row_sums = confusion.sum(axis=1).astype(np.float64)

    degenerate = []
    precision = np.zeros(k)
    recall = np.zeros(k)
    f1 = np.zeros(k)
    for i in range(k):
        if col_sums[i] > 0:
            precision[i] = diag[i] / col_sums[i]
        else:
            degenerate.append(i)
        if row_sums[i] > 0:
            recall[i] = diag[i] / row_sums[i]
        elif i not in degenerate:
            degenerate.append(i)
        pr = precision[i] + recall[i]
        f1[i] = 2.0 * precision[i] * recall[i] / pr if pr > 0 else 0.0

    accuracy = float(diag.sum() / total) if total > 0 else 0.0
    return Metrics(
        confusion=confusion,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        support=row_sums.astype(int),
        degenerate_classes=sorted(degenerate),
    )


def predict_classes(model: Model, images, features, chunk: int = 256) -> np.ndarray:
    """Argmax predictions in eval mode; ties resolve to the lowest class index."""
    n = images.shape[0] if images is not None else features.shape[0]
    out = np.empty(n, dtype=int)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        logits = model.forward_logits(
            None if images is None else images[lo:hi],
            None if features is None else features[lo:hi],
            training=False,
        )
        out[lo:hi] = logits.argmax(axis=1)
    return out


def evaluate_arrays(model: Model, images, features, labels: np.ndarray) -> Metrics:
    predicted = predict_classes(model, images, features)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    np.add.at(confusion, (labels, predicted), 1)
    return metrics_from_confusion(confusion)


def examples_to_arrays(examples: Sequence[Example]):
    images = np.stack([e.image.pixels for e in examples])
    features = np.array([[e.features.n1, e.features.n2] for e in examples])
    labels = np.array([int(e.label) for e in examples])
    return images, features, labels


def evaluate(model: Model, examples: Sequence[Example]) -> Metrics:
    if len(examples) == 0:
        raise ValueError("cannot evaluate on an empty example set")
    return evaluate_arrays(model, *examples_to_arrays(examples))


def classification_report(metrics: Metrics) -> dict:
    """JSON-ready per-class precision/recall/f1/support plus accuracy."""
    classes = {}
    for label in FaultLabel:
        i = int(label)
        classes[label.canonical_name] = {
            "precision": round(float(metrics.precision[i]), 4),
            "recall": round(float(metrics.recall[i]), 4),
            "f1": round(float(metrics.f1[i]), 4),
            "support": int(metrics.support[i]),
        }
    return {
        "classes": classes,
        "accuracy": round(metrics.accuracy, 4),
        "degenerate_classes": metrics.degenerate_classes,
    }


def render_report(metrics: Metrics) -> str:
    """Aligned-text version of the classification report."""
    name_width = max(len(l.canonical_name) for l in FaultLabel)
    lines = [f"{'':{name_width}}  precision  recall  f1-score  support"]
    for label in FaultLabel:
        i = int(label)
        lines.append(
            f"{label.canonical_name:{name_width}}  "
            f"{metrics.precision[i]:9.2f}  {metrics.recall[i]:6.2f}  "
            f"{metrics.f1[i]:8.2f}  {metrics.support[i]:7d}"
        )
    lines.append("")
    lines.append(f"{'accuracy':{name_width}}  {metrics.accuracy:9.4f}")
    return "\n".join(lines)


def confusion_to_csv(confusion: np.ndarray, path) -> None:
    names = [l.canonical_name for l in FaultLabel]
    lines = ["true\\predicted," + ",".join(names)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(str(int(v)) for v in confusion[i]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Featurized dataset container


@dataclass
class FeaturizedDataset:
    """Images, raw band-power features and labels for a run, with provenance.

    ``scaler`` and ``splits`` are attached by the split stage; features stay
    raw on disk so normalization can never leak outside the training split.
    """

    images: np.ndarray  # (n, 32, 32, c)
    features_raw: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,) class indices
    provenance: list[str]
    scaler: MinMaxScaler | None = None
    splits: dict[str, list[str]] | None = None
    config_echo: dict = field(default_factory=dict)
    seed: int | None = None

    def __len__(self) -> int:
        return self.labels.shape[0]

    def indices_for(self, split_name: str) -> np.ndarray:
        if self.splits is None:
            raise ValueError("dataset has no split membership; run the split stage first")
        positions = {key: i for i, key in enumerate(self.provenance)}
        return np.array([positions[k] for k in self.splits[split_name]], dtype=int)

    def normalized_features(self) -> np.ndarray:
        if self.scaler is None:
            raise ValueError("dataset has no fitted scaler; run the split stage first")
        span = self.scaler.maximum - self.scaler.minimum
        out = np.zeros_like(self.features_raw)
        for j in range(2):
            if span[j] > 0:
                out[:, j] = np.clip((self.features_raw[:, j] - self.scaler.minimum[j]) / span[j], 0.0, 1.0)
        return out

    def arrays_for(self, split_name: str):
        idx = self.indices_for(split_name)
        onehot = np.eye(N_CLASSES)[self.labels[idx]]
        return self.images[idx], self.normalized_features()[idx], self.labels[idx], onehot


def dataset_from_examples(examples: Sequence[Example], config_echo: dict | None = None,
                          seed: int | None = None) -> FeaturizedDataset:
    images, features, labels = examples_to_arrays(examples)
    return FeaturizedDataset(
        images=images,
        features_raw=features,
        labels=labels,
        provenance=[e.key for e in examples],
        config_echo=config_echo or {},
        seed=seed,
    )


def save_dataset(dataset: FeaturizedDataset, out_dir) -> None:
    """Write ``dataset.json`` (manifest) and ``dataset.bin`` (arrays).

    The binary layout is images, then features, then one-hot labels, all
    little-endian 64-bit floats at the offsets recorded in the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    onehot = np.eye(N_CLASSES)[dataset.labels]
    blobs = []
    offsets = {}
    offset = 0
    for name, array in (("images", dataset.images), ("features", dataset.features_raw),
                        ("labels_onehot", onehot)):
        raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
        offsets[name] = {"byte_offset": offset, "byte_length": len(raw), "shape": list(array.shape)}
        blobs.append(raw)
        offset += len(raw)
    per_class = {l.canonical_name: int((dataset.labels == int(l)).sum()) for l in FaultLabel}
    manifest = {
        "format": "vibediag-dataset-v1",
        "counts": {"examples": len(dataset), "per_class": per_class},
        "label_map": {l.canonical_name: int(l) for l in FaultLabel},
        "offsets": offsets,
        "provenance": dataset.provenance,
        "scaler": None if dataset.scaler is None else {
            "min": dataset.scaler.minimum.tolist(),
            "max": dataset.scaler.maximum.tolist(),
        },
        "splits": dataset.splits,
        "config_echo": dataset.config_echo,
        "seed": dataset.seed,
        "total_bytes": offset,
    }
    (out_dir / "dataset.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out_dir / "dataset.bin").write_bytes(b"".join(blobs))


def load_dataset(in_dir) -> FeaturizedDataset:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "dataset.json").read_text())
    blob = (in_dir / "dataset.bin").read_bytes()
    if len(blob) != manifest["total_bytes"]:
        raise ValueError("dataset.bin length does not match the manifest")

    def read(name):
        meta = manifest["offsets"][name]
        flat = np.frombuffer(blob, dtype="<f8", count=meta["byte_length"] // 8,
                             offset=meta["byte_offset"])
        return flat.reshape(meta["shape"]).astype(np.float64)

    scaler = None
    if manifest["scaler"] is not None:
        scaler = MinMaxScaler(minimum=np.array(manifest["scaler"]["min"]),
                              maximum=np.array(manifest["scaler"]["max"]))
    return FeaturizedDataset(
        images=read("images"),
        features_raw=read("features"),
        labels=read("labels_onehot").argmax(axis=1),
        provenance=list(manifest["provenance"]),
        scaler=scaler,
        splits=manifest["splits"],
        config_echo=manifest["config_echo"],
        seed=manifest["seed"],
    )


def assign_splits(dataset: FeaturizedDataset, spec: SplitSpec) -> FeaturizedDataset:
    """Attach split membership and a train-split-only feature scaler."""
    keys = dataset.provenance

    class _Item:
        __slots__ = ("key", "label")

        def __init__(self, key, label):
            self.key = key
            self.label = label

    items = [_Item(k, FaultLabel(int(l))) for k, l in zip(keys, dataset.labels)]
    train_items, val_items, test_items = split(items, spec)
    dataset.splits = {
        "train": [i.key for i in train_items],
        "val": [i.key for i in val_items],
        "test": [i.key for i in test_items],
    }
    train_idx = dataset.indices_for("train")
    pairs = [FeaturePair(*row) for row in dataset.features_raw[train_idx]]
    from vibediag.band_features import fit_scaler

    dataset.scaler = fit_scaler(pairs)
    return dataset
