"""Dataset container, plain-text loaders, and split generation.

A dataset directory holds:

    edges.txt       whitespace-separated node id pairs, `#` comments allowed
    labels.csv      header ``node_id,label``; label -1 marks unknown
    features.csv    optional matrix, header ``v0,...``; or features.bin
    meta.json       optional: {"name": ..., "n_classes": ...}

Node count is taken from the label file; every node needs a label row even
if the label is the unknown sentinel. Splits are uniform random partitions
drawn from numpy's default_rng so a seed reproduces them anywhere.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import SparseGraph, build_graph, read_edge_list
from .matrixio import load_matrix

UNKNOWN_LABEL = -1


@dataclass(frozen=True)
class Split:
    """Disjoint train/valid/test index sets covering the eligible nodes."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        for part, name in ((self.train, "train"), (self.valid, "valid"),
                           (self.test, "test")):
            if len(part) == 0:
                raise ValidationError(f"split part {name!r} is empty")
        combined = np.concatenate([self.train, self.valid, self.test])
        uniq, counts = np.unique(combined, return_counts=True)
        if np.any(counts > 1):
            dup = int(uniq[np.argmax(counts > 1)])
            raise ValidationError(f"split parts overlap at index {dup}")

    @property
    def n_indices(self) -> int:
        return len(self.train) + len(self.valid) + len(self.test)


@dataclass
class Dataset:
    name: str
    graph: SparseGraph
    features: np.ndarray | None
    labels: np.ndarray
    n_classes: int

    @property
    def n(self) -> int:
        return self.graph.n

    def validate(self) -> None:
        if self.labels.shape != (self.n,):
            raise ValidationError(
                f"label vector has {self.labels.shape[0]} entries for {self.n} nodes")
        bad = (self.labels != UNKNOWN_LABEL) & (
            (self.labels < 0) | (self.labels >= self.n_classes))
        if np.any(bad):
            node = int(np.argmax(bad))
            raise ValidationError(
                f"node {node} has label {self.labels[node]} outside [0, {self.n_classes})")
        if self.features is not None and self.features.shape[0] != self.n:
            raise ValidationError(
                f"feature matrix has {self.features.shape[0]} rows for {self.n} nodes")


def read_labels(path) -> np.ndarray:
    """Two-column label CSV -> dense int64 vector indexed by node id."""
    path = Path(path)
    pairs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["node_id", "label"]:
            raise ValidationError(f"{path}: expected header 'node_id,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                node, label = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}:{lineno}: malformed label row {row!r}")
            if node < 0:
                raise ValidationError(f"{path}:{lineno}: negative node id {node}")
            if node in pairs:
                raise ValidationError(f"{path}:{lineno}: duplicate node id {node}")
            pairs[node] = label
    if not pairs:
        raise ValidationError(f"{path}: no label rows")
    n = max(pairs) + 1
    if len(pairs) != n:
        missing = next(i for i in range(n) if i not in pairs)
        raise ValidationError(f"{path}: node {missing} has no label row")
    labels = np.empty(n, dtype=np.int64)
    for node, label in pairs.items():
        labels[node] = label
    return labels


def write_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "label"])
        for i, lab in enumerate(labels):
            writer.writerow([i, int(lab)])


def load_dataset(directory, name: str | None = None) -> Dataset:
    """Load a dataset directory, validating cross-file consistency."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"dataset directory {directory} does not exist")
    labels = read_labels(directory / "labels.csv")
    n = labels.shape[0]
    edge_path = directory / "edges.txt"
    if not edge_path.exists():
        raise ValidationError(f"{edge_path} missing")
    edges, n_edges_min = read_edge_list(edge_path)
    if n_edges_min > n:
        raise ValidationError(
            f"{edge_path} references node {n_edges_min - 1}, "
            f"but labels.csv defines only {n} nodes")
    graph = build_graph(edges, n)

    features = None
    for candidate in ("features.bin", "features.csv"):
        fpath = directory / candidate
        if fpath.exists():
            features = load_matrix(fpath)
            break

    meta_path = directory / "meta.json"
    meta = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    known = labels[labels != UNKNOWN_LABEL]
    inferred_classes = int(known.max()) + 1 if known.size else 0
    n_classes = int(meta.get("n_classes", inferred_classes))
    if n_classes < inferred_classes:
        raise ValidationError(
            f"meta.json declares {n_classes} classes but labels reach {inferred_classes - 1}")
    ds = Dataset(name=name or meta.get("name", directory.name),
                 graph=graph, features=features, labels=labels,
                 n_classes=n_classes)
    ds.validate()
    return ds


def save_dataset(directory, ds: Dataset, binary_features: bool = False) -> None:
    from .graph import write_edge_list
    from .matrixio import save_matrix

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph, directory / "edges.txt")
    write_labels(directory / "labels.csv", ds.labels)
    if ds.features is not None:
        fname = "features.bin" if binary_features else "features.csv"
        save_matrix(directory / fname, ds.features, binary=binary_features)
    (directory / "meta.json").write_text(json.dumps(
        {"name": ds.name, "n_classes": ds.n_classes}, indent=2) + "\n")


def make_split(n: int, fractions, seed: int,
               eligible: np.ndarray | None = None) -> Split:
    """Random (train, valid, test) partition with sizes rounded from fractions.

    `eligible` restricts the partition to a subset of nodes (used when
    some nodes carry no label); by default all n nodes take part.
    """
    f_train, f_valid, f_test = fractions
    if min(f_train, f_valid, f_test) <= 0:
        raise ValidationError("split fractions must all be positive")
    if abs(f_train + f_valid + f_test - 1.0) > 1e-9:
        raise ValidationError(f"split fractions sum to {f_train + f_valid + f_test}, not 1")
    pool = np.arange(n) if eligible is None else np.asarray(eligible, dtype=np.int64)
    m = pool.size
    n_train = int(round(f_train * m))
    n_valid = int(round(f_valid * m))
    n_test = m - n_train - n_valid
    if min(n_train, n_valid, n_test) <= 0:
        raise ValidationError(
            f"fractions {fractions} leave an empty part on {m} nodes")
    rng = np.random.default_rng(seed)
    order = pool[rng.permutation(m)]
    return Split(train=np.sort(order[:n_train]),
                 valid=np.sort(order[n_train:n_train + n_valid]),
                 test=np.sort(order[n_train + n_valid:]),
                 seed=seed)


def save_split(path, split: Split) -> None:
    payload = {"train": [int(i) for i in split.train],
               "valid": [int(i) for i in split.valid],
               "test": [int(i) for i in split.test]}
    if split.seed is not None:
        payload["seed"] = split.seed
    Path(path).write_text(json.dumps(payload) + "\n")


def fixed_split_load(path, n: int | None = None) -> Split:
    """Read a split index file (JSON with train/valid/test arrays)."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})")
    for key in ("train", "valid", "test"):
        if key not in payload or not payload[key]:
            raise ValidationError(f"{path}: split section {key!r} missing or empty")
    parts = {k: np.asarray(payload[k], dtype=np.int64) for k in ("train", "valid", "test")}
    if n is not None:
        for key, arr in parts.items():
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise ValidationError(
                    f"{path}: {key} index {int(arr.min()) if arr.min() < 0 else int(arr.max())} "
                    f"outside [0, {n})")
    return Split(train=parts["train"], valid=parts["valid"], test=parts["test"],
                 seed=payload.get("seed"))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Rows with the unknown sentinel come back all-zero."""
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], n_classes))
    known = labels != UNKNOWN_LABEL
    out[np.nonzero(known)[0], labels[known]] = 1.0
    return out


def accuracy(pred: np.ndarray, true: np.ndarray, index) -> float:
    index = np.asarray(index, dtype=np.int64)
    if index.size == 0:
        raise ValidationError("accuracy over an empty index set")
    return float(np.mean(np.asarray(pred)[index] == np.asarray(true)[index]))
