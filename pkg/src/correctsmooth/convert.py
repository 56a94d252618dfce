"""Converters from common public benchmark formats to dataset directories.

Each converter writes the plain-text layout that load_dataset reads
(edges.txt, labels.csv, features.csv/bin, meta.json), so the heavyweight
source formats never leak past this module.

Supported sources:

    Planetoid pickles   ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}
                        (Cora, Citeseer, Pubmed as shipped with the GCN
                        reference code; latin1 pickles, scipy matrices)
    OGB node benchmark  raw/edge.csv[.gz], raw/node-feat.csv[.gz],
                        raw/node-label.csv[.gz] plus the official split
                        index files (Arxiv, Products)
    SNAP email          edge list + department label file (email-Eu-core)

Citeseer's test index has gaps: the missing nodes get zero feature rows
and the unknown-label sentinel, keeping n = 3327.
"""

from __future__ import annotations

import gzip
import json
import pickle
from pathlib import Path

import numpy as np

from .data import Dataset, Split, save_dataset, save_split
from .errors import ValidationError
from .graph import build_graph

_PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def _load_pickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert_planetoid(src_dir, name: str, out_dir, binary_features: bool = False) -> Dataset:
    """Rebuild a citation dataset from ind.<name>.* pickle shards."""
    src_dir = Path(src_dir)
    parts = {}
    for part in _PLANETOID_PARTS:
        path = src_dir / f"ind.{name}.{part}"
        if not path.exists():
            raise ValidationError(f"missing planetoid shard {path}")
        parts[part] = _load_pickle(path)
    index_path = src_dir / f"ind.{name}.test.index"
    if not index_path.exists():
        raise ValidationError(f"missing planetoid shard {index_path}")
    test_idx = np.array([int(line) for line in index_path.read_text().split()],
                        dtype=np.int64)

    allx = parts["allx"].toarray() if hasattr(parts["allx"], "toarray") else np.asarray(parts["allx"])
    tx = parts["tx"].toarray() if hasattr(parts["tx"], "toarray") else np.asarray(parts["tx"])
    ally = np.asarray(parts["ally"])
    ty = np.asarray(parts["ty"])

    lo, hi = int(test_idx.min()), int(test_idx.max())
    span = hi - lo + 1
    # Fill any index gap (Citeseer) with zero features / all-zero one-hots.
    tx_full = np.zeros((span, tx.shape[1]), dtype=np.float64)
    ty_full = np.zeros((span, ty.shape[1]), dtype=ty.dtype)
    tx_full[test_idx - lo] = tx
    ty_full[test_idx - lo] = ty

    features = np.vstack([allx, tx_full])
    onehot = np.vstack([ally, ty_full])
    n = features.shape[0]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1).astype(np.int64)

    graph_dict = parts["graph"]
    edges = []
    for u, nbrs in graph_dict.items():
        for v in nbrs:
            if 0 <= int(v) < n and 0 <= int(u) < n:
                edges.append((int(u), int(v)))
    graph = build_graph(np.asarray(edges, dtype=np.int64), n)

    ds = Dataset(name=name, graph=graph, features=features, labels=labels,
                 n_classes=onehot.shape[1])
    ds.validate()
    save_dataset(out_dir, ds, binary_features=binary_features)
    return ds


def _read_csv_matrix(path: Path, dtype) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt") as fh:
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return np.asarray(rows, dtype=dtype)


def _find(src_dir: Path, *candidates) -> Path:
    for cand in candidates:
        p = src_dir / cand
        if p.exists():
            return p
    raise ValidationError(f"none of {candidates} found under {src_dir}")


def convert_ogb(src_dir, name: str, out_dir, split_subdir: str = "split/time") -> Dataset:
    """Convert an OGB node-property dataset laid out as raw/ + split/."""
    src_dir = Path(src_dir)
    edge = _read_csv_matrix(_find(src_dir, "raw/edge.csv", "raw/edge.csv.gz"), np.int64)
    labels = _read_csv_matrix(_find(src_dir, "raw/node-label.csv",
                                    "raw/node-label.csv.gz"), np.int64).ravel()
    feat_path = None
    try:
        feat_path = _find(src_dir, "raw/node-feat.csv", "raw/node-feat.csv.gz")
    except ValidationError:
        pass
    features = _read_csv_matrix(feat_path, np.float64) if feat_path else None

    n = labels.shape[0]
    graph = build_graph(edge, n)
    ds = Dataset(name=name, graph=graph, features=features, labels=labels,
                 n_classes=int(labels.max()) + 1)
    ds.validate()
    save_dataset(out_dir, ds, binary_features=features is not None and n > 100_000)

    split_dir = src_dir / split_subdir
    if split_dir.is_dir():
        parts = {}
        for part in ("train", "valid", "test"):
            p = _find(split_dir, f"{part}.csv", f"{part}.csv.gz")
            parts[part] = _read_csv_matrix(p, np.int64).ravel()
        split = Split(train=parts["train"], valid=parts["valid"],
                      test=parts["test"])
        save_split(Path(out_dir) / "split_official.json", split)
    return ds


def convert_snap_email(edge_file, label_file, out_dir) -> Dataset:
    """email-Eu-core: directed edge list plus department labels, no features."""
    edges = []
    with open(edge_file) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValidationError(f"{edge_file}:{lineno}: expected two ids")
            edges.append((int(fields[0]), int(fields[1])))
    pairs = {}
    with open(label_file) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValidationError(f"{label_file}:{lineno}: expected id and label")
            pairs[int(fields[0])] = int(fields[1])
    n = max(pairs) + 1
    labels = np.full(n, -1, dtype=np.int64)
    for node, lab in pairs.items():
        labels[node] = lab
    graph = build_graph(np.asarray(edges, dtype=np.int64), n)
    ds = Dataset(name="email", graph=graph, features=None, labels=labels,
                 n_classes=int(labels.max()) + 1)
    ds.validate()
    save_dataset(out_dir, ds)
    return ds


def write_meta_note(out_dir, note: str) -> None:
    meta_path = Path(out_dir) / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    meta["note"] = note
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")


CONVERTERS = {
    "planetoid": convert_planetoid,
    "ogb": convert_ogb,
    "snap-email": convert_snap_email,
}
