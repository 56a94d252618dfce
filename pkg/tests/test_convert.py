"""Converters, exercised on fabricated miniature source trees.

The planetoid fixture reproduces the awkward parts of the real shards:
latin1 pickles, scipy sparse feature blocks, and a test.index with a
hole that must become a zero feature row with the unknown-label
sentinel.
"""

import gzip
import pickle

import numpy as np
import pytest
import scipy.sparse as sp

from correctsmooth.cli import main
from correctsmooth.convert import (convert_ogb, convert_planetoid,
                                   convert_snap_email)
from correctsmooth.data import UNKNOWN_LABEL, fixed_split_load, load_dataset
from correctsmooth.errors import ValidationError


def _write_pickle(path, obj):
    with open(path, "wb") as fh:
        pickle.dump(obj, fh, protocol=2)


@pytest.fixture()
def planetoid_dir(tmp_path):
    """8 labeled core nodes + test ids {8, 9, 11}; node 10 is the hole."""
    rng = np.random.default_rng(0)
    allx = sp.csr_matrix(rng.random((8, 4)))
    ally = np.eye(3, dtype=np.int64)[rng.integers(0, 3, size=8)]
    tx = sp.csr_matrix(rng.random((3, 4)) + 1.0)  # nonzero rows
    ty = np.eye(3, dtype=np.int64)[[0, 1, 2]]
    graph = {0: [1, 2], 1: [0], 2: [0, 3], 3: [2, 8], 8: [3, 9],
             9: [8, 11], 11: [9, 10], 10: [11], 4: [5], 5: [4, 6],
             6: [5, 7], 7: [6, 99]}  # 99 is out of range and dropped
    src = tmp_path / "planetoid"
    src.mkdir()
    shards = {"x": allx[:2], "y": ally[:2], "tx": tx, "ty": ty,
              "allx": allx, "ally": ally, "graph": graph}
    for part, obj in shards.items():
        _write_pickle(src / f"ind.toy.{part}", obj)
    (src / "ind.toy.test.index").write_text("8\n9\n11\n")
    return src


def test_planetoid_conversion(planetoid_dir, tmp_path):
    out = tmp_path / "toy"
    ds = convert_planetoid(planetoid_dir, "toy", out)
    assert ds.n == 12  # 8 core + span(8..11) including the hole
    assert ds.n_classes == 3
    assert ds.labels[10] == UNKNOWN_LABEL
    assert np.all(ds.features[10] == 0.0)
    assert ds.labels[8] == 0 and ds.labels[9] == 1 and ds.labels[11] == 2
    # the out-of-range neighbor of node 7 is gone, real edges survive
    assert ds.graph.degrees[7] == 1
    assert ds.graph.degrees[10] == 1
    loaded = load_dataset(out)
    assert np.array_equal(loaded.labels, ds.labels)
    assert np.allclose(loaded.features, ds.features)
    assert loaded.graph.content_hash() == ds.graph.content_hash()


def test_planetoid_missing_shard(planetoid_dir, tmp_path):
    (planetoid_dir / "ind.toy.ally").unlink()
    with pytest.raises(ValidationError, match="ind.toy.ally"):
        convert_planetoid(planetoid_dir, "toy", tmp_path / "toy")


@pytest.fixture()
def ogb_dir(tmp_path):
    rng = np.random.default_rng(1)
    src = tmp_path / "ogb"
    (src / "raw").mkdir(parents=True)
    (src / "split" / "time").mkdir(parents=True)
    edges = [(i, (i + 1) % 10) for i in range(10)] + [(0, 5), (2, 7)]
    with gzip.open(src / "raw" / "edge.csv.gz", "wt") as fh:
        fh.write("\n".join(f"{u},{v}" for u, v in edges) + "\n")
    labels = rng.integers(0, 3, size=10)
    with gzip.open(src / "raw" / "node-label.csv.gz", "wt") as fh:
        fh.write("\n".join(str(x) for x in labels) + "\n")
    feats = rng.random((10, 3)).round(6)
    (src / "raw" / "node-feat.csv").write_text(
        "\n".join(",".join(repr(float(v)) for v in row) for row in feats) + "\n")
    for part, ids in (("train", range(6)), ("valid", (6, 7)), ("test", (8, 9))):
        (src / "split" / "time" / f"{part}.csv").write_text(
            "\n".join(str(i) for i in ids) + "\n")
    return src, labels, feats


def test_ogb_conversion(ogb_dir, tmp_path):
    src, labels, feats = ogb_dir
    out = tmp_path / "arxiv"
    ds = convert_ogb(src, "arxiv", out)
    assert ds.n == 10
    assert np.array_equal(ds.labels, labels)
    assert np.allclose(ds.features, feats)
    split = fixed_split_load(out / "split_official.json", n=10)
    assert list(split.train) == list(range(6))
    assert list(split.valid) == [6, 7] and list(split.test) == [8, 9]
    loaded = load_dataset(out)
    assert loaded.graph.content_hash() == ds.graph.content_hash()


def test_ogb_without_features_or_split(ogb_dir, tmp_path):
    src, labels, _ = ogb_dir
    (src / "raw" / "node-feat.csv").unlink()
    import shutil
    shutil.rmtree(src / "split")
    out = tmp_path / "bare"
    ds = convert_ogb(src, "bare", out)
    assert ds.features is None
    assert not (out / "split_official.json").exists()
    assert load_dataset(out).features is None


def test_snap_email_conversion(tmp_path):
    edge_file = tmp_path / "email.txt"
    edge_file.write_text("# comment line\n0 1\n1 2\n2 3\n3 0\n4 0\n")
    label_file = tmp_path / "labels.txt"
    label_file.write_text("0 0\n1 0\n2 1\n4 1\n")  # node 3 unlabeled
    out = tmp_path / "email"
    ds = convert_snap_email(edge_file, label_file, out)
    assert ds.n == 5
    assert ds.features is None
    assert ds.labels[3] == UNKNOWN_LABEL
    assert ds.n_classes == 2
    loaded = load_dataset(out)
    assert np.array_equal(loaded.labels, ds.labels)


def test_snap_email_malformed_line(tmp_path):
    edge_file = tmp_path / "email.txt"
    edge_file.write_text("0 1\n1 2 3\n")
    label_file = tmp_path / "labels.txt"
    label_file.write_text("0 0\n1 1\n2 1\n")
    with pytest.raises(ValidationError, match=":2"):
        convert_snap_email(edge_file, label_file, tmp_path / "email")


def test_convert_cli(tmp_path, capsys):
    edge_file = tmp_path / "email.txt"
    edge_file.write_text("0 1\n1 2\n2 0\n")
    label_file = tmp_path / "labels.txt"
    label_file.write_text("0 0\n1 1\n2 0\n")
    out = tmp_path / "out"
    code = main(["convert", "snap-email", str(edge_file), str(out),
                 "--label-file", str(label_file)])
    assert code == 0
    assert "n=3" in capsys.readouterr().out
    assert (out / "labels.csv").exists()
    code = main(["convert", "snap-email", str(edge_file), str(out)])
    assert code == 2  # --label-file is required for this source
