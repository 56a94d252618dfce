"""Sparse undirected graph storage and the normalized propagation operators.

Graphs are held in canonical CSR form: within each row the neighbor list is
sorted and duplicate-free, self-loops are absent, and (u, v) is stored iff
(v, u) is. Two linear operators are derived from a graph: the symmetric
normalization with entries 1/sqrt(d_i * d_j) and the row-stochastic
neighbor-averaging operator with entries 1/d_i. Isolated nodes produce
all-zero operator rows and columns.

The sparse product kernel accumulates per output row in column-index order
(single-threaded scipy CSR routines), so results are bitwise reproducible
regardless of any thread-count setting.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError


class OperatorKind(Enum):
    SYM_NORM = "sym_norm"      # D^{-1/2} A D^{-1/2}
    ROW_STOCH = "row_stoch"    # D^{-1} A


@dataclass(frozen=True)
class SparseGraph:
    """Undirected graph in canonical CSR form.

    Attributes
    ----------
    n : int
        Node count. Node ids are 0..n-1.
    row_offsets : ndarray of int64, shape (n + 1,)
    col_indices : ndarray of int64
        Neighbor ids, sorted and unique within each row.
    degrees : ndarray of float64, shape (n,)
        Unweighted incident-edge counts, stored as floats because every
        consumer is the operator scaling math.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.col_indices.size // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edge_array(self) -> np.ndarray:
        """All undirected edges as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64),
                         np.diff(self.row_offsets))
        keep = rows < self.col_indices
        return np.column_stack([rows[keep], self.col_indices[keep]])

    def adjacency(self) -> sp.csr_matrix:
        """The {0,1} adjacency as a scipy CSR matrix."""
        data = np.ones(self.col_indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.col_indices, self.row_offsets),
                             shape=(self.n, self.n))

    def component_count(self) -> int:
        if self.n == 0:
            return 0
        count, _ = connected_components(self.adjacency(), directed=False)
        return int(count)

    def content_hash(self) -> str:
        """Hex digest of the canonical CSR arrays; keys embedding caches."""
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(np.ascontiguousarray(self.row_offsets, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.col_indices, dtype=np.int64).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class GraphOperator:
    """A normalized adjacency operator with precomputed entry scaling.

    For SYM_NORM the entry at edge (i, j) is 1/sqrt(d_i * d_j); for
    ROW_STOCH it is 1/d_i. `scale` holds the per-node coefficient
    (1/sqrt(d_i) or 1/d_i, zero for isolated nodes). The scaled matrix is
    materialized once; operators are immutable and safe to share.
    """

    kind: OperatorKind
    graph: SparseGraph
    scale: np.ndarray
    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.graph.n


def build_graph(edge_list, n: int) -> SparseGraph:
    """Canonicalize an edge list into a SparseGraph.

    Accepts duplicates, both orientations, and self-loops; duplicates are
    merged, self-loops dropped, and both orientations stored.

    Parameters
    ----------
    edge_list : array-like of shape (m, 2), or empty
        Node-id pairs in [0, n).
    n : int
        Node count; ids outside [0, n) are rejected.

    Raises
    ------
    ValidationError
        If n < 0 or any id falls outside [0, n), naming the offender.
    """
    if n < 0:
        raise ValidationError(f"node count must be non-negative, got {n}")
    edges = np.asarray(edge_list, dtype=np.int64)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ValidationError(f"edge list must have shape (m, 2), got {edges.shape}")

    if edges.shape[0] > 0:
        bad = (edges < 0) | (edges >= n)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(
                f"edge {i}: node id {edges[i, j]} out of range [0, {n})")

    u, v = edges[:, 0], edges[:, 1]
    keep = u != v
    u, v = u[keep], v[keep]
    # Both orientations, deduplicated via a single sortable key. n^2 stays
    # well inside int64 for any graph this package targets.
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    keys = np.unique(src * np.int64(max(n, 1)) + dst)
    rows = keys // max(n, 1)
    cols = keys % max(n, 1)

    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=row_offsets[1:])
    degrees = np.diff(row_offsets).astype(np.float64)
    return SparseGraph(n=n, row_offsets=row_offsets,
                       col_indices=cols.astype(np.int64), degrees=degrees)


def make_operator(g: SparseGraph, kind: OperatorKind) -> GraphOperator:
    """Build a normalized operator over g; isolated nodes get zero rows."""
    d = g.degrees
    with np.errstate(divide="ignore"):
        if kind is OperatorKind.SYM_NORM:
            scale = np.where(d > 0, 1.0 / np.sqrt(d), 0.0)
        elif kind is OperatorKind.ROW_STOCH:
            scale = np.where(d > 0, 1.0 / d, 0.0)
        else:
            raise ValidationError(f"unknown operator kind: {kind!r}")

    rows = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.row_offsets))
    if kind is OperatorKind.SYM_NORM:
        data = scale[rows] * scale[g.col_indices]
    else:
        data = scale[rows] * np.ones(g.col_indices.size)
    matrix = sp.csr_matrix((data, g.col_indices, g.row_offsets),
                           shape=(g.n, g.n))
    return GraphOperator(kind=kind, graph=g, scale=scale, matrix=matrix)


def spmm(op: GraphOperator, M: np.ndarray) -> np.ndarray:
    """Sparse operator times dense matrix (or vector).

    Exact product op.matrix @ M with the column count preserved. This is
    the kernel every propagation step runs on.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != op.n:
        raise ValidationError(
            f"matrix has {M.shape[0]} rows, operator expects {op.n}")
    return op.matrix @ M


def dense_operator(op: GraphOperator) -> np.ndarray:
    """Densify an operator (test oracles and small-graph inspection only)."""
    return op.matrix.toarray()


def read_edge_list(path) -> tuple[np.ndarray, int]:
    """Parse an edge-list file.

    One edge per line, two whitespace-separated decimal node ids; `#`
    starts a comment; blank lines are skipped. Returns the raw (m, 2)
    pair array and max id + 1 (0 for an empty file).

    Raises
    ------
    ValidationError
        On a malformed line, naming the line number.
    """
    pairs = []
    max_id = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValidationError(
                    f"{path}:{lineno}: expected two node ids, got {line.strip()!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: non-integer node id in {line.strip()!r}")
            if a < 0 or b < 0:
                raise ValidationError(f"{path}:{lineno}: negative node id")
            pairs.append((a, b))
            max_id = max(max_id, a, b)
    edges = np.array(pairs, dtype=np.int64).reshape(len(pairs), 2)
    return edges, max_id + 1


def write_edge_list(g: SparseGraph, path) -> None:
    """Write the canonical undirected edge set (u < v), one edge per line."""
    edges = g.edge_array()
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in edges:
            fh.write(f"{a} {b}\n")
