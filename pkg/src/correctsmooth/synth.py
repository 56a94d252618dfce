"""Synthetic homophilous benchmarks for end-to-end exercise of the pipeline.

Planted-partition graphs whose noisy class-mean features give a base
predictor partial signal while the graph structure carries the rest, the
regime where residual correction and smoothing visibly help. Each class's
members are joined in a shuffled ring so no node is isolated, then random
edges are added, each staying within the class with probability
`homophily`.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .errors import ValidationError
from .graph import build_graph


def make_synthetic(n: int = 600, n_classes: int = 4, n_features: int = 16,
                   avg_degree: float = 8.0, homophily: float = 0.8,
                   separation: float = 1.0, noise: float = 2.0,
                   seed: int = 0, with_features: bool = True,
                   name: str = "synth") -> Dataset:
    if n < 4 * n_classes:
        raise ValidationError(f"need at least {4 * n_classes} nodes for {n_classes} classes")
    if not 0.0 <= homophily <= 1.0:
        raise ValidationError(f"homophily must lie in [0, 1], got {homophily}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % n_classes).astype(np.int64)

    edges = []
    members = [np.nonzero(labels == k)[0] for k in range(n_classes)]
    for group in members:
        ring = group[rng.permutation(group.size)]
        for i in range(ring.size):
            edges.append((int(ring[i]), int(ring[(i + 1) % ring.size])))

    n_extra = max(0, int(round(n * avg_degree / 2)) - len(edges))
    for _ in range(n_extra):
        u = int(rng.integers(n))
        if rng.random() < homophily:
            pool = members[labels[u]]
        else:
            pool = np.nonzero(labels != labels[u])[0]
        v = int(pool[rng.integers(pool.size)])
        if u != v:
            edges.append((u, v))

    graph = build_graph(np.asarray(edges, dtype=np.int64), n)

    features = None
    if with_features:
        means = separation * rng.standard_normal((n_classes, n_features))
        features = means[labels] + noise * rng.standard_normal((n, n_features))

    return Dataset(name=name, graph=graph, features=features,
                   labels=labels, n_classes=n_classes)
