"""Spectral embedding against dense eigendecompositions.

numpy.linalg.eigh on the densely assembled regularized matrix is the
oracle for every eigenpair claim; the Lanczos path must reproduce its
leading eigenvalues to 1e-6 and produce residuals below the requested
tolerance. Degenerate eigenvalues are compared as subspaces (principal
angles), never vector by vector.
"""

import numpy as np
import pytest

from conftest import random_graph
from correctsmooth.errors import ConvergenceError, ValidationError
from correctsmooth.graph import build_graph
from correctsmooth.matrixio import load_matrix
from correctsmooth.spectral import (SpectralEmbedding, augment_features,
                                    dense_regularized_matrix,
                                    embedding_cache_key, get_embedding,
                                    make_regularized_operator, reg_matvec,
                                    standardize_columns, top_eigs)


def dense_top(op, k):
    M = dense_regularized_matrix(op)
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(vals)[::-1][:k]
    return vals[order], vecs[:, order]


def test_k3_with_tau_2_has_unit_top_eigenvalue(k3):
    """K3, tau=2: top pair is exactly (1, ones/sqrt(3))."""
    op = make_regularized_operator(k3, tau=2.0)
    emb = top_eigs(op, k=1, seed=0)
    assert emb.values[0] == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(np.abs(emb.vectors[:, 0]), 1 / np.sqrt(3), atol=1e-10)
    assert emb.vectors[0, 0] > 0  # sign convention: first nonzero positive


def test_default_tau_is_average_degree(path3):
    op = make_regularized_operator(path3)
    assert op.tau == pytest.approx(4 / 3)  # 2 edges, 3 nodes


def test_tau_zero_with_isolated_node_rejected():
    g = build_graph(np.array([[0, 1]]), 3)
    with pytest.raises(ValidationError, match="isolated"):
        make_regularized_operator(g, tau=0.0)


def test_matvec_matches_dense_matrix(rng):
    for _ in range(20):
        g = random_graph(rng, n_min=3, n_max=40)
        op = make_regularized_operator(g)
        M = dense_regularized_matrix(op)
        x = rng.standard_normal(g.n)
        assert np.allclose(reg_matvec(op, x), M @ x, atol=1e-12)


def test_top_eigs_agrees_with_dense_oracle(rng):
    for trial in range(15):
        g = random_graph(rng, n_min=8, n_max=50)
        op = make_regularized_operator(g)
        k = int(rng.integers(1, min(6, g.n - 1) + 1))
        # default budget is 10k steps; tiny k with tight tol needs more
        emb = top_eigs(op, k, seed=trial, tol=1e-8, max_lanczos_iters=max(10 * k, g.n))
        vals, _ = dense_top(op, k)
        assert np.abs(emb.values - vals).max() <= 1e-6, f"trial {trial}"
        M = dense_regularized_matrix(op)
        resid = M @ emb.vectors - emb.vectors * emb.values[None, :]
        assert np.abs(resid).max() <= 1e-6
        gram = emb.vectors.T @ emb.vectors
        assert np.allclose(gram, np.eye(k), atol=1e-8)


def test_eigenvalues_never_exceed_one(rng):
    """The regularized operator is similar to a stochastic-like matrix."""
    for _ in range(10):
        g = random_graph(rng, n_min=4, n_max=40)
        op = make_regularized_operator(g)
        emb = top_eigs(op, min(4, g.n - 1), seed=0)
        assert emb.values.max() <= 1.0 + 1e-10


def test_degenerate_top_eigenvalue_surfaces_full_subspace(two_triangles):
    """Two disjoint triangles: the top eigenvalue has multiplicity 2.

    Individual eigenvectors are not unique; compare the spanned
    subspaces through principal angles instead.
    """
    op = make_regularized_operator(two_triangles, tau=0.0)
    emb = top_eigs(op, k=2, seed=0)
    vals, vecs = dense_top(op, 2)
    assert np.abs(emb.values - vals).max() <= 1e-8
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)
    cosines = np.linalg.svd(emb.vectors.T @ vecs, compute_uv=False)
    assert np.all(cosines >= 1.0 - 1e-8)


def test_top_eigs_is_deterministic(rng):
    g = random_graph(rng, n_min=10, n_max=30)
    op = make_regularized_operator(g)
    a = top_eigs(op, 3, seed=5)
    b = top_eigs(op, 3, seed=5)
    assert np.array_equal(a.vectors, b.vectors)
    assert np.array_equal(a.values, b.values)


def test_top_eigs_k_bounds(k3):
    op = make_regularized_operator(k3)
    with pytest.raises(ValidationError):
        top_eigs(op, 0)
    with pytest.raises(ValidationError):
        top_eigs(op, 3)  # k must stay below n


def test_standardize_columns():
    rng = np.random.default_rng(3)
    M = np.hstack([rng.standard_normal((50, 2)) * 7 + 3, np.full((50, 1), 2.0)])
    out = standardize_columns(M)
    assert np.allclose(out[:, :2].mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out[:, :2].std(axis=0), 1.0, atol=1e-12)
    assert np.all(out[:, 2] == 0.0)  # constant column zeroed, not divided


def test_augment_features_modes(rng, k3):
    op = make_regularized_operator(k3, tau=1.0)
    emb = top_eigs(op, 2, seed=0)
    X = rng.standard_normal((3, 4))
    raw = augment_features(X, None, "raw_only", standardize=False)
    assert np.array_equal(raw, X)
    spec = augment_features(None, emb, "spectral_only", standardize=False)
    assert spec.shape == (3, 2)
    both = augment_features(X, emb, "concat", standardize=False)
    assert both.shape == (3, 6)
    assert np.array_equal(both[:, :4], X)
    with pytest.raises(ValidationError):
        augment_features(None, emb, "raw_only")
    with pytest.raises(ValidationError):
        augment_features(X, None, "concat")
    with pytest.raises(ValidationError):
        augment_features(X, emb, "pca")


def test_embedding_cache_round_trip(tmp_path, rng):
    g = random_graph(rng, n_min=10, n_max=25)
    first = get_embedding(g, k=3, seed=1, cache_dir=tmp_path)
    key = embedding_cache_key(g, None, 3, 1)
    assert (tmp_path / f"{key}.vectors.bin").exists()
    again = get_embedding(g, k=3, seed=1, cache_dir=tmp_path)
    assert np.array_equal(first.vectors, again.vectors)
    assert np.array_equal(first.values, again.values)
    stored = load_matrix(tmp_path / f"{key}.vectors.bin")
    assert np.array_equal(stored, first.vectors)


def test_cache_key_distinguishes_graph_and_params(rng):
    g1 = random_graph(rng, n_min=10, n_max=20)
    g2 = random_graph(rng, n_min=10, n_max=20)
    assert embedding_cache_key(g1, None, 4, 0) != embedding_cache_key(g2, None, 4, 0)
    assert embedding_cache_key(g1, None, 4, 0) != embedding_cache_key(g1, None, 5, 0)
    assert embedding_cache_key(g1, 1.5, 4, 0) != embedding_cache_key(g1, None, 4, 0)


def test_spectral_embedding_row_count_matches_nodes(rng):
    g = random_graph(rng, n_min=12, n_max=30)
    emb = get_embedding(g, k=4)
    assert isinstance(emb, SpectralEmbedding)
    assert emb.vectors.shape == (g.n, 4)


def test_wrapper_budget_rescues_slowly_separating_spectra():
    """Near-ring lattices cluster their eigenvalues, so the raw solver's
    tight 10k step default gives up while the wrapper's headroom (early
    stopping makes it free elsewhere) lets the same problem finish."""
    from correctsmooth.synth import make_synthetic
    g = make_synthetic(n=500, seed=3, homophily=0.75, noise=2.2,
                       with_features=False).graph
    with pytest.raises(ConvergenceError, match="raise max_lanczos_iters"):
        top_eigs(make_regularized_operator(g), k=16, seed=0)
    emb = get_embedding(g, k=16, seed=0)
    op = make_regularized_operator(g)
    for j in range(16):
        v, lam = emb.vectors[:, j], emb.values[j]
        assert np.linalg.norm(reg_matvec(op, v) - lam * v) <= 1e-6
