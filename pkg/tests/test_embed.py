import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.pipeline import Pipeline

from qphase import ValidationError
from qphase.embed import (
    DiffusionMap,
    KernelPCAEmbedding,
    KMeans,
    contiguous_runs,
    diffusion_map,
    double_center,
    kernel_pca,
    kmeans,
    same_partition,
    transition_matrix,
)


def two_blocks(a=4, b=3, across=0.0):
    K = np.full((a + b, a + b), across)
    K[:a, :a] = 1.0
    K[a:, a:] = 1.0
    return K


def random_kernel(seed, N=8):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, 3))
    return np.exp(-((X[:, None] - X[None]) ** 2).sum(-1))


def test_two_block_diffusion_signs():
    res = diffusion_map(two_blocks(), dims=1)
    c = res.coordinates[:, 0]
    assert np.ptp(c[:4]) < 1e-10 and np.ptp(c[4:]) < 1e-10
    assert np.sign(c[0]) == -np.sign(c[4])
    assert res.ties


def test_near_two_block_matches_eig_oracle():
    K = two_blocks(across=0.05)
    res = diffusion_map(K, dims=1)
    w, v = sla.eig(K / K.sum(1)[:, None])
    order = np.argsort(-w.real)
    assert res.eigenvalues[0] == pytest.approx(w.real[order[1]], abs=1e-12)
    oracle = v[:, order[1]].real
    corr = np.corrcoef(oracle, res.coordinates[:, 0])[0, 1]
    assert abs(corr) == pytest.approx(1.0, abs=1e-10)


def test_two_block_kpca_signs():
    c = kernel_pca(two_blocks(), dims=1).coordinates[:, 0]
    assert np.all(c[:4] * c[4:, None] < 0)


def test_all_ones_is_degenerate():
    assert diffusion_map(np.ones((5, 5))).degenerate
    assert kernel_pca(np.ones((5, 5))).degenerate


def test_leading_eigenpair_and_row_stochastic():
    K = random_kernel(0)
    P = transition_matrix(K)
    np.testing.assert_allclose(P.sum(1), 1.0, atol=1e-12)
    np.testing.assert_allclose(P @ np.ones(8), np.ones(8), atol=1e-10)
    w = np.linalg.eigvals(P)
    assert np.all(np.abs(w) <= 1 + 1e-10)
    res = diffusion_map(K, dims=3)
    assert res.metadata["spectrum"][0] == 1.0
    np.testing.assert_allclose(sorted(res.metadata["spectrum"], reverse=True), sorted(w.real, reverse=True),
                               atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_embedding_unit_std_and_determinism(seed):
    K = random_kernel(seed)
    a, b = diffusion_map(K, dims=2), diffusion_map(K, dims=2)
    assert np.array_equal(a.coordinates, b.coordinates)
    np.testing.assert_allclose(a.coordinates.std(0), 1.0, atol=1e-10)
    np.testing.assert_allclose(kernel_pca(K, 2).coordinates.std(0), 1.0, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-5.0, 5.0))
def test_kpca_invariant_under_constant_shift(seed, shift):
    K = random_kernel(seed)
    a = kernel_pca(K, 1).coordinates[:, 0]
    b = kernel_pca(K + shift, 1).coordinates[:, 0]
    assert min(np.abs(a - b).max(), np.abs(a + b).max()) < 1e-8


def test_centering_idempotent():
    C = double_center(random_kernel(3))
    assert np.abs(double_center(C) - C).max() <= 1e-12


def test_sign_convention():
    c = diffusion_map(random_kernel(5), dims=2).coordinates
    for j in range(2):
        assert c[np.argmax(np.abs(c[:, j])), j] > 0


def test_input_errors():
    with pytest.raises(ValidationError):
        diffusion_map(np.array([[1.0, 0.2], [0.1, 1.0]]))
    with pytest.raises(ValidationError):
        diffusion_map(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        kmeans(np.zeros((2, 1)), 3)
    with pytest.raises(ValidationError):
        kmeans(np.zeros((0, 1)), 1)


def test_kmeans_trivial_cases():
    res = kmeans(np.array([[0.0], [10.0], [20.0]]), 3)
    assert sorted(res.labels.tolist()) == [0, 1, 2]
    assert res.inertia == 0.0
    dup = np.array([[1.0, 1.0]] * 3 + [[4.0, -2.0]] * 2)
    res = kmeans(dup, 2, seed=4)
    assert sorted(map(tuple, res.centers.tolist())) == [(1.0, 1.0), (4.0, -2.0)]


def test_kmeans_recovers_blobs_on_100_seeds():
    means = np.array([[0.0, 0.0], [5.0, 0.0], [2.5, 5.0]])
    truth = np.repeat(np.arange(3), 20)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = means[truth] + 0.1 * rng.standard_normal((60, 2))
        assert same_partition(kmeans(X, 3, seed=seed).labels, truth)


def test_kmeans_inertia_non_increasing():
    X = np.random.default_rng(0).standard_normal((200, 2))
    res = kmeans(X, 5, seed=1)
    assert np.all(np.diff(res.inertia_history) <= 1e-12)
    assert len(np.unique(res.labels)) == 5


def test_partition_helpers():
    assert same_partition([0, 0, 1, 2], [2, 2, 0, 1])
    assert not same_partition([0, 0, 1], [0, 1, 1])
    assert contiguous_runs([0, 0, 1, 1, 2]) == 3
    assert contiguous_runs([0, 1, 0]) == 3


def test_sklearn_pipeline_composition():
    K = two_blocks(across=0.05)
    pipe = Pipeline([("embed", DiffusionMap(n_components=1)), ("cluster", KMeans(n_clusters=2))])
    labels = pipe.fit_predict(K)
    assert same_partition(labels, [0] * 4 + [1] * 3)
    assert KernelPCAEmbedding(1).fit_transform(K).shape == (7, 1)
    assert pipe.get_params()["cluster__n_clusters"] == 2


def test_csv_exports():
    res = kernel_pca(two_blocks(), 1)
    text = res.to_csv([{"cls": "a"}] * 4 + [{"cls": "b"}] * 3)
    assert text.splitlines()[0] == "sample,cls,dim1"
    labels = kmeans(res.coordinates, 2).to_csv()
    assert labels.splitlines()[0] == "sample,label"
