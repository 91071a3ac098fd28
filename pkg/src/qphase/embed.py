"""Spectral embeddings of kernel matrices and k-means clustering."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import ValidationError, rng_for

SYMMETRY_TOL = 1e-10
TIE_TOL = 1e-10
ZERO_EIG = 1e-10


@dataclass
class EmbeddingResult:
    coordinates: np.ndarray
    eigenvalues: np.ndarray
    method: str
    indices: tuple
    degenerate: bool = False
    ties: bool = False
    metadata: dict = field(default_factory=dict)

    def to_csv(self, sample_metadata=None):
        return _coords_csv(self.coordinates, [f"dim{i}" for i in self.indices], sample_metadata)


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_history: list = field(default_factory=list)

    def to_csv(self, sample_metadata=None):
        return _coords_csv(self.labels[:, None], ["label"], sample_metadata, fmt="%d")


def _coords_csv(values, names, sample_metadata=None, fmt="%.17g"):
    meta = list(sample_metadata) if sample_metadata is not None else [{} for _ in range(len(values))]
    keys = sorted({k for m in meta for k in m})
    lines = [",".join(["sample"] + keys + list(names))]
    for i, row in enumerate(values):
        extra = [_cell(meta[i].get(k, "")) for k in keys]
        lines.append(",".join([str(i)] + extra + [fmt % v for v in row]))
    return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v).replace(",", ";")


def _check_kernel(K, nonnegative=False):
    K = check_array(np.asarray(K, dtype=float), ensure_min_samples=1, ensure_min_features=1)
    if K.shape[0] != K.shape[1]:
        raise ValidationError(f"kernel matrix must be square, got {K.shape}")
    asym = float(np.max(np.abs(K - K.T)))
    if asym > SYMMETRY_TOL:
        raise ValidationError(f"kernel matrix is not symmetric (max deviation {asym:.3g})")
    if nonnegative and K.min() < -1e-12:
        raise ValidationError("diffusion map needs nonnegative affinities")
    return 0.5 * (K + K.T)


def _values(K):
    return K.values if hasattr(K, "values") and not isinstance(K, np.ndarray) else K


def _fix_signs(vecs):
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def _standardize(coords):
    std = coords.std(axis=0)
    flat = std < 1e-12 * max(1.0, float(np.abs(coords).max(initial=0.0)))
    out = coords.copy()
    out[:, ~flat] /= std[~flat]
    return out, bool(flat.any())


def _has_ties(eigs, picked):
    return any(
        abs(eigs[i] - eigs[j]) < TIE_TOL for i in picked for j in range(len(eigs)) if j != i
    )


def transition_matrix(K):
    """Row-stochastic ``P = D^-1 K``."""
    K = _check_kernel(_values(K), nonnegative=True)
    d = K.sum(axis=1)
    if np.any(d <= 0):
        raise ValidationError("kernel matrix has a zero row sum")
    return K / d[:, None]


def diffusion_map(K, dims=2, eigen_indices=None):
    """Diffusion-map coordinates from eigenvectors of ``P = D^-1 K`` (diffusion time 1).

    ``eigen_indices`` are 1-based with the trivial constant eigenvector at 1;
    the default picks ``2 .. dims + 1``. Each coordinate is the eigenvector
    scaled by its eigenvalue, then divided by its standard deviation.
    """
    K = _check_kernel(_values(K), nonnegative=True)
    N = K.shape[0]
    d = K.sum(axis=1)
    if np.any(d <= 0):
        raise ValidationError("kernel matrix has a zero row sum")
    indices = tuple(eigen_indices) if eigen_indices is not None else tuple(range(2, dims + 2))
    if any(i < 1 or i > N for i in indices):
        raise ValidationError(f"eigen_indices {indices} out of range 1..{N}")
    inv_sqrt = 1.0 / np.sqrt(d)
    # P is similar to the symmetric D^-1/2 K D^-1/2, which has the same spectrum
    A = inv_sqrt[:, None] * K * inv_sqrt[None, :]
    # deflate the known trivial pair (1, sqrt(d)) so disconnected blocks give
    # nontrivial vectors orthogonal to it instead of an arbitrary basis
    phi0 = np.sqrt(d) / np.linalg.norm(np.sqrt(d))
    A = A - np.outer(phi0, phi0)
    w, phi = np.linalg.eigh(0.5 * (A + A.T))
    keep = np.sort(np.argsort(np.abs(phi0 @ phi), kind="stable")[: N - 1])
    rest = phi[:, keep] - np.outer(phi0, phi0 @ phi[:, keep])
    rest /= np.maximum(np.linalg.norm(rest, axis=0), 1e-300)
    order = np.argsort(-w[keep], kind="stable")
    w = np.concatenate([[1.0], w[keep][order]])
    phi = np.column_stack([phi0, rest[:, order]])
    psi = inv_sqrt[:, None] * phi
    psi /= np.linalg.norm(psi, axis=0)
    picked = [i - 1 for i in indices]
    coords = _fix_signs(psi[:, picked] * w[picked])
    coords, flat = _standardize(coords)
    degenerate = flat or bool(np.any(np.abs(w[picked]) < ZERO_EIG))
    return EmbeddingResult(coords, w[picked].copy(), "diffusion_map", indices, degenerate,
                           _has_ties(w, picked), {"spectrum": w.tolist(), "diffusion_time": 1})


def double_center(K):
    K = np.asarray(K, dtype=float)
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    return K - row - col + K.mean()


def kernel_pca(K, dims=1):
    """Top ``dims`` principal coordinates of the double-centered kernel, standardized."""
    K = _check_kernel(_values(K))
    N = K.shape[0]
    if dims < 1 or dims > N:
        raise ValidationError(f"dims must lie in 1..{N}, got {dims}")
    C = double_center(K)
    w, v = np.linalg.eigh(0.5 * (C + C.T))
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    picked = list(range(dims))
    coords = _fix_signs(v[:, picked] * np.sqrt(np.clip(w[picked], 0.0, None)))
    coords, flat = _standardize(coords)
    scale = max(1.0, float(np.abs(K).max()))
    degenerate = flat or bool(np.any(w[picked] <= ZERO_EIG * scale))
    return EmbeddingResult(coords, w[picked].copy(), "kernel_pca", tuple(i + 1 for i in picked),
                           degenerate, _has_ties(w, picked), {"spectrum": w.tolist()})


def _kmeans_pp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = int(rng.integers(len(X))) if total <= 0 else int(rng.choice(len(X), p=d2 / total))
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _assign(X, centers):
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(len(X)), labels].sum())


def _lloyd(X, k, rng, max_iter, tol):
    centers = _kmeans_pp(X, k, rng)
    labels, inertia = _assign(X, centers)
    history = [inertia]
    it = 0
    for it in range(1, max_iter + 1):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
            else:
                # refill an empty cluster with the point farthest from its center
                far = np.argmax(((X - centers[labels]) ** 2).sum(axis=1))
                centers[c] = X[far]
        labels, new = _assign(X, centers)
        history.append(new)
        change = (inertia - new) / inertia if inertia > 0 else 0.0
        inertia = new
        if change < tol:
            break
    return ClusterAssignment(labels, centers, inertia, it, history)


def kmeans(coords, k, seed=0, n_init=10, max_iter=300, tol=1e-8):
    """k-means++ seeding and Lloyd iterations; the best of ``n_init`` seeded restarts."""
    coords = np.asarray(coords, dtype=float)
    if coords.size == 0:
        raise ValidationError("kmeans needs at least one point")
    X = check_array(coords.reshape(len(coords), -1))
    if not 1 <= k <= len(X):
        raise ValidationError(f"k must lie in 1..{len(X)}, got {k}")
    best = None
    for restart in range(n_init):
        run = _lloyd(X, k, rng_for(seed, restart), max_iter, tol)
        if len(np.unique(run.labels)) < k:
            continue
        if best is None or run.inertia < best.inertia - 1e-12 * max(1.0, best.inertia):
            best = run
    if best is None:
        # only possible with fewer than k distinct points
        raise ValidationError(f"cannot form {k} nonempty clusters from the given points")
    return best


def same_partition(a, b):
    """True if two label vectors describe the same partition up to relabeling."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    fwd, back = {}, {}
    for x, y in zip(a.tolist(), b.tolist()):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def contiguous_runs(labels):
    """Number of maximal runs of equal labels along the sample order."""
    labels = np.asarray(labels)
    return int(1 + np.count_nonzero(labels[1:] != labels[:-1])) if labels.size else 0


def _fitted_embedding(est, K):
    if not hasattr(est, "embedding_"):
        raise ValidationError(f"{type(est).__name__} is not fitted")
    if not np.array_equal(np.asarray(_values(K), dtype=float), est.fit_kernel_):
        raise ValidationError("out-of-sample embedding is not supported; pass the fitted kernel matrix")
    return est.embedding_


class DiffusionMap(BaseEstimator, TransformerMixin):
    """Estimator wrapper of :func:`diffusion_map`; input is a precomputed kernel matrix."""

    def __init__(self, n_components=2, eigen_indices=None):
        self.n_components = n_components
        self.eigen_indices = eigen_indices

    def fit(self, K, y=None):
        self.result_ = diffusion_map(K, self.n_components, self.eigen_indices)
        self.fit_kernel_ = np.array(_values(K), dtype=float)
        self.embedding_ = self.result_.coordinates
        self.eigenvalues_ = self.result_.eigenvalues
        return self

    def transform(self, K):
        return _fitted_embedding(self, K)

    def fit_transform(self, K, y=None):
        return self.fit(K).embedding_


class KernelPCAEmbedding(BaseEstimator, TransformerMixin):
    """Estimator wrapper of :func:`kernel_pca`; input is a precomputed kernel matrix."""

    def __init__(self, n_components=1):
        self.n_components = n_components

    def fit(self, K, y=None):
        self.result_ = kernel_pca(K, self.n_components)
        self.fit_kernel_ = np.array(_values(K), dtype=float)
        self.embedding_ = self.result_.coordinates
        self.eigenvalues_ = self.result_.eigenvalues
        return self

    def transform(self, K):
        return _fitted_embedding(self, K)

    def fit_transform(self, K, y=None):
        return self.fit(K).embedding_


class KMeans(BaseEstimator, ClusterMixin):
    def __init__(self, n_clusters=3, n_init=10, max_iter=300, tol=1e-8, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        self.assignment_ = kmeans(X, self.n_clusters, self.random_state, self.n_init, self.max_iter, self.tol)
        self.labels_ = self.assignment_.labels
        self.cluster_centers_ = self.assignment_.centers
        self.inertia_ = self.assignment_.inertia
        return self

    def predict(self, X):
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1))
        return _assign(X, self.cluster_centers_)[0]
