"""Fidelity, entanglement and shadow kernels plus kernel-matrix assembly.

All kernels here are exponentials, so they are evaluated in log space and
only exponentiated at the end. Cosine normalization
``K(i, j) / sqrt(K(i, i) K(j, j))`` then reduces to a difference of logs,
which stays finite even when the raw values overflow.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ValidationError, rng_for
from .shadows import ShadowEnsemble, log_shadow_kernel
from .statespace import ChainOrdering, DensityMatrix, EntanglementProfile

KINDS = ("fidelity", "entanglement", "shadow")
SUBSET_POLICIES = ("adjacent", "uniform", "all")


def shadow_limit_weights(nu, r_max):
    """Weights ``nu^r / r!`` for ``r = 1..r_max``."""
    return {r: nu**r / math.factorial(r) for r in range(1, r_max + 1)}


@dataclass(frozen=True)
class KernelConfig:
    """Hyperparameters of one kernel.

    ``weights`` maps subset size ``r`` to its weight; ``None`` means only
    ``r = r_max`` with weight ``1/n``. ``n_subsets`` defaults to ``n``.
    """

    kind: str = "fidelity"
    beta: float = 1.0
    r_max: int = 2
    weights: dict = None
    n_subsets: int = None
    subset_policy: str = "adjacent"
    nu: float = 1.0
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.beta > 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if int(self.r_max) < 1:
            raise ValidationError(f"r_max must be >= 1, got {self.r_max}")
        if self.subset_policy not in SUBSET_POLICIES:
            raise ValidationError(f"subset_policy must be one of {SUBSET_POLICIES}, got {self.subset_policy!r}")
        if self.n_subsets is not None and int(self.n_subsets) < 1:
            raise ValidationError(f"n_subsets must be >= 1, got {self.n_subsets}")
        if self.weights is not None:
            w = {int(r): float(v) for r, v in dict(self.weights).items()}
            if any(v < 0 for v in w.values()):
                raise ValidationError("weights must be nonnegative")
            if any(r < 1 or r > self.r_max for r in w):
                raise ValidationError(f"weights keys must lie in 1..r_max={self.r_max}")
            object.__setattr__(self, "weights", w)

    def resolved_weights(self, n):
        if self.weights is not None:
            return dict(self.weights)
        return {int(self.r_max): 1.0 / n}

    def to_dict(self):
        return asdict(self)


def draw_subsets(n, r, count, policy="adjacent", seed=0, ordering=None):
    """Seeded draw of ``count`` size-``r`` qubit subsets, shared across a dataset.

    ``adjacent`` samples windows of ``r`` consecutive chain sites, ``uniform``
    samples arbitrary ``r``-subsets, and ``all`` returns every ``r``-subset.
    Sampling is with replacement when the pool is smaller than ``count``.
    """
    ordering = ordering or ChainOrdering.identity(n)
    if r > n:
        raise ValidationError(f"subset size {r} exceeds n={n}")
    if policy == "all":
        return [tuple(c) for c in combinations(range(n), r)]
    rng = rng_for(seed, r)
    if policy == "adjacent":
        pool = [tuple(sorted(ordering.window(p, r))) for p in range(n - r + 1)]
        pick = rng.choice(len(pool), size=count, replace=count > len(pool))
        return [pool[i] for i in pick]
    if policy == "uniform":
        return [tuple(sorted(rng.choice(n, size=r, replace=False).tolist())) for _ in range(count)]
    raise ValidationError(f"unknown subset policy {policy!r}")


def _rdm_matrix(provider, subset):
    rho = provider.reduced_density_matrix(subset)
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def _clean_batch(w):
    cutoff = 64 * np.finfo(float).eps * np.abs(w).max(axis=-1, keepdims=True)
    return np.where(w > cutoff, w, 0.0)


def _sqrt_batch(mats):
    w, v = np.linalg.eigh(mats)
    return (v * np.sqrt(_clean_batch(w))[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def _fidelity_batch(sqrt_a, b):
    """Root fidelities of stacked pairs; same spectral cleaning as ``uhlmann_fidelity``."""
    m = sqrt_a @ b @ sqrt_a
    m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
    f = np.sqrt(_clean_batch(np.linalg.eigvalsh(m))).sum(axis=-1)
    return np.clip(f, 0.0, 1.0)


class _RDMCache:
    """Reduced density matrices (and their square roots) of one state on the shared subsets."""

    def __init__(self, provider, groups):
        self.n = _qubit_count(provider)
        self.rdms = {r: np.stack([_rdm_matrix(provider, s) for s in subs]) for r, subs in groups.items()}
        self.roots = {r: _sqrt_batch(m) for r, m in self.rdms.items()}


def _qubit_count(provider):
    n = getattr(provider, "n", None)
    if n is None:
        raise ValidationError(f"{type(provider).__name__} does not report a qubit count")
    return int(n)


def _log_fidelity(a, b, beta, weights):
    if a.n != b.n:
        raise ValidationError(f"states cover {a.n} and {b.n} qubits")
    total = 0.0
    for r in sorted(weights):
        total += weights[r] * float(_fidelity_batch(a.roots[r], b.rdms[r]).sum())
    return beta * total


def _subset_groups(n, config, ordering=None):
    count = n if config.n_subsets is None else int(config.n_subsets)
    weights = config.resolved_weights(n)
    return {
        r: draw_subsets(n, r, count, config.subset_policy, config.seed, ordering)
        for r in sorted(weights)
        if weights[r] > 0
    }, weights


def fidelity_kernel(a, b, config=None, subsets=None):
    """``exp{ beta sum_r w_r sum_D F[rho_a(D), rho_b(D)] }`` over shared subsets ``D``.

    ``subsets`` maps ``r`` to a list of subsets; if omitted they are drawn
    from ``config``.
    """
    config = config or KernelConfig()
    n = _qubit_count(a)
    groups, weights = _subset_groups(n, config, getattr(a, "ordering", None))
    if subsets is not None:
        groups = {int(r): [tuple(s) for s in v] for r, v in subsets.items()}
    return float(np.exp(_log_fidelity(_RDMCache(a, groups), _RDMCache(b, groups), config.beta, weights)))


def _as_profile(item):
    if isinstance(item, EntanglementProfile):
        return item
    if hasattr(item, "entanglement_profile"):
        return item.entanglement_profile()
    return EntanglementProfile(np.asarray(item, dtype=float))


def _log_entanglement(p, q, beta):
    return -(beta / p.n) * p.l1_distance(q)


def entanglement_kernel(p, q, beta=1.0):
    """``exp(-(beta/n) sum_k |S_k(p) - S_k(q)|)``."""
    return float(np.exp(_log_entanglement(_as_profile(p), _as_profile(q), beta)))


@dataclass
class KernelMatrix:
    """A kernel matrix with its raw (unnormalized) log values and provenance."""

    values: np.ndarray
    log_raw: np.ndarray
    normalization: str = "cosine"
    metadata: dict = field(default_factory=dict)

    @property
    def raw(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_raw)

    @property
    def raw_diagonal(self):
        return np.diag(self.raw).copy()

    def to_csv(self):
        n = self.values.shape[0]
        lines = ["," + ",".join(str(j) for j in range(n))]
        for i in range(n):
            lines.append(f"{i}," + ",".join("%.17g" % v for v in self.values[i]))
        return "\n".join(lines) + "\n"

    def sidecar(self):
        meta = dict(self.metadata)
        meta["normalization"] = self.normalization
        meta["raw_diagonal"] = [float("%.17g" % v) for v in self.raw_diagonal]
        meta["log_raw_diagonal"] = [float("%.17g" % v) for v in np.diag(self.log_raw)]
        return json.dumps(meta, sort_keys=True, indent=2, default=_json_default)

    def save(self, csv_path, json_path=None):
        with open(csv_path, "w", newline="\n") as fh:
            fh.write(self.to_csv())
        if json_path is not None:
            with open(json_path, "w", newline="\n") as fh:
                fh.write(self.sidecar() + "\n")

    @classmethod
    def from_csv(cls, text, normalization="cosine"):
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in rows])
        return cls(values, np.log(np.clip(values, 1e-300, None)), normalization)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.ndarray, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cosine_normalize(log_k):
    """``exp(log K_ij - (log K_ii + log K_jj) / 2)``, symmetrized."""
    d = np.diag(log_k)
    out = np.exp(log_k - 0.5 * (d[:, None] + d[None, :]))
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


class _BaseKernel(BaseEstimator, TransformerMixin):
    """Shared fit/transform logic; subclasses supply ``_prepare`` and ``_log_pair``."""

    def fit(self, X, y=None):
        X = self._check_dataset(X)
        self._setup(X)
        self.fit_items_ = [self._prepare(x) for x in X]
        self.fit_self_ = np.array([self._log_pair(p, p) for p in self.fit_items_])
        self.n_samples_fit_ = len(X)
        return self

    def transform(self, X):
        """Kernel rows ``K(x, x_fit)`` for each ``x`` in ``X`` (cosine-normalized if enabled)."""
        if not hasattr(self, "fit_items_"):
            raise ValidationError(f"{type(self).__name__} is not fitted")
        X = self._check_dataset(X)
        items = [self._prepare(x) for x in X]
        log_k = np.array([[self._log_pair(a, b) for b in self.fit_items_] for a in items])
        if not self.normalize:
            return np.exp(log_k)
        own = np.array([self._log_pair(a, a) for a in items])
        return np.exp(log_k - 0.5 * (own[:, None] + self.fit_self_[None, :]))

    def fit_transform(self, X, y=None):
        return self.kernel_matrix(X).values

    def kernel_matrix(self, X, n_jobs=1):
        """Fit on ``X`` and return the symmetric :class:`KernelMatrix` of ``X``."""
        self.fit(X)
        items = self.fit_items_
        n = len(items)

        def row(i):
            return [self._log_pair(items[i], items[j]) for j in range(i + 1, n)]

        if n_jobs and n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                rows = list(pool.map(row, range(n)))
        else:
            rows = [row(i) for i in range(n)]
        log_k = np.diag(self.fit_self_).astype(float)
        for i, vals in enumerate(rows):
            log_k[i, i + 1:] = vals
            log_k[i + 1:, i] = vals
        values = cosine_normalize(log_k) if self.normalize else np.exp(log_k)
        meta = {"kind": self.kind, "params": self.get_params(), "n_samples": n}
        meta.update(self._extra_metadata())
        return KernelMatrix(values, log_k, "cosine" if self.normalize else "none", meta)

    def _setup(self, X):
        pass

    def _extra_metadata(self):
        return {}

    @staticmethod
    def _check_dataset(X):
        X = list(X)
        if not X:
            raise ValidationError("dataset is empty")
        kinds = {type(x) for x in X}
        if len(kinds) > 1:
            raise ValidationError(f"heterogeneous dataset: {sorted(k.__name__ for k in kinds)}")
        return X


class FidelityKernel(_BaseKernel):
    """Fidelity kernel over reduced density matrices on a shared random subset draw.

    Works with any object exposing ``n`` and ``reduced_density_matrix(subset)``.
    Subsets are drawn once in :meth:`fit` and reused for :meth:`transform`.
    """

    kind = "fidelity"

    def __init__(self, beta=1.0, r_max=2, weights=None, n_subsets=None,
                 subset_policy="adjacent", random_state=0, normalize=True):
        self.beta = beta
        self.r_max = r_max
        self.weights = weights
        self.n_subsets = n_subsets
        self.subset_policy = subset_policy
        self.random_state = random_state
        self.normalize = normalize

    def _config(self):
        return KernelConfig("fidelity", self.beta, self.r_max, self.weights, self.n_subsets,
                            self.subset_policy, seed=self.random_state, normalize=self.normalize)

    def _setup(self, X):
        ns = {_qubit_count(x) for x in X}
        if len(ns) > 1:
            raise ValidationError(f"states cover different qubit counts: {sorted(ns)}")
        n = ns.pop()
        self.subsets_, self.weights_ = _subset_groups(n, self._config(), getattr(X[0], "ordering", None))

    def _prepare(self, x):
        return _RDMCache(x, self.subsets_)

    def _log_pair(self, a, b):
        return _log_fidelity(a, b, self.beta, self.weights_)

    def _extra_metadata(self):
        return {"subsets": {str(r): [list(s) for s in v] for r, v in self.subsets_.items()},
                "weights": {str(r): w for r, w in self.weights_.items()}}


class EntanglementKernel(_BaseKernel):
    """Entanglement kernel over chain entanglement profiles (states or profiles accepted)."""

    kind = "entanglement"

    def __init__(self, beta=1.0, normalize=True):
        self.beta = beta
        self.normalize = normalize

    def _prepare(self, x):
        return _as_profile(x)

    def _log_pair(self, a, b):
        return _log_entanglement(a, b, self.beta)


class ShadowKernel(_BaseKernel):
    """Shadow kernel over :class:`~qphase.shadows.ShadowEnsemble` inputs."""

    kind = "shadow"

    def __init__(self, beta=1.0, nu=1.0, normalize=True):
        self.beta = beta
        self.nu = nu
        self.normalize = normalize

    def _prepare(self, x):
        if not isinstance(x, ShadowEnsemble):
            raise ValidationError(f"shadow kernel needs ShadowEnsemble inputs, got {type(x).__name__}")
        return x

    def _log_pair(self, a, b):
        return log_shadow_kernel(a, b, self.beta, self.nu)


def kernel_from_config(config):
    """Estimator matching a :class:`KernelConfig`."""
    if config.kind == "fidelity":
        return FidelityKernel(config.beta, config.r_max, config.weights, config.n_subsets,
                              config.subset_policy, config.seed, config.normalize)
    if config.kind == "entanglement":
        return EntanglementKernel(config.beta, config.normalize)
    return ShadowKernel(config.beta, config.nu, config.normalize)


def build_kernel_matrix(dataset, config, n_jobs=1, sample_metadata=None):
    """Pairwise kernel matrix of ``dataset`` under ``config`` (cosine-normalized by default)."""
    km = kernel_from_config(config).kernel_matrix(dataset, n_jobs=n_jobs)
    km.metadata["config"] = config.to_dict()
    if sample_metadata is not None:
        km.metadata["samples"] = list(sample_metadata)
    return km
