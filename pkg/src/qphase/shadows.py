"""Classical shadows from randomized single-qubit Pauli measurements.

Each snapshot measures every qubit in a uniformly random basis X, Y or Z.
Inverting the measurement channel gives the local estimator
``sigma = 3 U^dag |b><b| U - I = (I + 3 s P) / 2`` with ``s = +-1`` the
outcome and ``P`` the measured Pauli; it has trace 1 and spectrum {2, -1}.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_subset, rng_for
from .pauli import MATRICES
from .statespace import FORMAT_VERSION, DensityMatrix, apply_local

BASES = "XYZ"
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_SDG = np.diag([1.0, -1j])
# rotation taking the measured Pauli's eigenbasis to the computational basis
_ROTATIONS = (_HADAMARD, _HADAMARD @ _SDG, np.eye(2, dtype=complex))
# tr(sigma sigma') for (same basis, same outcome), (same basis, opposite), (different basis)
_TRACE_SAME, _TRACE_FLIP, _TRACE_OTHER = 5.0, -4.0, 0.5


def local_estimator(basis, outcome):
    """``(I + 3 s P) / 2`` for basis index 0/1/2 (X/Y/Z) and outcome bit 0/1 (s = +1/-1)."""
    s = 1.0 - 2.0 * int(outcome)
    return 0.5 * (np.eye(2) + 3.0 * s * MATRICES[BASES[int(basis)]])


@dataclass(frozen=True, eq=False)
class ShadowEnsemble:
    """``T`` snapshots: ``bases[t, i]`` in {0, 1, 2} and ``outcomes[t, i]`` in {0, 1}."""

    bases: np.ndarray
    outcomes: np.ndarray
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.array(self.bases, dtype=np.uint8)
        o = np.array(self.outcomes, dtype=np.uint8)
        if b.ndim != 2 or b.shape != o.shape or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValidationError(f"bases and outcomes must be matching (T, n) arrays, got {b.shape}, {o.shape}")
        if b.max() > 2 or o.max() > 1:
            raise ValidationError("bases must lie in {0,1,2} and outcomes in {0,1}")
        b.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "bases", b)
        object.__setattr__(self, "outcomes", o)

    @property
    def T(self):
        return self.bases.shape[0]

    @property
    def n(self):
        return self.bases.shape[1]

    def signs(self):
        return 1.0 - 2.0 * self.outcomes

    def sample(self, t):
        """Basis string and outcome bits of snapshot ``t``."""
        return "".join(BASES[b] for b in self.bases[t]), "".join(str(o) for o in self.outcomes[t])

    def to_text(self):
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "shadow_ensemble",
            "n": self.n,
            "T": self.T,
            "seed": self.seed,
            "meta": self.meta,
        }
        lines = [json.dumps(header, sort_keys=True)]
        lines += [" ".join(self.sample(t)) for t in range(self.T)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.strip().splitlines()
        header = json.loads(lines[0])
        if header.get("kind") != "shadow_ensemble" or header.get("format_version") != FORMAT_VERSION:
            raise ValidationError("not a supported shadow_ensemble record")
        rows = [ln.split() for ln in lines[1:]]
        if len(rows) != header["T"]:
            raise ValidationError(f"header says T={header['T']} but {len(rows)} samples follow")
        bases = [[BASES.index(c) for c in b] for b, _ in rows]
        outcomes = [[int(c) for c in o] for _, o in rows]
        return cls(np.array(bases), np.array(outcomes), header.get("seed"), header.get("meta", {}))


def collect_shadows(state, T, seed, meta=None):
    """Simulate ``T`` randomized Pauli snapshots of a dense pure state.

    Bases are drawn first, then outcomes for each distinct basis string
    (in sorted order) from exact Born probabilities.
    """
    if int(T) < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    rng = rng_for(seed)
    n = state.n
    bases = rng.integers(0, 3, size=(int(T), n)).astype(np.uint8)
    outcomes = np.zeros_like(bases)
    uniq, inverse = np.unique(bases, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    shifts = np.arange(n - 1, -1, -1)
    for u, row in enumerate(uniq):
        psi = state.amplitudes
        for q, b in enumerate(row):
            if b != 2:
                psi = apply_local(psi, _ROTATIONS[b], (q,))
        p = np.abs(psi) ** 2
        rows = np.flatnonzero(inverse == u)
        idx = rng.choice(p.size, size=rows.size, p=p / p.sum())
        outcomes[rows] = (idx[:, None] >> shifts) & 1
    info = dict(meta or {})
    info.setdefault("source", state.meta.get("label") if hasattr(state, "meta") else None)
    return ShadowEnsemble(bases, outcomes, seed if not isinstance(seed, np.random.Generator) else None, info)


def shadow_rdm(ensemble, subset, project=False):
    """Shadow estimate ``(1/T) sum_t kron_{i in subset} sigma_i^(t)`` of a reduced density matrix.

    The raw estimate is Hermitian with unit trace but may have negative
    eigenvalues. With ``project=True`` negative eigenvalues are clipped and the
    result renormalized into a :class:`DensityMatrix` (this biases the estimator).
    """
    subset = check_subset(subset, ensemble.n, max_size=4)
    cols = list(subset)
    codes = ensemble.bases[:, cols].astype(np.int64) * 2 + ensemble.outcomes[:, cols]
    uniq, counts = np.unique(codes, axis=0, return_counts=True)
    k = len(subset)
    est = np.zeros((1 << k, 1 << k), dtype=complex)
    for row, c in zip(uniq, counts):
        m = np.ones((1, 1), dtype=complex)
        for code in row:
            m = np.kron(m, local_estimator(code // 2, code % 2))
        est += c * m
    est /= ensemble.T
    est = 0.5 * (est + est.conj().T)
    if not project:
        return est
    w, v = np.linalg.eigh(est)
    w = np.clip(w, 0.0, None)
    rho = (v * (w / w.sum())) @ v.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T), subset)


def shadow_expectation(ensemble, label, n_groups=None):
    """Estimate ``<P>`` for a Pauli string; optional median of ``n_groups`` batch means."""
    if len(label) != ensemble.n:
        raise ValidationError(f"Pauli string length {len(label)} does not match n={ensemble.n}")
    vals = np.ones(ensemble.T)
    s = ensemble.signs()
    for q, c in enumerate(label):
        if c == "I":
            continue
        hit = ensemble.bases[:, q] == BASES.index(c)
        vals = vals * np.where(hit, 3.0 * s[:, q], 0.0)
    if not n_groups or n_groups <= 1:
        return float(vals.mean())
    return float(np.median([g.mean() for g in np.array_split(vals, n_groups)]))


def _pair_traces(e1, e2):
    """``S[t, t'] = sum_i tr(sigma_i^(t) sigma~_i^(t'))``."""
    total = np.zeros((e1.T, e2.T))
    s1, s2 = e1.signs(), e2.signs()
    for i in range(e1.n):
        same = e1.bases[:, i][:, None] == e2.bases[:, i][None, :]
        agree = s1[:, i][:, None] * s2[:, i][None, :]
        total += np.where(same, np.where(agree > 0, _TRACE_SAME, _TRACE_FLIP), _TRACE_OTHER)
    return total


def _canonical(e1, e2):
    key1 = (e1.T, e1.bases.tobytes(), e1.outcomes.tobytes())
    key2 = (e2.T, e2.bases.tobytes(), e2.outcomes.tobytes())
    return (e1, e2) if key1 <= key2 else (e2, e1)


def log_shadow_kernel(e1, e2, beta=1.0, nu=1.0):
    if e1.n != e2.n:
        raise ValidationError(f"ensembles cover {e1.n} and {e2.n} qubits")
    a, b = _canonical(e1, e2)
    inner = np.exp((nu / a.n) * _pair_traces(a, b))
    return float(beta * inner.sum() / (a.T * b.T))


def shadow_kernel(e1, e2, beta=1.0, nu=1.0):
    """``exp{ beta/(T T') sum_{t,t'} exp[ nu/n sum_i tr(sigma_i^(t) sigma~_i^(t')) ] }``.

    Overflows to ``inf`` for large ``beta`` or ``nu``; :func:`log_shadow_kernel`
    stays finite.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(log_shadow_kernel(e1, e2, beta, nu)))
