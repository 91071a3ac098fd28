"""Dense pure and mixed qubit states.

Qubit 0 is the most significant bit of a computational-basis index, so the
amplitude of ``|b_0 b_1 ... b_{n-1}>`` sits at ``int("b_0...b_{n-1}", 2)``.
A :class:`ChainOrdering` records how the qubits are laid out along a 1D chain;
entanglement cuts are taken along that chain, not along qubit labels.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    EIG_DROP,
    HERMITIAN_TOL,
    NORM_TOL,
    PSD_FLOOR,
    TRACE_TOL,
    ValidationError,
    check_qubit_count,
    check_square,
    check_subset,
)

FORMAT_VERSION = 1
LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class ChainOrdering:
    """Permutation placing qubits on a chain: ``order[p]`` is the qubit at position ``p``."""

    order: tuple

    def __post_init__(self):
        order = tuple(int(q) for q in self.order)
        if sorted(order) != list(range(len(order))) or not order:
            raise ValidationError(f"ordering must be a permutation of 0..n-1, got {order}")
        object.__setattr__(self, "order", order)

    @property
    def n(self):
        return len(self.order)

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(check_qubit_count(n))))

    @classmethod
    def snake(cls, Lx, Ly, per_cell=1):
        """Row-major snake over an ``Lx x Ly`` grid of cells with ``per_cell`` qubits each.

        Even rows run left to right, odd rows right to left, so consecutive
        cells on the chain are always lattice neighbours.
        """
        order = []
        for y in range(Ly):
            xs = range(Lx) if y % 2 == 0 else range(Lx - 1, -1, -1)
            for x in xs:
                base = (y * Lx + x) * per_cell
                order.extend(range(base, base + per_cell))
        return cls(tuple(order))

    def position(self, qubit):
        return self.order.index(qubit)

    def adjacent_pairs(self):
        """Qubit pairs sitting on neighbouring chain positions."""
        return [(self.order[p], self.order[p + 1]) for p in range(self.n - 1)]

    def window(self, start, size):
        return tuple(self.order[start:start + size])


@dataclass(frozen=True)
class EntanglementProfile:
    """Von Neumann entropies (nats) across the ``n - 1`` cuts of a chain."""

    entropies: np.ndarray

    def __post_init__(self):
        s = np.array(self.entropies, dtype=float).reshape(-1)
        if s.size == 0:
            raise ValidationError("profile needs at least one cut (n >= 2)")
        n = s.size + 1
        k = np.arange(1, n)
        cap = np.minimum(k, n - k) * LN2 + 1e-10
        if np.any(s < -1e-10) or np.any(s > cap):
            raise ValidationError("entropies outside 0 <= S_k <= min(k, n-k) ln 2")
        s.setflags(write=False)
        object.__setattr__(self, "entropies", s)

    @property
    def n(self):
        return self.entropies.size + 1

    def __len__(self):
        return self.entropies.size

    def l1_distance(self, other):
        if len(self) != len(other):
            raise ValidationError(f"profile lengths differ: {len(self)} vs {len(other)}")
        return float(np.abs(self.entropies - other.entropies).sum())


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector over ``n`` qubits.

    ``meta`` carries free-form provenance (energies, parameters, seeds) and
    takes no part in any computation.
    """

    amplitudes: np.ndarray
    ordering: ChainOrdering = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        psi = np.array(self.amplitudes, dtype=complex).reshape(-1)
        n = int(psi.size).bit_length() - 1
        if psi.size < 2 or psi.size != 1 << n:
            raise ValidationError(f"amplitude vector length must be 2^n with n >= 1, got {psi.size}")
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state is not normalized: |psi| = {norm!r}")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)
        ordering = self.ordering if self.ordering is not None else ChainOrdering.identity(n)
        if not isinstance(ordering, ChainOrdering):
            ordering = ChainOrdering(tuple(ordering))
        if ordering.n != n:
            raise ValidationError(f"ordering covers {ordering.n} sites, state has {n} qubits")
        object.__setattr__(self, "ordering", ordering)

    @property
    def n(self):
        return int(self.amplitudes.size).bit_length() - 1

    @property
    def dim(self):
        return self.amplitudes.size

    @classmethod
    def from_vector(cls, vector, ordering=None, meta=None):
        """Normalize ``vector`` and wrap it."""
        v = np.asarray(vector, dtype=complex).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0 or not np.isfinite(norm):
            raise ValidationError("cannot normalize a zero or non-finite vector")
        return cls(v / norm, ordering, dict(meta or {}))

    @classmethod
    def from_bits(cls, bits, ordering=None, meta=None):
        bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in bits):
            raise ValidationError(f"bits must be 0/1, got {bits}")
        psi = np.zeros(1 << len(bits), dtype=complex)
        psi[int("".join(map(str, bits)), 2)] = 1.0
        return cls(psi, ordering, dict(meta or {}))

    @classmethod
    def product(cls, factors, ordering=None):
        psi = np.ones(1, dtype=complex)
        for f in factors:
            psi = np.kron(psi, np.asarray(f, dtype=complex))
        return cls.from_vector(psi, ordering)

    @classmethod
    def haar_random(cls, n, rng, ordering=None):
        rng = np.random.default_rng(rng)
        dim = 1 << check_qubit_count(n)
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        return cls.from_vector(v, ordering)

    def with_ordering(self, ordering):
        return PureState(self.amplitudes, ordering, dict(self.meta))

    def with_meta(self, **meta):
        return PureState(self.amplitudes, self.ordering, {**self.meta, **meta})

    def tensor(self):
        return self.amplitudes.reshape((2,) * self.n)

    def density_matrix(self):
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def reduced_density_matrix(self, subset):
        return partial_trace(self, subset)

    def entanglement_profile(self, ordering=None):
        return entanglement_profile(self if ordering is None else self.with_ordering(ordering))

    def overlap(self, other):
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def apply(self, gate, qubits):
        """Apply a ``2^k x 2^k`` unitary to ``qubits`` (in the gate's tensor order)."""
        return PureState(apply_local(self.amplitudes, gate, qubits), self.ordering, dict(self.meta))

    def to_record(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "pure_state",
            "n": self.n,
            "ordering": list(self.ordering.order),
            "amplitudes": self.amplitudes.view(np.float64).tolist(),
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_record(cls, record):
        _check_record(record, "pure_state")
        flat = np.asarray(record["amplitudes"], dtype=np.float64)
        psi = flat.view(np.complex128)
        if psi.size != 1 << int(record["n"]):
            raise ValidationError("amplitude count does not match n")
        return cls(psi, ChainOrdering(tuple(record["ordering"])), dict(record.get("meta", {})))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, PSD, unit-trace matrix on the qubits listed in ``support``."""

    matrix: np.ndarray
    support: tuple = None

    def __post_init__(self):
        m = np.array(check_square(self.matrix), dtype=complex)
        k = int(m.shape[0]).bit_length() - 1
        if m.shape[0] < 2 or m.shape[0] != 1 << k:
            raise ValidationError(f"density matrix dimension must be 2^k, got {m.shape[0]}")
        support = tuple(range(k)) if self.support is None else tuple(int(q) for q in self.support)
        if len(support) != k or len(set(support)) != k:
            raise ValidationError(f"support {support} does not describe {k} distinct qubits")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"matrix is not Hermitian (max deviation {herm:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        m = 0.5 * (m + m.conj().T)
        lmin = np.linalg.eigvalsh(m)[0]
        if lmin < PSD_FLOOR:
            raise ValidationError(f"matrix is not PSD (min eigenvalue {lmin:.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "support", support)

    @property
    def n(self):
        return len(self.support)

    def reduced_density_matrix(self, subset):
        return partial_trace(self, subset)

    def to_record(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "density_matrix",
            "support": list(self.support),
            "matrix": self.matrix.reshape(-1).view(np.float64).tolist(),
        }

    @classmethod
    def from_record(cls, record):
        _check_record(record, "density_matrix")
        k = len(record["support"])
        flat = np.asarray(record["matrix"], dtype=np.float64).view(np.complex128)
        return cls(flat.reshape(1 << k, 1 << k), tuple(record["support"]))


def apply_local(vector, gate, qubits):
    """Apply ``gate`` to ``qubits`` of a raw state vector and return a new vector."""
    vector = np.asarray(vector)
    n = vector.size.bit_length() - 1
    k = len(qubits)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (1 << k, 1 << k):
        raise ValidationError(f"gate shape {gate.shape} does not act on {k} qubits")
    psi = vector.reshape((2,) * n)
    out = np.tensordot(gate.reshape((2,) * (2 * k)), psi, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits)).reshape(-1)


def partial_trace(state, keep):
    """Reduced density matrix on ``keep``; factor order follows ``keep``."""
    if isinstance(state, PureState):
        keep = check_subset(keep, state.n, "keep")
        psi = np.moveaxis(state.tensor(), keep, range(len(keep)))
        m = psi.reshape(1 << len(keep), -1)
        return DensityMatrix(m @ m.conj().T, keep)
    if isinstance(state, DensityMatrix):
        labels = state.support
        keep = tuple(int(q) for q in keep)
        if not keep:
            raise ValidationError("keep must be nonempty")
        missing = [q for q in keep if q not in labels]
        if missing or len(set(keep)) != len(keep):
            raise ValidationError(f"keep {keep} is not a subset of support {labels}")
        pos = [labels.index(q) for q in keep]
        rest = [p for p in range(len(labels)) if p not in pos]
        m = len(labels)
        t = state.matrix.reshape((2,) * (2 * m))
        t = t.transpose(pos + rest + [m + p for p in pos] + [m + p for p in rest])
        a, b = 1 << len(pos), 1 << len(rest)
        rho = np.einsum("ajbj->ab", t.reshape(a, b, a, b))
        return DensityMatrix(rho, keep)
    raise ValidationError(f"cannot take a partial trace of {type(state).__name__}")


def _clean_spectrum(w):
    """Zero eigenvalues that are roundoff relative to the largest one."""
    cutoff = 64 * np.finfo(float).eps * max(float(np.max(np.abs(w))), 0.0)
    return np.where(w > cutoff, w, 0.0)


def psd_sqrt(matrix):
    """Square root of a Hermitian PSD matrix; roundoff-level eigenvalues count as zero."""
    w, v = np.linalg.eigh(matrix)
    return (v * np.sqrt(_clean_spectrum(w))) @ v.conj().T


def _dims_match(rho, sigma):
    def dim(x):
        if isinstance(x, PureState):
            return x.dim
        if isinstance(x, DensityMatrix):
            return x.matrix.shape[0]
        raise ValidationError(f"expected PureState or DensityMatrix, got {type(x).__name__}")

    if dim(rho) != dim(sigma):
        raise ValidationError(f"dimension mismatch: {dim(rho)} vs {dim(sigma)}")
    if isinstance(rho, DensityMatrix) and isinstance(sigma, DensityMatrix) and rho.support != sigma.support:
        raise ValidationError(f"supports differ: {rho.support} vs {sigma.support}")


def uhlmann_fidelity(rho, sigma):
    """Root fidelity ``tr sqrt(sqrt(rho) sigma sqrt(rho))`` in [0, 1].

    Pure arguments use the exact overlap formulas, which avoids the square
    root of a rank-deficient matrix.
    """
    _dims_match(rho, sigma)
    if isinstance(rho, PureState) and isinstance(sigma, PureState):
        f = abs(np.vdot(rho.amplitudes, sigma.amplitudes))
    elif isinstance(rho, PureState) or isinstance(sigma, PureState):
        psi, dm = (rho, sigma) if isinstance(rho, PureState) else (sigma, rho)
        a = psi.amplitudes
        f = np.sqrt(max(np.vdot(a, dm.matrix @ a).real, 0.0))
    else:
        s = psd_sqrt(rho.matrix)
        m = s @ sigma.matrix @ s
        w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        f = np.sqrt(_clean_spectrum(w)).sum()
    return float(min(max(f, 0.0), 1.0))


def bures_distance(rho, sigma):
    return float(np.sqrt(max(2.0 * (1.0 - uhlmann_fidelity(rho, sigma)), 0.0)))


def von_neumann_entropy(rho):
    """``-tr rho ln rho`` in nats; eigenvalues below 1e-14 count as zero."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    w = np.linalg.eigvalsh(m)
    return _entropy_of_spectrum(w)


def _entropy_of_spectrum(p):
    p = p[p > EIG_DROP]
    s = float(-(p * np.log(p)).sum())
    return s if s > 0.0 else 0.0


def _chain_matrix(state, k):
    psi = state.tensor().transpose(state.ordering.order)
    return psi.reshape(1 << k, -1)


def entanglement_entropy(state, cut):
    """Entropy of the first ``cut`` chain sites (``1 <= cut <= n - 1``)."""
    n = state.n
    if not isinstance(cut, (int, np.integer)) or not 1 <= cut <= n - 1:
        raise ValidationError(f"cut must be in 1..{n - 1}, got {cut!r}")
    s = np.linalg.svd(_chain_matrix(state, int(cut)), compute_uv=False)
    return _entropy_of_spectrum(s * s)


def entanglement_profile(state):
    if state.n < 2:
        raise ValidationError("an entanglement profile needs n >= 2")
    return EntanglementProfile([entanglement_entropy(state, k) for k in range(1, state.n)])


def _check_record(record, kind):
    if record.get("kind") != kind:
        raise ValidationError(f"expected a {kind!r} record, got {record.get('kind')!r}")
    if record.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported format_version {record.get('format_version')!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
