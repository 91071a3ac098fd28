"""Exact stabilizer-state backend.

Handles states fixed by ``n`` independent commuting Pauli generators, such as
clean toric-code ground states and computational-basis product states, at sizes
far beyond dense reach. Entanglement comes from binary ranks and few-body
reduced density matrices from the stabilizer subgroup living on the subset.
"""

from dataclasses import dataclass, field

import numpy as np

from . import pauli
from ._validation import BackendCapError, ValidationError, check_subset
from .statespace import FORMAT_VERSION, LN2, ChainOrdering, DensityMatrix, EntanglementProfile, PureState

MAX_RDM_QUBITS = 4
MAX_DENSE_QUBITS = 14


def _to_int(bits):
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def gf2_rank(rows):
    """Rank over GF(2) of rows given as 0/1 arrays or Python ints."""
    basis = {}
    rank = 0
    for v in rows:
        v = v if isinstance(v, int) else _to_int(v)
        while v:
            lead = v.bit_length() - 1
            if lead not in basis:
                basis[lead] = v
                rank += 1
                break
            v ^= basis[lead]
    return rank


def _kernel_combinations(rows):
    """Masks of generator combinations whose ``rows`` XOR to zero (a basis of the kernel)."""
    basis = {}
    kernel = []
    for i, v in enumerate(rows):
        m = 1 << i
        while v:
            lead = v.bit_length() - 1
            if lead not in basis:
                basis[lead] = (v, m)
                break
            bv, bm = basis[lead]
            v ^= bv
            m ^= bm
        if v == 0:
            kernel.append(m)
    return kernel


@dataclass(frozen=True, eq=False)
class StabilizerState:
    """Stabilizer tableau ``[x | z]`` (``n x 2n`` bits) with sign bits (1 means -1).

    Row ``j`` stands for the Hermitian Pauli ``(-1)^signs[j] P_j`` where a
    qubit with ``x = z = 1`` carries ``Y``.
    """

    tableau: np.ndarray
    signs: np.ndarray = None
    ordering: ChainOrdering = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.tableau, dtype=np.uint8) & 1
        if t.ndim != 2 or t.shape[1] != 2 * t.shape[0] or t.shape[0] < 1:
            raise ValidationError(f"tableau must have shape (n, 2n), got {t.shape}")
        n = t.shape[0]
        s = np.zeros(n, dtype=np.uint8) if self.signs is None else np.array(self.signs, dtype=np.uint8) & 1
        if s.shape != (n,):
            raise ValidationError(f"need {n} sign bits, got shape {s.shape}")
        x, z = t[:, :n].astype(np.int64), t[:, n:].astype(np.int64)
        if np.any((x @ z.T + z @ x.T) % 2):
            raise ValidationError("stabilizer generators do not all commute")
        if gf2_rank(list(t)) != n:
            raise ValidationError("stabilizer generators are not independent")
        t.setflags(write=False)
        s.setflags(write=False)
        ordering = self.ordering if self.ordering is not None else ChainOrdering.identity(n)
        if ordering.n != n:
            raise ValidationError(f"ordering covers {ordering.n} sites, state has {n} qubits")
        object.__setattr__(self, "tableau", t)
        object.__setattr__(self, "signs", s)
        object.__setattr__(self, "ordering", ordering)

    @property
    def n(self):
        return self.tableau.shape[0]

    @classmethod
    def from_paulis(cls, labels, signs=None, ordering=None, meta=None):
        labels = [pauli.check_label(s) for s in labels]
        n = len(labels)
        rows = []
        for s in labels:
            if len(s) != n:
                raise ValidationError(f"generator {s!r} does not have length {n}")
            x, z = pauli.symplectic(s)
            rows.append(np.concatenate([x, z]))
        return cls(np.array(rows), signs, ordering, dict(meta or {}))

    @classmethod
    def computational_basis(cls, bits, ordering=None, meta=None):
        """``|b>`` is stabilized by ``(-1)^{b_i} Z_i``."""
        bits = np.array([int(b) for b in bits], dtype=np.uint8)
        n = bits.size
        t = np.zeros((n, 2 * n), dtype=np.uint8)
        t[np.arange(n), n + np.arange(n)] = 1
        return cls(t, bits, ordering, dict(meta or {}))

    def generator_labels(self):
        n = self.n
        return [pauli.from_symplectic(r[:n], r[n:]) for r in self.tableau]

    def with_ordering(self, ordering):
        return StabilizerState(self.tableau, self.signs, ordering, dict(self.meta))

    def reduced_density_matrix(self, subset):
        return stab_reduced_density_matrix(self, subset)

    def entanglement_profile(self, ordering=None):
        return stab_entanglement_profile(self, self.ordering if ordering is None else ordering)

    def to_pure_state(self):
        """Dense state vector (phase fixed so the largest amplitude is real positive)."""
        n = self.n
        if n > MAX_DENSE_QUBITS:
            raise BackendCapError(f"dense conversion limited to {MAX_DENSE_QUBITS} qubits, state has {n}")
        rng = np.random.default_rng(0)
        v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
        for label, s in zip(self.generator_labels(), self.signs):
            v = 0.5 * (v + (-1) ** int(s) * pauli.apply(v, label))
        v /= np.linalg.norm(v)
        k = np.argmax(np.abs(v))
        v *= abs(v[k]) / v[k]
        return PureState(v, self.ordering, dict(self.meta))

    def to_record(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "stabilizer_state",
            "n": self.n,
            "ordering": list(self.ordering.order),
            "tableau": ["".join(str(b) for b in row) for row in self.tableau],
            "signs": "".join(str(b) for b in self.signs),
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, record):
        if record.get("kind") != "stabilizer_state" or record.get("format_version") != FORMAT_VERSION:
            raise ValidationError("not a supported stabilizer_state record")
        t = np.array([[int(c) for c in row] for row in record["tableau"]], dtype=np.uint8)
        s = np.array([int(c) for c in record["signs"]], dtype=np.uint8)
        return cls(t, s, ChainOrdering(tuple(record["ordering"])), dict(record.get("meta", {})))


def _columns(state, qubits):
    n = state.n
    qubits = list(qubits)
    return state.tableau[:, qubits + [n + q for q in qubits]]


def stab_entanglement_profile(state, ordering=None):
    """``S_k = (k - g_k) ln 2`` with ``g_k`` generators supported inside the first ``k`` chain sites."""
    ordering = state.ordering if ordering is None else ordering
    n = state.n
    if ordering.n != n:
        raise ValidationError(f"ordering covers {ordering.n} sites, state has {n} qubits")
    if n < 2:
        raise ValidationError("an entanglement profile needs n >= 2")
    out = []
    for k in range(1, n):
        rest = _columns(state, ordering.order[k:])
        g = n - gf2_rank(list(rest))
        out.append((k - g) * LN2)
    return EntanglementProfile(out)


def _product(rows_x, rows_z, phases):
    """Multiply Paulis ``i^r X^x Z^z`` left to right; returns ``(x, z, r mod 4)``."""
    x = np.zeros_like(rows_x[0])
    z = np.zeros_like(rows_z[0])
    r = 0
    for bx, bz, br in zip(rows_x, rows_z, phases):
        r += br + 2 * int(np.dot(z, bx))
        x ^= bx
        z ^= bz
    return x, z, r % 4


def stab_reduced_density_matrix(state, subset):
    """``rho(D) = 2^{-|D|} prod_j (I + g_j)`` over generators ``g_j`` of the subgroup on ``D``."""
    n = state.n
    subset = check_subset(subset, n)
    if len(subset) > MAX_RDM_QUBITS:
        raise BackendCapError(f"subset has {len(subset)} qubits, limit is {MAX_RDM_QUBITS}")
    inside = set(subset)
    outside = [q for q in range(n) if q not in inside]
    comp = [_to_int(r) for r in _columns(state, outside)] if outside else [0] * n
    x_all = state.tableau[:, :n].astype(np.int64)
    z_all = state.tableau[:, n:].astype(np.int64)
    # Hermitian row with sign s equals i^(2s + #Y) X^x Z^z
    r_all = 2 * state.signs.astype(np.int64) + (x_all & z_all).sum(axis=1)
    k = len(subset)
    rho = np.eye(1 << k, dtype=complex)
    for mask in _kernel_combinations(comp):
        idx = [j for j in range(n) if mask >> j & 1]
        x, z, r = _product(x_all[idx], z_all[idx], r_all[idx])
        xs, zs = x[list(subset)], z[list(subset)]
        ny = int((xs & zs).sum())
        sign_exp = (r - ny) % 4
        if sign_exp not in (0, 2):
            raise ValidationError("stabilizer subgroup element is not Hermitian; tableau is inconsistent")
        g = (-1) ** (sign_exp // 2) * pauli.dense(pauli.from_symplectic(xs, zs))
        rho = rho @ (np.eye(1 << k) + g)
    return DensityMatrix(rho / (1 << k), subset)


def stabilizer_text(state):
    """Plain-text tableau: one ``0``/``1`` row per generator, then a sign line."""
    lines = ["".join(str(b) for b in row) for row in state.tableau]
    lines.append("".join(str(b) for b in state.signs))
    return "\n".join(lines) + "\n"


def parse_stabilizer_text(text, ordering=None):
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValidationError("tableau text needs at least one row and a sign line")
    t = np.array([[int(c) for c in ln] for ln in lines[:-1]], dtype=np.uint8)
    s = np.array([int(c) for c in lines[-1]], dtype=np.uint8)
    return StabilizerState(t, s, ordering)


def toric_stabilizer_state(lattice, wilson=1, thooft=None, x_loop=1):
    """Toric-code ground state in a definite logical sector.

    The sector is fixed by the vertical-edge Z loop ``W`` (eigenvalue
    ``wilson``) together with either the horizontal-edge X loop ``H``
    (eigenvalue ``thooft``) or, when ``thooft`` is None, the Z loop along a
    row of horizontal edges (eigenvalue ``x_loop``). The default matches the
    projection of ``|0...0>`` onto the ground space.
    """
    n = lattice.n
    gens, signs = [], []
    for v in lattice.stars()[:-1]:
        gens.append(pauli.embed({q: "X" for q in v}, n))
        signs.append(0)
    for p in lattice.plaquettes()[:-1]:
        gens.append(pauli.embed({q: "Z" for q in p}, n))
        signs.append(0)
    gens.append(pauli.embed({q: "Z" for q in lattice.wilson_loop()}, n))
    signs.append(0 if wilson == 1 else 1)
    if thooft is None:
        gens.append(pauli.embed({q: "Z" for q in lattice.z_loop_horizontal()}, n))
        signs.append(0 if x_loop == 1 else 1)
    else:
        gens.append(pauli.embed({q: "X" for q in lattice.thooft_loop()}, n))
        signs.append(0 if thooft == 1 else 1)
    meta = {"model": "toric", "Lx": lattice.Lx, "Ly": lattice.Ly, "wilson": wilson}
    meta["thooft" if thooft is not None else "x_loop"] = thooft if thooft is not None else x_loop
    return StabilizerState.from_paulis(gens, signs, lattice.chain_ordering(), meta)
