"""Spin models and ground-state preparation.

Three families are provided: the bond-alternating XXZ chain, Kitaev's toric
code on a torus, and the toric code extended by Wilson / 't Hooft loop terms
plus a uniform Z field. Ground states come from exact diagonalization (dense
up to 12 qubits, ARPACK Lanczos up to 14).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import pauli
from ._validation import BackendCapError, NumericalError, ValidationError, check_qubit_count, rng_for
from .stabilizer import gf2_rank
from .statespace import ChainOrdering, PureState

DENSE_MAX_QUBITS = 12
SOLVER_MAX_QUBITS = 14
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class PauliSum:
    """Hermitian operator ``sum_j c_j P_j`` with real ``c_j`` and Pauli strings ``P_j``."""

    n: int
    terms: tuple

    def __post_init__(self):
        n = check_qubit_count(self.n)
        terms = []
        for label, coeff in self.terms:
            c = float(coeff)
            if not np.isfinite(c):
                raise ValidationError(f"coefficient of {label!r} is not finite")
            terms.append((pauli.check_label(label, n), c))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_local(cls, n, local_terms):
        """Build from ``[({qubit: letter}, coeff), ...]``."""
        return cls(n, tuple((pauli.embed(ops, n), c) for ops, c in local_terms))

    def __add__(self, other):
        if other.n != self.n:
            raise ValidationError(f"cannot add operators on {self.n} and {other.n} qubits")
        return PauliSum(self.n, self.terms + other.terms)

    def __len__(self):
        return len(self.terms)

    def scaled(self, factor):
        return PauliSum(self.n, tuple((s, factor * c) for s, c in self.terms))

    def l1_norm(self):
        """``sum |c_j|``, an upper bound on the operator norm."""
        return float(sum(abs(c) for _, c in self.terms))

    def simplified(self, tol=0.0):
        acc = {}
        for s, c in self.terms:
            acc[s] = acc.get(s, 0.0) + c
        return PauliSum(self.n, tuple((s, c) for s, c in acc.items() if abs(c) > tol))

    def _triplets(self):
        dim = 1 << self.n
        rows, vals = [], []
        for s, c in self.terms:
            if c != 0.0:
                perm, phase = pauli.action(s)
                rows.append(perm)
                vals.append(c * phase)
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
        cols = np.tile(np.arange(dim), len(rows))
        return np.concatenate(rows), cols, np.concatenate(vals)

    def sparse(self):
        dim = 1 << self.n
        rows, cols, vals = self._triplets()
        # duplicate (row, col) entries are summed on conversion
        return sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()

    def dense(self):
        dim = 1 << self.n
        rows, cols, vals = self._triplets()
        out = np.zeros((dim, dim), dtype=complex)
        np.add.at(out, (rows, cols), vals)
        return out

    def matvec(self, v):
        out = np.zeros(v.shape, dtype=complex)
        for s, c in self.terms:
            if c != 0.0:
                out += c * pauli.apply(v, s)
        return out

    def expectation(self, state):
        a = state.amplitudes
        return float(np.vdot(a, self.matvec(a)).real)

    def variance(self, state):
        a = state.amplitudes
        ha = self.matvec(a)
        mean = np.vdot(a, ha).real
        return float(max(np.vdot(ha, ha).real - mean * mean, 0.0))


@dataclass(frozen=True)
class XXZParams:
    n: int
    J1: float = 1.0
    J2: float = 1.0
    delta: float = 1.0
    h0: float = 0.0

    def __post_init__(self):
        check_qubit_count(self.n, "n", minimum=2)


def build_xxz(params):
    """Open bond-alternating XXZ chain; bond ``i`` (1-based) couples with J1 if odd, J2 if even."""
    n = params.n
    local = []
    for i in range(n - 1):
        J = params.J1 if i % 2 == 0 else params.J2
        local.append(({i: "X", i + 1: "X"}, J))
        local.append(({i: "Y", i + 1: "Y"}, J))
        local.append(({i: "Z", i + 1: "Z"}, J * params.delta))
    for i in range(n):
        local.append(({i: "Z"}, -params.h0))
    return PauliSum.from_local(n, local)


@dataclass(frozen=True)
class ToricLattice:
    """Periodic ``Lx x Ly`` square lattice with qubits on edges.

    Vertex ``(x, y)`` owns its rightward (horizontal) edge, qubit
    ``2 (y Lx + x)``, and its upward (vertical) edge, qubit ``2 (y Lx + x) + 1``.
    """

    Lx: int
    Ly: int

    def __post_init__(self):
        if int(self.Lx) < 2 or int(self.Ly) < 2:
            raise ValidationError(f"toric lattice needs Lx, Ly >= 2, got {self.Lx} x {self.Ly}")

    @property
    def n(self):
        return 2 * self.Lx * self.Ly

    def h(self, x, y):
        return 2 * ((y % self.Ly) * self.Lx + (x % self.Lx))

    def v(self, x, y):
        return self.h(x, y) + 1

    def _cells(self):
        return [(x, y) for y in range(self.Ly) for x in range(self.Lx)]

    def stars(self):
        return [(self.h(x, y), self.h(x - 1, y), self.v(x, y), self.v(x, y - 1)) for x, y in self._cells()]

    def plaquettes(self):
        return [(self.h(x, y), self.h(x, y + 1), self.v(x, y), self.v(x + 1, y)) for x, y in self._cells()]

    def wilson_loop(self, column=0):
        """Vertical edges of one column: a Z loop winding around y."""
        return tuple(self.v(column, y) for y in range(self.Ly))

    def thooft_loop(self, column=0):
        """Horizontal edges of one column: an X dual loop winding around y."""
        return tuple(self.h(column, y) for y in range(self.Ly))

    def z_loop_horizontal(self, row=0):
        return tuple(self.h(x, row) for x in range(self.Lx))

    def chain_ordering(self):
        return ChainOrdering.snake(self.Lx, self.Ly, per_cell=2)

    def _indicator(self, edges):
        v = np.zeros(self.n, dtype=np.uint8)
        v[list(edges)] ^= 1
        return v

    def is_z_logical(self, edges):
        """Closed primal cycle that is not a product of plaquettes."""
        w = self._indicator(edges)
        closed = all(w[list(s)].sum() % 2 == 0 for s in self.stars())
        plaqs = [self._indicator(p) for p in self.plaquettes()]
        return closed and gf2_rank(plaqs + [w]) > gf2_rank(plaqs)

    def is_x_logical(self, edges):
        """Closed dual cycle that is not a product of stars."""
        w = self._indicator(edges)
        closed = all(w[list(p)].sum() % 2 == 0 for p in self.plaquettes())
        stars = [self._indicator(s) for s in self.stars()]
        return closed and gf2_rank(stars + [w]) > gf2_rank(stars)


def build_toric(lattice):
    n = lattice.n
    local = [({q: "X" for q in s}, -1.0) for s in lattice.stars()]
    local += [({q: "Z" for q in p}, -1.0) for p in lattice.plaquettes()]
    return PauliSum.from_local(n, local)


@dataclass(frozen=True)
class ETCParams:
    lattice: ToricLattice
    JW: float = 1.0
    JH: float = -1.0
    h: float = 0.0
    wilson_edges: tuple = None
    thooft_edges: tuple = None

    def __post_init__(self):
        lat = self.lattice
        w = lat.wilson_loop() if self.wilson_edges is None else tuple(int(q) for q in self.wilson_edges)
        t = lat.thooft_loop() if self.thooft_edges is None else tuple(int(q) for q in self.thooft_edges)
        for edges in (w, t):
            if any(q < 0 or q >= lat.n for q in edges) or len(set(edges)) != len(edges):
                raise ValidationError(f"loop edges {edges} are not distinct qubits of the lattice")
        if not lat.is_z_logical(w):
            raise ValidationError(f"wilson_edges {w} do not form a closed non-contractible cycle")
        if not lat.is_x_logical(t):
            raise ValidationError(f"thooft_edges {t} do not form a closed non-contractible dual cycle")
        object.__setattr__(self, "wilson_edges", w)
        object.__setattr__(self, "thooft_edges", t)

    def wilson_operator(self):
        return PauliSum.from_local(self.lattice.n, [({q: "Z" for q in self.wilson_edges}, 1.0)])

    def thooft_operator(self):
        return PauliSum.from_local(self.lattice.n, [({q: "X" for q in self.thooft_edges}, 1.0)])


def build_etc(params):
    n = params.lattice.n
    extra = [
        ({q: "Z" for q in params.wilson_edges}, -params.JW),
        ({q: "X" for q in params.thooft_edges}, -params.JH),
    ]
    extra += [({i: "Z"}, -params.h) for i in range(n)]
    return build_toric(params.lattice) + PauliSum.from_local(n, extra)


def _lowest_eigenpairs(H, dense_max):
    if H.n <= dense_max:
        return np.linalg.eigh(H.dense())
    mat = H.sparse()
    dim = mat.shape[0]
    k = 6
    while True:
        try:
            w, v = spla.eigsh(mat, k=min(k, dim - 2), which="SA", tol=1e-12, maxiter=20 * dim)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(f"Lanczos eigensolver did not converge: {exc}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        # all returned vectors degenerate means the ground space may be larger
        if w[-1] - w[0] > 1e-6 or k >= dim - 2:
            return w, v
        k *= 2


def ground_state(H, sectors=None, ordering=None, degeneracy_tol=1e-8, dense_max=DENSE_MAX_QUBITS,
                 max_qubits=SOLVER_MAX_QUBITS):
    """Lowest eigenvector of ``H`` with a reproducible choice inside degenerate ground spaces.

    ``sectors`` is a list of ``(operator, eigenvalue)`` pairs of commuting
    symmetry operators; the ground space is first restricted to their joint
    eigenspace. Any remaining degeneracy is broken by projecting the
    lowest-index basis state with nonzero weight onto the ground space. The
    largest-magnitude amplitude is then made real positive.
    """
    if H.n > max_qubits:
        raise BackendCapError(f"ground_state is limited to {max_qubits} qubits, operator has {H.n}")
    w, vecs = _lowest_eigenpairs(H, dense_max)
    e0 = w[0]
    ground = vecs[:, w - e0 <= degeneracy_tol * max(1.0, abs(e0))]
    degeneracy = ground.shape[1]
    for op, target in sectors or ():
        op = op if isinstance(op, PauliSum) else PauliSum(H.n, ((op, 1.0),))
        proj = np.column_stack([op.matvec(ground[:, j]) for j in range(ground.shape[1])])
        m = ground.conj().T @ proj
        sw, sv = np.linalg.eigh(0.5 * (m + m.conj().T))
        keep = np.abs(sw - target) < 1e-6
        if not keep.any():
            raise NumericalError(f"sector with eigenvalue {target} is empty in the ground space")
        ground = ground @ sv[:, keep]
    if ground.shape[1] == 1:
        v = ground[:, 0]
    else:
        weights = np.linalg.norm(ground, axis=1)
        i = int(np.argmax(weights > 1e-8))
        v = ground @ ground[i].conj()
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    residual = np.linalg.norm(H.matvec(v) - e0 * v)
    if residual > RESIDUAL_TOL * max(1.0, abs(e0)):
        raise NumericalError(f"ground state residual {residual:.3g} exceeds tolerance")
    meta = {"energy": float(e0), "degeneracy": int(degeneracy), "residual": float(residual)}
    return PureState(v, ordering, meta)


def random_product_bits(n, seed):
    rng = rng_for(seed)
    return rng.integers(0, 2, size=check_qubit_count(n)).astype(int)


def random_product_state(n, seed, ordering=None):
    """Computational-basis product state with uniformly random bits."""
    bits = random_product_bits(n, seed)
    return PureState.from_bits(bits, ordering, {"model": "rps", "bits": "".join(map(str, bits))})
