"""Unitary paths, Haar brickwork circuits and circuit-complexity bounds.

A :class:`GeneratorPath` is a piecewise-constant Hermitian generator
``G(s) = sum_sigma h_sigma(s) sigma`` on ``s in [0, 1]``. Its Nielsen cost
``int sum |h_sigma| ds`` upper-bounds the true (intractable) infimum, its
Fisher cost ``1/2 int sqrt(F_Q) ds`` is the Bures length actually travelled,
and the endpoint Bures distance lower-bounds both. The ``verify_*`` functions
evaluate these orderings and the exact per-gate entanglement facts on
concrete paths and circuits.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import pauli
from ._validation import ValidationError, check_qubit_count, rng_for
from .models import PauliSum
from .statespace import LN2, ChainOrdering, PureState, bures_distance, entanglement_profile

CHAIN_TOL = 1e-8
LOCAL_DRIFT_TOL = 1e-10
CAPACITY_TOL = 1e-9
TWO_QUBIT_CAPACITY = 2 * LN2
_DENSE_EVOLVE_MAX = 8


@dataclass(frozen=True)
class GeneratorPath:
    """Ordered segments ``(ds_j, G_j)`` with ``sum ds_j = 1``."""

    n: int
    segments: tuple

    def __post_init__(self):
        n = check_qubit_count(self.n)
        segs = []
        for ds, G in self.segments:
            ds = float(ds)
            if not np.isfinite(ds) or ds < 0:
                raise ValidationError(f"segment length {ds!r} must be finite and nonnegative")
            if not isinstance(G, PauliSum):
                G = PauliSum(n, tuple(G))
            if G.n != n:
                raise ValidationError(f"segment generator acts on {G.n} qubits, path has {n}")
            segs.append((ds, G))
        if not segs:
            raise ValidationError("a path needs at least one segment")
        total = sum(ds for ds, _ in segs)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"segment lengths sum to {total!r}, expected 1")
        object.__setattr__(self, "segments", tuple(segs))

    def __len__(self):
        return len(self.segments)

    @classmethod
    def constant(cls, G):
        return cls(G.n, ((1.0, G),))

    @classmethod
    def zero(cls, n):
        return cls(n, ((1.0, PauliSum(n, ())),))

    @classmethod
    def from_function(cls, generator, n, n_segments):
        """Slice a smooth ``generator(s) -> PauliSum`` into equal steps, sampled at step ends."""
        ds = 1.0 / n_segments
        return cls(n, tuple((ds, generator((j + 1) * ds)) for j in range(n_segments)))

    def locality(self, ordering=None):
        """Largest chain window (in sites) spanned by any nonzero term."""
        ordering = ordering or ChainOrdering.identity(self.n)
        widest = 0
        for _, G in self.segments:
            for label, c in G.terms:
                sup = pauli.support(label)
                if c != 0.0 and sup:
                    pos = [ordering.position(q) for q in sup]
                    widest = max(widest, max(pos) - min(pos) + 1)
        return widest


def random_local_path(n, seed, n_segments=None, scale=1.0, ordering=None):
    """Piecewise-constant path over nearest-neighbour two-site Pauli strings.

    Each segment carries all nine ``{X,Y,Z} x {X,Y,Z}`` strings on every
    chain-adjacent pair, with coefficients uniform in ``[-scale, scale]``.
    """
    n = check_qubit_count(n, minimum=2)
    rng = rng_for(seed)
    ordering = ordering or ChainOrdering.identity(n)
    if n_segments is None:
        n_segments = int(rng.integers(8, 33))
    pairs = ordering.adjacent_pairs()
    segs = []
    for _ in range(n_segments):
        local = []
        for a, b in pairs:
            for pa, pb in itertools.product("XYZ", repeat=2):
                local.append(({a: pa, b: pb}, scale * rng.uniform(-1.0, 1.0)))
        segs.append((1.0 / n_segments, PauliSum.from_local(n, local)))
    return GeneratorPath(n, tuple(segs))


def haar_unitary(dim, rng):
    """Haar-random unitary from a Ginibre matrix, QR with the phases of R's diagonal removed."""
    rng = np.random.default_rng(rng)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def haar_two_qubit(rng):
    return haar_unitary(4, rng)


def hermitian_log(unitary):
    """Hermitian ``H`` with ``exp(-i H) = unitary`` and spectrum in ``(-pi, pi]``."""
    t, v = sla.schur(np.asarray(unitary, dtype=complex), output="complex")
    theta = np.angle(np.diag(t))
    h = -(v * theta) @ v.conj().T
    return 0.5 * (h + h.conj().T)


@dataclass(frozen=True, eq=False)
class BrickworkCircuit:
    """Layers of two-qubit gates on chain-adjacent positions ``(p, p + 1)``."""

    n: int
    layers: tuple
    seed: int = None

    def __post_init__(self):
        n = check_qubit_count(self.n)
        layers = []
        for layer in self.layers:
            used = set()
            gates = []
            for (a, b), u in layer:
                a, b = int(a), int(b)
                if b != a + 1 or a < 0 or b >= n:
                    raise ValidationError(f"gate positions ({a}, {b}) are not chain-adjacent in 0..{n - 1}")
                if used & {a, b}:
                    raise ValidationError(f"gates in one layer overlap at positions ({a}, {b})")
                used |= {a, b}
                u = np.asarray(u, dtype=complex)
                if u.shape != (4, 4) or np.max(np.abs(u.conj().T @ u - np.eye(4))) > 1e-12:
                    raise ValidationError("gate is not a 4x4 unitary")
                gates.append(((a, b), u))
            layers.append(tuple(gates))
        object.__setattr__(self, "layers", tuple(layers))

    @property
    def depth(self):
        return len(self.layers)

    @classmethod
    def single_gate(cls, n, position, seed):
        return cls(n, ((((position, position + 1), haar_two_qubit(rng_for(seed))),),), seed)

    def gates(self):
        for layer in self.layers:
            yield from layer

    def apply(self, state):
        if state.n != self.n:
            raise ValidationError(f"circuit acts on {self.n} qubits, state has {state.n}")
        order = state.ordering.order
        for (a, b), u in self.gates():
            state = state.apply(u, (order[a], order[b]))
        return state

    def to_generator_path(self, ordering=None):
        """Exact generator realization: one segment per layer with ``G = depth * sum_gates H_gate``."""
        ordering = ordering or ChainOrdering.identity(self.n)
        if self.depth == 0:
            return GeneratorPath.zero(self.n)
        segs = []
        for layer in self.layers:
            terms = []
            for (a, b), u in layer:
                qa, qb = ordering.order[a], ordering.order[b]
                for label, c in pauli.decompose(hermitian_log(u)).items():
                    if label == "II":
                        continue
                    ops = {q: p for q, p in zip((qa, qb), label) if p != "I"}
                    terms.append((pauli.embed(ops, self.n), self.depth * c))
            segs.append((1.0 / self.depth, PauliSum(self.n, tuple(terms))))
        return GeneratorPath(self.n, tuple(segs))


def brickwork_circuit(n, depth, seed):
    """Even bonds on even layers, odd bonds on odd layers, gates drawn in order from ``seed``."""
    n = check_qubit_count(n)
    if depth < 0:
        raise ValidationError(f"depth must be >= 0, got {depth}")
    if n < 2 and depth > 0:
        raise ValidationError("a brickwork layer needs at least two qubits")
    rng = rng_for(seed)
    layers = []
    for layer in range(depth):
        layers.append(tuple(((p, p + 1), haar_two_qubit(rng)) for p in range(layer % 2, n - 1, 2)))
    return BrickworkCircuit(n, tuple(layers), seed)


def apply_brickwork(state, depth, seed):
    if depth == 0:
        return state
    return brickwork_circuit(state.n, depth, seed).apply(state)


def _evolve(vector, G, ds):
    if ds == 0.0 or not G.terms:
        return vector
    if G.n <= _DENSE_EVOLVE_MAX:
        w, v = np.linalg.eigh(G.dense())
        return v @ (np.exp(-1j * ds * w) * (v.conj().T @ vector))
    return spla.expm_multiply(-1j * ds * G.sparse(), vector)


def trotter_evolve(state0, path):
    """States after each segment, ``U_j = exp(-i ds_j G_j)``; element 0 is ``state0``."""
    if path.n != state0.n:
        raise ValidationError(f"path acts on {path.n} qubits, state has {state0.n}")
    states = [state0]
    v = state0.amplitudes
    for ds, G in path.segments:
        v = _evolve(v, G, ds)
        v = v / np.linalg.norm(v)
        states.append(PureState(v, state0.ordering))
    return states


def nielsen_path_cost(path):
    return float(sum(ds * G.simplified().l1_norm() for ds, G in path.segments))


def qfi_along_path(states, path):
    """``F_Q = 4 Var[G_j]`` in the state reached at the end of segment ``j``."""
    if len(states) != len(path) + 1:
        raise ValidationError(f"expected {len(path) + 1} states for {len(path)} segments, got {len(states)}")
    return np.array([4.0 * G.variance(st) for (_, G), st in zip(path.segments, states[1:])])


def qfc_path_cost(states, path):
    fq = qfi_along_path(states, path)
    ds = np.array([d for d, _ in path.segments])
    return float(0.5 * np.sum(ds * np.sqrt(fq)))


@dataclass
class BoundReport:
    """Outcome of one bound check; violations are data, never exceptions."""

    kind: str
    quantities: dict
    margins: dict
    violations: list = field(default_factory=list)
    seed: object = None

    @property
    def ok(self):
        return not self.violations

    def to_record(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "quantities": _plain(self.quantities),
            "margins": _plain(self.margins),
            "violations": list(self.violations),
            "ok": self.ok,
        }


def _plain(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def default_cover(ordering, size=2):
    """Consecutive non-overlapping chain windows; a shorter window closes an odd chain."""
    return [ordering.window(p, size) for p in range(0, ordering.n, size)]


def _window_cost(path, window, ordering):
    """``int sum |h_sigma|`` over terms supported inside the window plus one chain site each side."""
    lo = min(ordering.position(q) for q in window)
    hi = max(ordering.position(q) for q in window)
    env = set(ordering.order[max(lo - 1, 0):hi + 2])
    total = 0.0
    for ds, G in path.segments:
        for label, c in G.simplified().terms:
            sup = pauli.support(label)
            if sup and set(sup) <= env and set(sup) & set(window):
                total += ds * abs(c)
    return total


def verify_theorem1(path, states, ordering=None, cover=None, tol=CHAIN_TOL, seed=None):
    """Check ``nielsen >= fisher >= D_B(rho0, rho1)/sqrt 2`` and the local cover sum.

    The cover sum ``sum_D D_B[rho0(D), rho1(D)] / sqrt 2`` is compared with the
    Nielsen cost (an approximate bound, reported by margin), and each window's
    Bures distance with the cost of terms acting on the window and its
    one-site environment (a strict bound).
    """
    ordering = ordering or states[0].ordering
    cover = cover or default_cover(ordering)
    nielsen = nielsen_path_cost(path)
    fisher = qfc_path_cost(states, path)
    rho0, rho1 = states[0], states[-1]
    bures = bures_distance(rho0, rho1) / np.sqrt(2.0)
    local_terms = [
        bures_distance(rho0.reduced_density_matrix(w), rho1.reduced_density_matrix(w)) / np.sqrt(2.0)
        for w in cover
    ]
    window_costs = [_window_cost(path, w, ordering) for w in cover]
    window_margins = [c - np.sqrt(2.0) * b for c, b in zip(window_costs, local_terms)]
    local_sum = float(sum(local_terms))
    margins = {
        "nielsen_minus_fisher": nielsen - fisher,
        "fisher_minus_bures": fisher - bures,
        "nielsen_minus_local": nielsen - local_sum,
        "min_window_margin": float(min(window_margins)),
    }
    violations = []
    if margins["nielsen_minus_fisher"] < -tol:
        violations.append("nielsen<fisher")
    if margins["fisher_minus_bures"] < -tol:
        violations.append("fisher<bures")
    if margins["nielsen_minus_local"] < -tol:
        violations.append("nielsen<local_cover_sum")
    if margins["min_window_margin"] < -tol:
        violations.append("window_cost<window_bures")
    quantities = {
        "nielsen_cost": nielsen,
        "fisher_cost": fisher,
        "bures_bound": bures,
        "local_cover_sum": local_sum,
        "cover": [list(w) for w in cover],
        "locality": path.locality(ordering),
        "segments": len(path),
    }
    return BoundReport("theorem1", quantities, margins, violations, seed)


def _cut_crossings(qubits, ordering):
    """Cuts ``k`` (1-based, between chain positions k-1 and k) separating the given qubits."""
    pos = [ordering.position(q) for q in qubits]
    return set(range(min(pos) + 1, max(pos) + 1))


def _steps(source, state0):
    """Yield ``(crossed_cuts, is_two_qubit_gate, state_after)`` for each elementary step."""
    ordering = state0.ordering
    state = state0
    if isinstance(source, BrickworkCircuit):
        order = ordering.order
        for (a, b), u in source.gates():
            state = state.apply(u, (order[a], order[b]))
            yield {b}, True, state
    else:
        for ds, G in source.segments:
            crossed = set()
            for label, c in G.terms:
                if c != 0.0 and pauli.support(label):
                    crossed |= _cut_crossings(pauli.support(label), ordering)
            state = PureState(_evolve(state.amplitudes, G, ds), ordering)
            yield crossed, False, state


def verify_theorem2(source, state0, seed=None):
    """Entanglement-change bookkeeping for a circuit or generator path.

    Records the cut-averaged entanglement change, the Nielsen cost of the
    source, and their ratio (the largest constant compatible with this
    instance). Asserts only exact facts: cuts not crossed by a step keep their
    entropy, and a single two-qubit gate moves a crossed cut by at most 2 ln 2.
    """
    ordering = state0.ordering
    n = state0.n
    path = source.to_generator_path(ordering) if isinstance(source, BrickworkCircuit) else source
    profile0 = entanglement_profile(state0).entropies
    prev = profile0
    max_drift = 0.0
    max_crossed = 0.0
    violations = []
    state = state0
    for crossed, is_gate, state in _steps(source, state0):
        cur = entanglement_profile(state).entropies
        delta = np.abs(cur - prev)
        untouched = [k for k in range(1, n) if k not in crossed]
        if untouched:
            drift = float(delta[[k - 1 for k in untouched]].max())
            max_drift = max(max_drift, drift)
            if drift > LOCAL_DRIFT_TOL:
                violations.append(f"entropy drift {drift:.3g} at uncrossed cut")
        if crossed:
            moved = float(delta[[k - 1 for k in crossed]].max())
            max_crossed = max(max_crossed, moved)
            if is_gate and moved > TWO_QUBIT_CAPACITY + CAPACITY_TOL:
                violations.append(f"gate changed a cut by {moved:.6g} > 2 ln 2")
        prev = cur
    profile1 = prev
    avg_change = float(np.abs(profile1 - profile0).sum() / (n - 1))
    cost = nielsen_path_cost(path)
    ratio = cost / avg_change if avg_change > 0 else float("inf")
    quantities = {
        "avg_entanglement_change": avg_change,
        "nielsen_cost": cost,
        "c_estimate": ratio,
        "profile0": profile0,
        "profile1": profile1,
        "max_uncrossed_drift": max_drift,
        "max_crossed_change": max_crossed,
    }
    margins = {
        "drift_margin": LOCAL_DRIFT_TOL - max_drift,
        "capacity_margin": TWO_QUBIT_CAPACITY - max_crossed if isinstance(source, BrickworkCircuit) else None,
    }
    return BoundReport("theorem2", quantities, margins, violations, seed)
