"""Pauli-string helpers.

A Pauli string is a label such as ``"IXYZ"`` with one letter per qubit,
qubit 0 first (the most significant bit of a basis index).
"""

from functools import lru_cache, reduce

import numpy as np
import scipy.sparse as sp

from ._validation import ValidationError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
MATRICES = {"I": I2, "X": X, "Y": Y, "Z": Z}


def check_label(label, n=None):
    label = str(label).upper()
    if not label or any(c not in "IXYZ" for c in label):
        raise ValidationError(f"invalid Pauli string {label!r}")
    if n is not None and len(label) != n:
        raise ValidationError(f"Pauli string {label!r} has length {len(label)}, expected {n}")
    return label


def embed(ops, n):
    """Full-length label from a ``{qubit: letter}`` mapping."""
    chars = ["I"] * n
    for q, c in ops.items():
        chars[q] = c
    return check_label("".join(chars), n)


def support(label):
    return tuple(i for i, c in enumerate(label) if c != "I")


def symplectic(label):
    """Bit vectors ``(x, z)`` with Y encoded as x = z = 1."""
    x = np.array([c in "XY" for c in label], dtype=np.uint8)
    z = np.array([c in "ZY" for c in label], dtype=np.uint8)
    return x, z


def from_symplectic(x, z):
    table = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
    return "".join(table[int(a), int(b)] for a, b in zip(x, z))


def masks(label):
    """Integer masks ``(xmask, zmask, ny)`` over basis indices."""
    n = len(label)
    xm = zm = ny = 0
    for q, c in enumerate(label):
        bit = 1 << (n - 1 - q)
        if c in "XY":
            xm |= bit
        if c in "ZY":
            zm |= bit
        ny += c == "Y"
    return xm, zm, ny


def _parity(values, mask):
    v = values & mask
    out = np.zeros(values.shape, dtype=np.int64)
    while mask:
        out ^= v & 1
        v = v >> 1
        mask >>= 1
    return out


@lru_cache(maxsize=4096)
def action(label):
    """Return ``(perm, phase)`` with ``P|b> = phase[b] |perm[b]>`` for every basis index ``b``."""
    n = len(label)
    xm, zm, ny = masks(label)
    b = np.arange(1 << n, dtype=np.int64)
    # Y = i X Z, so P = i^ny X^x Z^z
    phase = (1j**ny) * (1.0 - 2.0 * _parity(b, zm))
    perm = b ^ xm
    perm.setflags(write=False)
    phase.setflags(write=False)
    return perm, phase


def apply(vector, label):
    perm, phase = action(label)
    out = np.empty_like(vector, dtype=complex)
    out[perm] = phase * vector
    return out


def dense(label):
    return reduce(np.kron, (MATRICES[c] for c in label))


def sparse(label):
    perm, phase = action(label)
    dim = perm.size
    return sp.csr_matrix((phase, (perm, np.arange(dim))), shape=(dim, dim))


def basis_labels(k, include_identity=False):
    """All ``4^k`` Pauli strings on ``k`` qubits in lexicographic IXYZ order."""
    labels = [""]
    for _ in range(k):
        labels = [s + c for s in labels for c in "IXYZ"]
    return labels if include_identity else labels[1:]


def decompose(matrix, tol=1e-12):
    """Real Pauli coefficients ``{label: tr(P M) / 2^k}`` of a Hermitian matrix."""
    m = np.asarray(matrix, dtype=complex)
    k = m.shape[0].bit_length() - 1
    out = {}
    for label in basis_labels(k, include_identity=True):
        c = np.trace(dense(label) @ m) / m.shape[0]
        if abs(c.imag) > 1e-9:
            raise ValidationError("matrix is not Hermitian; Pauli coefficients are complex")
        if abs(c.real) > tol:
            out[label] = float(c.real)
    return out
