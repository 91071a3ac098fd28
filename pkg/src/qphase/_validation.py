"""Exceptions, tolerances and small input-checking helpers shared by all modules."""

import numbers

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
NORM_TOL = 1e-10
PSD_FLOOR = -1e-9
EIG_DROP = 1e-14


class ValidationError(ValueError):
    """Raised when an input violates a documented contract."""


class BackendCapError(ValidationError):
    """Raised when a problem size exceeds what a backend is allowed to handle."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails to converge or loses accuracy."""


def check_qubit_count(n, name="n", minimum=1):
    if not isinstance(n, numbers.Integral) or isinstance(n, bool):
        raise ValidationError(f"{name} must be an integer, got {n!r}")
    if n < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {n}")
    return int(n)


def check_subset(subset, n, name="subset", max_size=None):
    """Return ``subset`` as a tuple of distinct in-range qubit indices."""
    try:
        idx = tuple(int(q) for q in subset)
    except TypeError:
        raise ValidationError(f"{name} must be an iterable of qubit indices") from None
    if not idx:
        raise ValidationError(f"{name} must be nonempty")
    if len(set(idx)) != len(idx):
        raise ValidationError(f"{name} contains repeated qubits: {idx}")
    bad = [q for q in idx if q < 0 or q >= n]
    if bad:
        raise ValidationError(f"{name} has qubit indices out of range 0..{n - 1}: {bad}")
    if max_size is not None and len(idx) > max_size:
        raise ValidationError(f"{name} has {len(idx)} qubits, limit is {max_size}")
    return idx


def check_square(matrix, name="matrix"):
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def rng_for(seed, *stream):
    """Independent generator for task ``stream`` under master ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng()
    parts = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng([int(s) for s in (*parts, *stream)])
