import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from qphase import ValidationError
from qphase.statespace import (
    LN2,
    ChainOrdering,
    DensityMatrix,
    EntanglementProfile,
    PureState,
    bures_distance,
    entanglement_entropy,
    entanglement_profile,
    partial_trace,
    uhlmann_fidelity,
    von_neumann_entropy,
)


def random_density(k, rng, rank=None):
    d = 1 << k
    rank = rank or d
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def brute_partial_trace(psi, n, keep):
    """Index-by-index sum over the traced-out bits."""
    rest = [q for q in range(n) if q not in keep]
    k = len(keep)
    out = np.zeros((1 << k, 1 << k), dtype=complex)
    for a, b in itertools.product(range(1 << k), repeat=2):
        for r in range(1 << len(rest)):
            ia = ib = 0
            bits_a = {q: (a >> (k - 1 - j)) & 1 for j, q in enumerate(keep)}
            bits_b = {q: (b >> (k - 1 - j)) & 1 for j, q in enumerate(keep)}
            bits_r = {q: (r >> (len(rest) - 1 - j)) & 1 for j, q in enumerate(rest)}
            for q in range(n):
                ia = ia * 2 + {**bits_a, **bits_r}[q]
                ib = ib * 2 + {**bits_b, **bits_r}[q]
            out[a, b] += psi[ia] * np.conj(psi[ib])
    return out


def oracle_fidelity(rho, sigma):
    s = scipy.linalg.sqrtm(rho)
    return np.linalg.svd(s @ scipy.linalg.sqrtm(sigma), compute_uv=False).sum()


def test_product_state_partial_trace():
    plus = np.array([1, 1]) / np.sqrt(2)
    psi = PureState.product([np.array([1, 0]), plus])
    rho = partial_trace(psi, [1])
    np.testing.assert_allclose(rho.matrix, np.full((2, 2), 0.5), atol=1e-15)


def test_bell_pair_reduced_state_is_maximally_mixed():
    psi = PureState.from_vector(np.array([1, 0, 0, 1]) / np.sqrt(2))
    np.testing.assert_allclose(psi.reduced_density_matrix([0]).matrix, np.eye(2) / 2, atol=1e-15)


@pytest.mark.parametrize("keep", [(0,), (2,), (1, 3), (3, 0), (0, 2, 3)])
def test_partial_trace_matches_index_sum(keep):
    psi = PureState.haar_random(4, np.random.default_rng(11))
    got = partial_trace(psi, keep).matrix
    np.testing.assert_allclose(got, brute_partial_trace(psi.amplitudes, 4, keep), atol=1e-13)


def test_partial_trace_of_density_matrix_composes():
    psi = PureState.haar_random(4, np.random.default_rng(2))
    rho = partial_trace(psi, (0, 1, 3))
    np.testing.assert_allclose(partial_trace(rho, (3, 0)).matrix, partial_trace(psi, (3, 0)).matrix, atol=1e-14)


def test_partial_trace_rejects_bad_subsets():
    psi = PureState.from_bits([0, 0])
    with pytest.raises(ValidationError):
        partial_trace(psi, [])
    with pytest.raises(ValidationError):
        partial_trace(psi, [2])
    with pytest.raises(ValidationError):
        partial_trace(psi, [0, 0])


def test_fidelity_identical_and_orthogonal():
    a = PureState.from_bits([0])
    b = PureState.from_bits([1])
    assert uhlmann_fidelity(a, a) == pytest.approx(1.0)
    assert uhlmann_fidelity(a, b) == 0.0
    assert bures_distance(a, b) == pytest.approx(np.sqrt(2))


def test_fidelity_mixed_vs_pure():
    rho = DensityMatrix(np.eye(2) / 2)
    assert uhlmann_fidelity(rho, PureState.from_bits([0])) == pytest.approx(np.sqrt(0.5))


def test_fidelity_matches_sqrtm_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = int(rng.integers(1, 4))
        rho, sigma = random_density(k, rng), random_density(k, rng)
        assert uhlmann_fidelity(rho, sigma) == pytest.approx(oracle_fidelity(rho.matrix, sigma.matrix), abs=1e-9)


def test_fidelity_rejects_mismatched_inputs():
    with pytest.raises(ValidationError):
        uhlmann_fidelity(DensityMatrix(np.eye(2) / 2), DensityMatrix(np.eye(4) / 4))
    with pytest.raises(ValidationError):
        uhlmann_fidelity(DensityMatrix(np.eye(2) / 2, (0,)), DensityMatrix(np.eye(2) / 2, (1,)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 3))
def test_fidelity_symmetric_and_bounded(seed, k):
    rng = np.random.default_rng(seed)
    rho, sigma = random_density(k, rng, rank=int(rng.integers(1, (1 << k) + 1))), random_density(k, rng)
    f = uhlmann_fidelity(rho, sigma)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(uhlmann_fidelity(sigma, rho), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fidelity_monotone_under_partial_trace(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = random_density(3, rng), random_density(3, rng)
    keep = tuple(sorted(rng.choice(3, size=2, replace=False).tolist()))
    assert uhlmann_fidelity(partial_trace(rho, keep), partial_trace(sigma, keep)) >= uhlmann_fidelity(rho, sigma) - 1e-9


def test_density_matrix_validation():
    with pytest.raises(ValidationError):
        DensityMatrix(np.array([[1, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.eye(2))
    with pytest.raises(ValidationError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.eye(3) / 3)


def test_pure_state_validation():
    with pytest.raises(ValidationError):
        PureState(np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        PureState(np.ones(3) / np.sqrt(3))


def test_entropy_values():
    assert von_neumann_entropy(DensityMatrix(np.eye(4) / 4)) == pytest.approx(2 * LN2)
    assert von_neumann_entropy(DensityMatrix(np.diag([1.0, 0.0]))) == 0.0


def test_ghz_profile_is_flat_ln2():
    psi = np.zeros(16)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    prof = entanglement_profile(PureState.from_vector(psi))
    np.testing.assert_allclose(prof.entropies, [LN2] * 3, atol=1e-12)


def test_product_profile_is_zero():
    prof = PureState.from_bits([1, 0, 1, 1, 0]).entanglement_profile()
    assert np.all(prof.entropies == 0.0)


def test_profile_follows_chain_ordering():
    # Bell pair on qubits (0, 2) plus |0> on qubit 1
    psi = np.zeros(8)
    psi[0b000] = psi[0b101] = 1 / np.sqrt(2)
    state = PureState.from_vector(psi)
    np.testing.assert_allclose(state.entanglement_profile().entropies, [LN2, LN2], atol=1e-12)
    reordered = state.entanglement_profile(ChainOrdering((0, 2, 1)))
    np.testing.assert_allclose(reordered.entropies, [LN2, 0.0], atol=1e-12)


def test_entanglement_entropy_cut_range():
    state = PureState.from_bits([0, 0, 0])
    with pytest.raises(ValidationError):
        entanglement_entropy(state, 0)
    with pytest.raises(ValidationError):
        entanglement_entropy(state, 3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6))
def test_profile_symmetry_and_bounds(seed, n):
    state = PureState.haar_random(n, np.random.default_rng(seed))
    s = state.entanglement_profile().entropies
    k = np.arange(1, n)
    assert np.all(s >= 0) and np.all(s <= np.minimum(k, n - k) * LN2 + 1e-10)
    # S(A) = S(complement) for the first cut, checked through the reduced state
    rho = partial_trace(state, tuple(range(n - 1)))
    assert von_neumann_entropy(rho) == pytest.approx(s[-1], abs=1e-9)


def test_profile_rejects_out_of_range_values():
    with pytest.raises(ValidationError):
        EntanglementProfile([-0.1, 0.0])
    with pytest.raises(ValidationError):
        EntanglementProfile([LN2 * 1.5])


def test_snake_ordering():
    assert ChainOrdering.snake(2, 2, per_cell=2).order == (0, 1, 2, 3, 6, 7, 4, 5)
    with pytest.raises(ValidationError):
        ChainOrdering((0, 0, 1))


def test_state_record_round_trip():
    state = PureState.haar_random(3, np.random.default_rng(0), ChainOrdering((2, 0, 1))).with_meta(energy=-1.5)
    back = PureState.from_record(state.to_record())
    assert np.array_equal(back.amplitudes, state.amplitudes)
    assert back.ordering == state.ordering and back.meta == {"energy": -1.5}
    rho = partial_trace(state, (2, 0))
    back_rho = DensityMatrix.from_record(rho.to_record())
    assert np.array_equal(back_rho.matrix, rho.matrix) and back_rho.support == (2, 0)
