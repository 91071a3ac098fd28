import json
import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from qphase import ValidationError
from qphase.kernels import (
    EntanglementKernel,
    FidelityKernel,
    KernelConfig,
    KernelMatrix,
    ShadowKernel,
    build_kernel_matrix,
    cosine_normalize,
    draw_subsets,
    entanglement_kernel,
    fidelity_kernel,
    shadow_limit_weights,
)
from qphase.models import ToricLattice, random_product_state
from qphase.shadows import collect_shadows
from qphase.stabilizer import toric_stabilizer_state
from qphase.statespace import LN2, EntanglementProfile, PureState, partial_trace


def haar(n, seed):
    return PureState.haar_random(n, np.random.default_rng(seed))


def oracle_fidelity(rho, sigma):
    r = sla.sqrtm(rho)
    return float(np.sum(sla.svdvals(r @ sla.sqrtm(sigma))))


def test_identical_states_give_e_beta():
    psi = haar(4, 0)
    assert fidelity_kernel(psi, psi, KernelConfig(beta=1.7)) == pytest.approx(math.exp(1.7), rel=1e-12)
    assert fidelity_kernel(psi, haar(4, 1), KernelConfig(beta=1e-300)) == pytest.approx(1.0)
    km = build_kernel_matrix([psi, psi, psi], KernelConfig(beta=1.7))
    np.testing.assert_allclose(km.values, np.ones((3, 3)), atol=1e-12)


def test_fidelity_kernel_matches_oracle():
    a, b = haar(4, 2), haar(4, 3)
    subsets = {2: [(0, 1), (1, 2), (2, 3), (0, 3)]}
    expected = 0.25 * sum(oracle_fidelity(partial_trace(a, s).matrix, partial_trace(b, s).matrix)
                          for s in subsets[2])
    got = fidelity_kernel(a, b, KernelConfig(beta=2.0), subsets=subsets)
    assert math.log(got) == pytest.approx(2.0 * expected, abs=1e-9)


def test_fidelity_kernel_custom_weights():
    a, b = haar(3, 4), haar(3, 5)
    cfg = KernelConfig(beta=1.0, r_max=2, weights={1: 0.5, 2: 0.25}, subset_policy="all")
    f1 = sum(oracle_fidelity(partial_trace(a, (q,)).matrix, partial_trace(b, (q,)).matrix) for q in range(3))
    f2 = sum(oracle_fidelity(partial_trace(a, p).matrix, partial_trace(b, p).matrix)
             for p in ((0, 1), (0, 2), (1, 2)))
    assert math.log(fidelity_kernel(a, b, cfg)) == pytest.approx(0.5 * f1 + 0.25 * f2, abs=1e-9)


def test_toric_vs_product_is_smaller():
    toric = toric_stabilizer_state(ToricLattice(2, 2))
    cfg = KernelConfig(beta=0.1)
    rps = random_product_state(8, 3)
    assert fidelity_kernel(toric, rps, cfg) < fidelity_kernel(toric, toric, cfg)


def test_entanglement_kernel_examples():
    p = EntanglementProfile(np.array([0.0, 0.0]))
    q = EntanglementProfile(np.array([LN2, 0.0]))
    assert entanglement_kernel(p, q, beta=3.0) == pytest.approx(0.5, abs=1e-15)
    assert entanglement_kernel(p, p, beta=3.0) == 1.0
    assert entanglement_kernel(p, q, 1.3) == entanglement_kernel(q, p, 1.3)
    with pytest.raises(ValidationError):
        entanglement_kernel(p, EntanglementProfile(np.zeros(3)))


CAP5 = np.array([1, 2, 2, 1]) * LN2  # min(k, n - k) ln2 for n = 5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4), min_size=2, max_size=12),
       st.floats(0.1, 10.0))
def test_entanglement_kernel_matrix_is_psd(fractions, beta):
    km = EntanglementKernel(beta=beta).kernel_matrix([np.array(f) * CAP5 for f in fractions])
    np.testing.assert_allclose(km.values, km.values.T, atol=1e-10)
    assert np.linalg.eigvalsh(km.values).min() >= -1e-8


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1 / 3), min_size=4, max_size=4), st.floats(0.01, 1 / 3), st.integers(0, 3))
def test_entanglement_kernel_monotone(base, step, k):
    base = np.array(base) * CAP5
    near = base.copy()
    near[k] += step * CAP5[k]
    far = near.copy()
    far[k] += step * CAP5[k]
    p = EntanglementProfile(base)
    assert entanglement_kernel(p, EntanglementProfile(far), 2.0) < entanglement_kernel(p, EntanglementProfile(near), 2.0)


def test_normalized_matrix_invariants():
    states = [haar(4, s) for s in range(6)]
    km = FidelityKernel(beta=3.0).kernel_matrix(states)
    np.testing.assert_allclose(km.values, km.values.T, atol=1e-10)
    np.testing.assert_allclose(np.diag(km.values), 1.0, atol=1e-10)
    assert km.values.min() >= 0 and km.values.max() <= 1 + 1e-10
    np.testing.assert_allclose(km.raw_diagonal, math.exp(3.0), rtol=1e-12)


def test_single_sample_and_errors():
    assert FidelityKernel().fit_transform([haar(3, 0)]).tolist() == [[1.0]]
    with pytest.raises(ValidationError):
        FidelityKernel().kernel_matrix([])
    with pytest.raises(ValidationError):
        FidelityKernel().kernel_matrix([haar(3, 0), toric_stabilizer_state(ToricLattice(2, 2))])
    with pytest.raises(ValidationError):
        FidelityKernel().kernel_matrix([haar(3, 0), haar(4, 0)])
    with pytest.raises(ValidationError):
        ShadowKernel().kernel_matrix([haar(2, 0)])
    with pytest.raises(ValidationError):
        KernelConfig(beta=0.0)
    with pytest.raises(ValidationError):
        KernelConfig(weights={1: -0.1})


def test_log_space_survives_overflow():
    states = [haar(4, s) for s in range(3)]
    km = FidelityKernel(beta=2000.0).kernel_matrix(states)
    assert np.all(np.isfinite(km.values))
    np.testing.assert_allclose(np.diag(km.values), 1.0)


def test_cosine_normalize_matches_direct():
    k = np.array([[4.0, 1.0], [1.0, 9.0]])
    np.testing.assert_allclose(cosine_normalize(np.log(k)), [[1, 1 / 6], [1 / 6, 1]], atol=1e-15)


def test_subset_draws():
    assert draw_subsets(8, 2, 8, seed=3) == draw_subsets(8, 2, 8, seed=3)
    assert all(b - a == 1 for a, b in draw_subsets(8, 2, 20, seed=1))
    assert len(draw_subsets(5, 2, 1, "all")) == 10
    assert all(len(set(s)) == 3 for s in draw_subsets(6, 3, 10, "uniform", 2))
    w = shadow_limit_weights(2.0, 3)
    assert w == {1: 2.0, 2: 2.0, 3: pytest.approx(4 / 3)}


def test_bit_for_bit_reproducible_and_parallel():
    states = [haar(5, s) for s in range(5)]
    a = FidelityKernel(beta=0.5, random_state=7).kernel_matrix(states)
    b = FidelityKernel(beta=0.5, random_state=7).kernel_matrix(states, n_jobs=3)
    assert a.to_csv() == b.to_csv()
    assert a.metadata["subsets"] == b.metadata["subsets"]


def test_transform_matches_matrix_rows():
    states = [haar(4, s) for s in range(4)]
    est = FidelityKernel(beta=1.0)
    full = est.kernel_matrix(states).values
    np.testing.assert_allclose(est.transform(states[:2]), full[:2], atol=1e-12)
    assert est.get_params()["beta"] == 1.0


def test_shadow_kernel_estimator():
    ens = [collect_shadows(haar(3, s), 40, s) for s in range(3)]
    km = ShadowKernel(beta=1.0).kernel_matrix(ens)
    assert np.array_equal(km.values, km.values.T)
    np.testing.assert_allclose(np.diag(km.values), 1.0)


def test_csv_and_sidecar():
    states = [haar(3, s) for s in range(3)]
    km = build_kernel_matrix(states, KernelConfig(beta=0.5), sample_metadata=[{"i": i} for i in range(3)])
    text = km.to_csv()
    assert text.splitlines()[0] == ",0,1,2"
    assert text.splitlines()[2].startswith("1,")
    back = KernelMatrix.from_csv(text)
    assert np.array_equal(back.values, km.values)
    side = json.loads(km.sidecar())
    assert side["normalization"] == "cosine"
    assert side["config"]["beta"] == 0.5
    assert side["raw_diagonal"] == pytest.approx([math.exp(0.5)] * 3)
    assert side["samples"][2] == {"i": 2}
