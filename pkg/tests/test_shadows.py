import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qphase import ValidationError
from qphase.models import random_product_state
from qphase.shadows import (
    ShadowEnsemble,
    collect_shadows,
    local_estimator,
    log_shadow_kernel,
    shadow_expectation,
    shadow_kernel,
    shadow_rdm,
)
from qphase.statespace import PureState, partial_trace


def bell_state():
    return PureState.from_vector(np.array([1, 0, 0, 1]) / np.sqrt(2))


def test_local_estimator_spectrum_and_trace():
    for b, o in itertools.product(range(3), range(2)):
        m = local_estimator(b, o)
        np.testing.assert_allclose(np.linalg.eigvalsh(m), [-1.0, 2.0], atol=1e-14)
        assert np.trace(m).real == pytest.approx(1.0)


def test_local_estimator_trace_products():
    expected = {True: {True: 5.0, False: -4.0}, False: {True: 0.5, False: 0.5}}
    for b1, o1, b2, o2 in itertools.product(range(3), range(2), range(3), range(2)):
        t = np.trace(local_estimator(b1, o1) @ local_estimator(b2, o2)).real
        assert t == pytest.approx(expected[b1 == b2][o1 == o2], abs=1e-12)


def test_zero_state_outcomes():
    ens = collect_shadows(PureState.from_bits([0]), 4000, 3)
    z = ens.bases[:, 0] == 2
    x = ens.bases[:, 0] == 0
    assert np.all(ens.outcomes[z, 0] == 0)
    frac = ens.outcomes[x, 0].mean()
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / x.sum())


def test_collection_is_deterministic():
    state = PureState.haar_random(3, np.random.default_rng(0))
    a, b = collect_shadows(state, 200, 11), collect_shadows(state, 200, 11)
    assert np.array_equal(a.bases, b.bases) and np.array_equal(a.outcomes, b.outcomes)
    c = collect_shadows(state, 200, 12)
    assert not np.array_equal(a.outcomes, c.outcomes) or not np.array_equal(a.bases, c.bases)


def test_rdm_is_hermitian_unit_trace():
    ens = collect_shadows(bell_state(), 300, 1)
    rho = shadow_rdm(ens, (0, 1))
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    proj = shadow_rdm(ens, (0, 1), project=True)
    assert np.linalg.eigvalsh(proj.matrix).min() >= -1e-12


def test_rdm_entries_within_sampling_error():
    state = PureState.haar_random(3, np.random.default_rng(5))
    T = 5000
    ens = collect_shadows(state, T, 9)
    exact = partial_trace(state, (0, 2)).matrix
    est = shadow_rdm(ens, (0, 2))
    # per-entry standard error bound: single-snapshot entries are bounded by (3/2)^2 * 2
    assert np.max(np.abs(est - exact)) <= 5 * 4.5 / math.sqrt(T)


def test_expectation_unbiased_and_median_of_means():
    state = bell_state()
    ens = collect_shadows(state, 6000, 2)
    for label, value in (("ZZ", 1.0), ("XX", 1.0), ("YY", -1.0), ("ZI", 0.0)):
        se = 3.0 / math.sqrt(ens.T)
        assert abs(shadow_expectation(ens, label) - value) <= 5 * se
        assert abs(shadow_expectation(ens, label, n_groups=10) - value) <= 5 * se * math.sqrt(1.6)
    with pytest.raises(ValidationError):
        shadow_expectation(ens, "Z")


def brute_log_kernel(e1, e2, beta, nu):
    total = 0.0
    for t, u in itertools.product(range(e1.T), range(e2.T)):
        s = sum(np.trace(local_estimator(e1.bases[t, i], e1.outcomes[t, i])
                         @ local_estimator(e2.bases[u, i], e2.outcomes[u, i])).real for i in range(e1.n))
        total += math.exp(nu / e1.n * s)
    return beta * total / (e1.T * e2.T)


def test_kernel_matches_brute_force():
    a = collect_shadows(PureState.haar_random(3, np.random.default_rng(1)), 7, 1)
    b = collect_shadows(PureState.haar_random(3, np.random.default_rng(2)), 5, 2)
    assert log_shadow_kernel(a, b, 0.7, 1.3) == pytest.approx(brute_log_kernel(a, b, 0.7, 1.3), rel=1e-12)


def test_identical_single_samples():
    ens = ShadowEnsemble(np.array([[0, 1, 2]]), np.array([[0, 1, 1]]))
    assert shadow_kernel(ens, ens, beta=0.5, nu=1.0) == pytest.approx(math.exp(0.5 * math.exp(5)), rel=1e-12)
    assert shadow_kernel(ens, ens, beta=1e-12) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), beta=st.floats(0.01, 3.0), nu=st.floats(0.1, 4.0))
def test_kernel_is_exactly_symmetric(seed, beta, nu):
    a = collect_shadows(random_product_state(4, seed), 30, (seed, 1))
    b = collect_shadows(PureState.haar_random(4, np.random.default_rng(seed)), 40, (seed, 2))
    assert log_shadow_kernel(a, b, beta, nu) == log_shadow_kernel(b, a, beta, nu)


def test_kernel_rejects_size_mismatch():
    a = collect_shadows(PureState.from_bits([0, 0]), 5, 0)
    b = collect_shadows(PureState.from_bits([0, 0, 0]), 5, 0)
    with pytest.raises(ValidationError):
        shadow_kernel(a, b)


def test_text_round_trip():
    ens = collect_shadows(bell_state(), 25, 4, meta={"label": "bell"})
    back = ShadowEnsemble.from_text(ens.to_text())
    assert np.array_equal(back.bases, ens.bases) and np.array_equal(back.outcomes, ens.outcomes)
    assert back.meta["label"] == "bell" and back.seed == 4
    assert ens.to_text().splitlines()[1].split()[0] in {"".join(p) for p in itertools.product("XYZ", repeat=2)}


def test_text_rejects_wrong_count():
    text = collect_shadows(bell_state(), 3, 4).to_text()
    with pytest.raises(ValidationError):
        ShadowEnsemble.from_text("\n".join(text.splitlines()[:-1]))


def test_invalid_ensembles():
    with pytest.raises(ValidationError):
        ShadowEnsemble(np.array([[3]]), np.array([[0]]))
    with pytest.raises(ValidationError):
        collect_shadows(bell_state(), 0, 1)
