import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import capacity_hh, dense_effective, random_columns, random_triple_arrays, set_capacity
from ris_mimo.capacity import (
    GramEvaluator,
    ReflectionState,
    as_antenna_set,
    capacity,
    capacity_of_matrix,
    effective_channel,
    full_gradient,
    gram_init,
    marginal_gain,
    naive_gradient,
)
from ris_mimo.channel import ChannelTriple
from ris_mimo.harness.bench import gradient_speedup


def _triple(rng, K=3, L=6, N=4):
    return ChannelTriple(*random_triple_arrays(rng, K, L, N))


# --- reflection state and antenna sets ---------------------------------------


def test_reflection_state_unit_modulus_enforced():
    with pytest.raises(ValueError):
        ReflectionState(np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        ReflectionState(np.array([1.0]), mode="disabled")
    assert ReflectionState.disabled(3).mode == "disabled"


def test_reflection_state_random_is_unit_modulus():
    r = ReflectionState.random(50, np.random.default_rng(0))
    np.testing.assert_allclose(np.abs(r.beta), 1.0, atol=1e-12)


def test_antenna_set_validation():
    assert as_antenna_set([3, 1], 5) == (1, 3)
    with pytest.raises(ValueError):
        as_antenna_set([1, 1], 5)
    with pytest.raises(IndexError):
        as_antenna_set([5], 5)


# --- effective channel --------------------------------------------------------


def test_effective_channel_ris_off():
    t = _triple(np.random.default_rng(0))
    S = (0, 2, 5)
    np.testing.assert_array_equal(effective_channel(t, S, ReflectionState.disabled(t.N)), t.direct[:, S])


@pytest.mark.parametrize("theta", [0.0, 1.0, np.pi])
def test_effective_channel_scalar(theta):
    one = np.ones((1, 1), dtype=complex)
    t = ChannelTriple(one, one, one)
    h = effective_channel(t, (0,), ReflectionState.from_phases([theta]))
    assert h[0, 0] == pytest.approx(1 + np.exp(1j * theta))


def test_effective_channel_dense_oracle():
    rng = np.random.default_rng(1)
    t = _triple(rng)
    r = ReflectionState.random(t.N, rng)
    full = dense_effective(t.direct, t.bs_ris, t.ris_user, r.beta)
    S = (1, 3, 4)
    np.testing.assert_allclose(effective_channel(t, S, r), full[:, S], atol=1e-12)


def test_effective_channel_index_error():
    t = _triple(np.random.default_rng(2))
    with pytest.raises(IndexError):
        effective_channel(t, (0, 6), ReflectionState.ones(t.N))


# --- capacity -------------------------------------------------------------------


def test_capacity_empty_set():
    t = _triple(np.random.default_rng(3))
    assert capacity(t, (), ReflectionState.ones(t.N), 10.0) == 0.0


def test_capacity_single_user_single_column():
    h = np.array([[1.0 + 1j]])
    assert capacity_of_matrix(h, 3.0) == pytest.approx(np.log2(1 + 3.0 * 2.0))


def test_capacity_dual_forms_k3_s5():
    rng = np.random.default_rng(4)
    h = random_columns(rng, 3, 5)
    kk = np.log2(np.linalg.det(np.eye(3) + 2.0 * h @ h.conj().T).real)
    assert capacity_of_matrix(h, 2.0) == pytest.approx(kk, rel=1e-10)
    assert capacity_hh(h, 2.0) == pytest.approx(kk, rel=1e-10)


def test_form_equivalence_100_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        K, n = rng.integers(1, 6, size=2)
        h = random_columns(rng, K, n)
        snr = float(rng.uniform(0.1, 100))
        a = np.log2(np.linalg.det(np.eye(n) + snr * h.conj().T @ h).real)
        b = np.log2(np.linalg.det(np.eye(K) + snr * h @ h.conj().T).real)
        assert a == pytest.approx(b, rel=1e-9)
        assert capacity_of_matrix(h, snr) == pytest.approx(a, rel=1e-9)


def test_capacity_increasing_in_snr():
    rng = np.random.default_rng(6)
    for _ in range(20):
        h = random_columns(rng, 3, 4)
        snrs = np.sort(rng.uniform(0.01, 100, 5))
        caps = [capacity_of_matrix(h, s) for s in snrs]
        assert np.all(np.diff(caps) > 0)


# --- Gram evaluator -------------------------------------------------------------


def test_gram_init_empty_identity():
    g = gram_init(random_columns(np.random.default_rng(7), 3, 5), (), 2.0)
    np.testing.assert_allclose(g.cache.matrix_inverse, np.eye(3))
    assert g.capacity == 0.0


def test_gram_init_singleton():
    cols = random_columns(np.random.default_rng(8), 3, 5)
    g = gram_init(cols, (2,), 2.0)
    assert g.capacity == pytest.approx(np.log2(1 + 2.0 * np.vdot(cols[:, 2], cols[:, 2]).real))


def test_gram_init_dense_inverse():
    rng = np.random.default_rng(9)
    cols = random_columns(rng, 4, 10)
    S = (0, 3, 4, 8)
    g = gram_init(cols, S, 1.5)
    dense = np.linalg.inv(np.eye(4) + 1.5 * cols[:, S] @ cols[:, S].conj().T)
    np.testing.assert_allclose(g.cache.matrix_inverse, dense, rtol=1e-8, atol=1e-10)
    assert g.capacity == pytest.approx(set_capacity(cols, S, 1.5), rel=1e-10)


def test_marginal_gain_zero_column_in_set():
    cols = random_columns(np.random.default_rng(10), 3, 4)
    cols[:, 1] = 0
    g = gram_init(cols, (1, 2), 2.0)
    assert marginal_gain(g, 1) == 0.0


def test_marginal_gain_empty_set():
    cols = random_columns(np.random.default_rng(11), 3, 4)
    g = gram_init(cols, (), 2.0)
    for i in range(4):
        assert marginal_gain(g, i) == pytest.approx(np.log2(1 + 2.0 * np.linalg.norm(cols[:, i]) ** 2))


def test_marginal_gain_determinant_oracle():
    rng = np.random.default_rng(12)
    cols = random_columns(rng, 3, 8)
    S = {1, 4, 5}
    g = gram_init(cols, S, 3.0)
    for i in range(8):
        expected = set_capacity(cols, S | {i}, 3.0) - set_capacity(cols, S - {i}, 3.0)
        assert marginal_gain(g, i) == pytest.approx(expected, abs=1e-8)


def test_full_gradient_empty_set():
    cols = random_columns(np.random.default_rng(13), 2, 6)
    expected = np.log2(1 + 0.5 * np.linalg.norm(cols, axis=0) ** 2)
    np.testing.assert_allclose(full_gradient(gram_init(cols, (), 0.5)), expected, rtol=1e-12)


def test_full_gradient_matches_naive_and_single_calls():
    rng = np.random.default_rng(14)
    cols = random_columns(rng, 3, 8)
    g = gram_init(cols, (0, 2, 7), 4.0)
    fast = full_gradient(g)
    np.testing.assert_allclose(fast, naive_gradient(cols, (0, 2, 7), 4.0), atol=1e-8)
    np.testing.assert_allclose(fast, [marginal_gain(g, i) for i in range(8)], atol=1e-12)


def test_singular_downdate_falls_back_to_dense():
    # one column carrying all the energy in a 1-user channel: removing it is
    # numerically singular when snr |u|^2 is huge
    cols = np.array([[1e8, 1.0, 0.5]], dtype=complex)
    g = gram_init(cols, (0, 1), 1.0)
    expected = set_capacity(cols, {0, 1}, 1.0) - set_capacity(cols, {1}, 1.0)
    assert marginal_gain(g, 0) == pytest.approx(expected, rel=1e-6)


def test_add_remove_consistency():
    rng = np.random.default_rng(15)
    cols = random_columns(rng, 4, 9)
    g = GramEvaluator(cols, (1, 3), 2.0)
    g.add(6)
    g.remove(6)
    fresh = GramEvaluator(cols, (1, 3), 2.0)
    np.testing.assert_allclose(g.cache.matrix_inverse, fresh.cache.matrix_inverse, atol=1e-8)
    assert g.capacity == pytest.approx(fresh.capacity, abs=1e-8)
    with pytest.raises(ValueError):
        g.remove(6)
    with pytest.raises(ValueError):
        g.add(1)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(1, 4), L=st.integers(1, 9))
def test_marginal_gains_nonnegative_outside_set(seed, K, L):
    rng = np.random.default_rng(seed)
    cols = random_columns(rng, K, L)
    S = tuple(np.flatnonzero(rng.random(L) < 0.5))
    phi = GramEvaluator(cols, S, 5.0).full_gradient()
    outside = np.setdiff1d(np.arange(L), S)
    assert np.all(phi[outside] >= -1e-12)


def test_fast_gradient_speedup_over_naive():
    report = gradient_speedup(L=128, K=8, S_size=16, repetitions=3)
    assert report["max_abs_diff"] <= 1e-8
    assert report["speedup"] > 10
