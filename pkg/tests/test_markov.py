import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metacocycle.driving import build_rotation_driving, build_shift_driving, constant_driving, golden_angle
from metacocycle.markov import (
    ChainError,
    EnvChain,
    SingularDeltaError,
    TruncationError,
    averaged_decomposition,
    backward_product,
    backward_product_closed_form,
    chain_limit,
    chain_limit_check,
    delta_n_decompose,
    format_v0,
    p_recursion,
    pi_limit,
    pi_series,
    solve_v0,
    transition_matrix,
)


def const2(bl, br, eps):
    return EnvChain.two_state(constant_driving((bl, br)), eps)


def sym3(eps, beta=1.0):
    t = np.array([[0, beta, 0], [beta, 0, beta], [0, beta, 0]], dtype=float)
    return EnvChain(3, constant_driving((0.0,)), t[None], eps)


def test_transition_examples():
    np.testing.assert_allclose(transition_matrix(const2(1, 1, 0.1), 0), [[0.9, 0.1], [0.1, 0.9]])
    np.testing.assert_array_equal(transition_matrix(const2(1, 1, 0.0), 5), np.eye(2))
    np.testing.assert_allclose(transition_matrix(sym3(0.1), 0)[:, 1], [0.1, 0.8, 0.1])


def test_chain_validation():
    with pytest.raises(ChainError):
        EnvChain(3, constant_driving((0.0,)), np.ones((1, 3, 3)), 0.1)
    with pytest.raises(ChainError):
        sym3(0.6)  # middle diagonal 1 - 0.6 * 2 < 0


def test_backward_product_examples():
    c = const2(1, 1, 0.1)
    np.testing.assert_array_equal(backward_product(c, 3, 0), np.eye(2))
    assert backward_product(c, 0, 2)[0, 1] == pytest.approx(0.18, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=4),
       eps=st.sampled_from([0.1, 0.01]), k=st.integers(-500, 500), n=st.integers(0, 300))
def test_product_closed_form_and_stochastic(vals, eps, k, n):
    starts = np.linspace(0, 1, len(vals), endpoint=False)
    c = EnvChain.two_state(build_rotation_driving(golden_angle(), list(zip(starts, vals))), eps)
    p = backward_product(c, k, n)
    assert np.abs(p.sum(axis=0) - 1).max() <= 1e-12
    np.testing.assert_allclose(p, backward_product_closed_form(c, k, n), atol=1e-12, rtol=0)


def test_pi_series_examples():
    assert pi_series(const2(1, 1, 0.1), 0)[0] == pytest.approx(0.5, abs=1e-12)
    assert pi_series(const2(0.7, 0.7, 0.3), 0)[0] == pytest.approx(0.5, abs=1e-12)
    assert pi_series(const2(1, 0, 0.1), 0)[0] == 0.0
    beta31 = EnvChain.two_state(constant_driving((1.0, 1 / 3)), 0.01, scale=3.0)  # beta_L = 3, beta_R = 1
    assert pi_series(beta31, 0)[0] == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ChainError):
        pi_series(const2(0, 0, 0.1), 0)


def test_pi_series_truncation_error():
    ds = build_shift_driving([((1.0, 1.0), 0.5), ((0.5, 0.2), 0.5)], seed=0, window_radius=50)
    c = EnvChain.two_state(ds, 0.01)
    with pytest.raises(TruncationError) as exc:
        pi_series(c, 0)
    assert exc.value.required > 50


def test_pi_limit_examples():
    assert pi_limit(constant_driving((0.5, 0.5))) == 0.5
    assert pi_limit(constant_driving((0.6, 0.4))) == pytest.approx(0.4)
    ds = build_rotation_driving(golden_angle(), [(0.0, (0.3, 1.0)), (0.25, (0.3, 0.0))])
    assert pi_limit(ds) == pytest.approx(0.25 / (0.25 + 0.3))


def test_p_recursion_examples():
    c = const2(1, 1, 0.1)
    assert p_recursion(c, 0, 0, 0.3) == 0.3
    assert p_recursion(c, 0, 1, 1.0) == pytest.approx(0.9, abs=1e-15)
    for p0 in (0.0, 0.5, 1.0):
        assert p_recursion(c, 0, 500, p0) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ChainError):
        p_recursion(c, 0, 3, 1.5)


def test_pi_series_equals_product_entry():
    ds = build_rotation_driving(golden_angle(), [(0.0, (0.9, 0.2)), (0.4, (0.1, 0.7))])
    c = EnvChain.two_state(ds, 0.05)
    # the (L, R) entry of a long backward product is the truncated series
    val, terms, tail = pi_series(c, 17)
    assert backward_product(c, 17, terms)[0, 1] == pytest.approx(val, abs=tail + 1e-12)


def test_decomposition_examples():
    d, n = delta_n_decompose(const2(0.6, 0.4, 0.1), 0)
    np.testing.assert_array_equal(d, np.diag([0.6, 0.4]))
    np.testing.assert_array_equal(n, [[0, 0.4], [0.6, 0]])
    d2, n2 = delta_n_decompose(const2(0.6, 0.4, 0.01), 0)
    assert np.array_equal(d, d2) and np.array_equal(n, n2)
    t = np.array([[0, 0.2, 0], [0.3, 0, 0.5], [0, 0.7, 0]])
    d3, _ = delta_n_decompose(EnvChain(3, constant_driving((0.0,)), t[None], 0.1), 0)
    assert d3[1, 1] == pytest.approx(0.8)


def test_decomposition_reconstructs_matrix():
    c = const2(0.6, 0.4, 0.1)
    d, n = delta_n_decompose(c, 0)
    np.testing.assert_allclose(transition_matrix(c, 0), np.eye(2) - 0.1 * d + 0.1 * n, atol=1e-15)


def test_solve_v0_examples():
    d, n = averaged_decomposition(const2(0.6, 0.4, 0.1))
    np.testing.assert_allclose(solve_v0(d, n), [0.4, 0.6], atol=1e-15)
    d, n = averaged_decomposition(const2(1, 1, 0.1))
    np.testing.assert_allclose(solve_v0(d, n), [0.5, 0.5], atol=1e-15)
    d, n = averaged_decomposition(sym3(0.1))
    np.testing.assert_allclose(solve_v0(d, n), [1 / 3] * 3, atol=1e-15)


def test_sym3_limit_matches_product():
    c = sym3(0.01)
    prod = backward_product(c, 0, 10_000)
    assert np.abs(prod - 1 / 3).max() <= 5e-3


def test_solve_v0_singular_and_absorbing():
    d, n = averaged_decomposition(const2(1, 0, 0.1))
    with pytest.raises(SingularDeltaError):
        solve_v0(d, n)
    np.testing.assert_array_equal(solve_v0(d, n, absorbing=True), [0.0, 1.0])
    d, n = averaged_decomposition(const2(0, 0, 0.1))
    with pytest.raises(SingularDeltaError):
        solve_v0(d, n, absorbing=True)


def test_limit_check_rows_and_ordering():
    c = const2(1, 1, 0.1)
    rows = chain_limit_check(c, [0.1, 0.01], 10_000, [0, 5])
    assert len(rows) == 8
    assert max(r.max_dist_to_v0 for r in rows if r.epsilon == 0.01) <= 5e-3
    ds = build_rotation_driving(golden_angle(), [(0.0, (0.0, 0.9, 0.3, 0.0)), (0.5, (0.0, 0.3, 0.5, 0.0))])
    lc = EnvChain.from_leak_driving(ds, 2, 0.1)
    rows = chain_limit_check(lc, [0.1, 0.01], 10_000, range(0, 1000, 101))
    big = max(r.max_dist_to_v0 for r in rows if r.epsilon == 0.1)
    small = max(r.max_dist_to_v0 for r in rows if r.epsilon == 0.01)
    assert big > small
    zero = chain_limit_check(c, [0.0], 100, [0])
    assert max(r.max_dist_to_v0 for r in zero) == pytest.approx(0.5)
    assert rows[0].csv_fields()[0] == "0.1"


def test_format_v0():
    assert format_v0(chain_limit(sym3(0.1)).v0) == "0.333333333333, 0.333333333333, 0.333333333333"
