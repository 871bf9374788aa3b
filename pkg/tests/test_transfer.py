import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metacocycle.maps import chain_tent, hole_measure, paired_tent
from metacocycle.transfer import (
    Density,
    GridError,
    apply,
    apply_sequence,
    l1_distance,
    load_density,
    load_operator,
    ly_bound,
    save_density,
    save_operator,
    ulam_matrix,
    variation,
    verify_ly,
)


def _sampled_ulam(tmap, grid_n, samples=4000):
    """Oracle: Ulam matrix from dense midpoint sampling of every cell."""
    h = 2.0 / grid_n
    mat = np.zeros((grid_n, grid_n))
    u = (np.arange(samples) + 0.5) / samples
    for j in range(grid_n):
        xs = -1 + h * (j + u)
        ys = tmap(xs)
        rows = np.clip(np.floor((ys + 1) / h).astype(int), 0, grid_n - 1)
        mat[:, j] = np.bincount(rows, minlength=grid_n) / samples
    return mat


def test_four_cell_hand_example():
    m = ulam_matrix(paired_tent(0, 0), 4).dense()
    np.testing.assert_allclose(m[:, 0], [0.5, 0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(m, [[.5, .5, 0, 0], [.5, .5, 0, 0], [0, 0, .5, .5], [0, 0, .5, .5]], atol=1e-15)


@pytest.mark.parametrize("tmap", [paired_tent(0.3, 0.7), paired_tent(1, 0.05), chain_tent(3, [[0, .4], [.2, .6], [.9, 0]])])
def test_matches_sampling_oracle(tmap):
    exact = ulam_matrix(tmap, 24).dense()
    assert np.abs(exact - _sampled_ulam(tmap, 24)).max() <= 2e-3


@pytest.mark.parametrize("grid_n", [8, 64, 512])
def test_uniform_fixed_at_zero_leak(grid_n):
    op = ulam_matrix(paired_tent(0, 0), grid_n)
    u = Density.uniform(grid_n)
    assert np.abs(apply(op, u).values - u.values).max() <= 1e-14
    il = Density.indicator(grid_n, -1, 0)
    np.testing.assert_allclose(apply(op, il).values, il.values, atol=1e-14)


def test_apply_linearity_and_zero():
    op = ulam_matrix(paired_tent(0.2, 0.4), 64)
    assert np.all(apply(op, Density.zeros(64)).values == 0)
    rng = np.random.default_rng(1)
    f, g = Density(64, rng.normal(size=64)), Density(64, rng.normal(size=64))
    np.testing.assert_allclose(apply(op, f + 2 * g).values, (apply(op, f) + 2 * apply(op, g)).values, atol=1e-13)


@pytest.mark.parametrize("grid_n", [128, 512, 2048])
def test_leak_matches_hole_measure(grid_n):
    tmap = paired_tent(0, 0.1)
    out = apply(ulam_matrix(tmap, grid_n), Density.indicator(grid_n, -1, 0))
    assert abs(out.mass_on(0, 1) - hole_measure(tmap, "L")) <= 4.0 / grid_n


def test_grid_mismatch():
    with pytest.raises(GridError):
        apply(ulam_matrix(paired_tent(0, 0), 8), Density.zeros(16))
    with pytest.raises(GridError):
        Density(8, np.zeros(7))


def test_norms_and_variation():
    il = Density.indicator(64, -1, 0)
    assert variation(il) == 1.0
    assert il.l1_norm() == 1.0
    assert Density.uniform(32).variation() == 0.0
    assert Density(4, [0, 1, 0, 1]).variation() == 3.0
    assert l1_distance(il, Density.zeros(64)) == 1.0


def test_apply_sequence_order():
    a, b = ulam_matrix(paired_tent(0.5, 0), 32), ulam_matrix(paired_tent(0, 0.5), 32)
    f = Density.indicator(32, -1, -0.5)
    np.testing.assert_allclose(apply_sequence([a, b], f).values, apply(b, apply(a, f)).values)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 1), b=st.floats(0, 1), n=st.integers(2, 200).map(lambda k: 2 * k))
def test_markov_properties(a, b, n):
    mat = ulam_matrix(paired_tent(a, b), n).matrix
    assert np.abs(np.asarray(mat.sum(axis=0)).ravel() - 1).max() <= 1e-12
    assert mat.data.min() >= 0


def test_dump_roundtrip(tmp_path):
    op = ulam_matrix(paired_tent(0.3, 0.1), 40)
    save_operator(op, tmp_path / "op.csv")
    back = load_operator(tmp_path / "op.csv")
    assert np.array_equal(back.dense(), op.dense())
    f = Density(40, np.random.default_rng(0).normal(size=40))
    save_density(f, tmp_path / "f.csv")
    assert np.array_equal(load_density(tmp_path / "f.csv").values, f.values)
    with pytest.raises(GridError):
        load_operator(tmp_path / "f.csv")


def test_ly_examples():
    assert ly_bound(100.0, 1.0, 4) == pytest.approx(0.75**4 * 100 + 26)
    seq = [paired_tent(1, 1), paired_tent(0.5, 0)] * 4
    il = Density.indicator(256, -1, 0)
    rep = verify_ly(seq, 0, 256, (2,), densities=[il, Density.zeros(256)])
    assert rep.ok and rep.checks == 2
    assert rep.max_ratio < 0.2
    with pytest.raises(ValueError):
        verify_ly(seq, 1, 64, (3,))


def test_ly_large_variation_input():
    rng = np.random.default_rng(4)
    seq = [paired_tent(*rng.uniform(0, 1, 2)) for _ in range(8)]
    vals = np.where(np.arange(256) % 2 == 0, 1.0, -1.0) * 100 / 255 * 1.0
    f = Density(256, vals / (0.5 * Density(256, vals).l1_norm()))
    rep = verify_ly(seq, 0, 256, (8,), densities=[f])
    assert rep.ok
