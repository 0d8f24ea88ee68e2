import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_rep.grid import (
    ConfigurationError,
    DyadicGrid,
    GridFunction,
    GridIndexError,
    HaarIndex,
    ResolutionError,
    build_grid,
    dyadic_maximal,
    enumerate_shift_words,
    expectation,
    expectation_block,
    goodness_mask,
    haar_basis_matrix,
    haar_function,
    haar_transform,
    inverse_haar_transform,
    is_k_good,
    martingale_difference,
    martingale_ops,
    p_block,
    p_block_energy,
    square_function,
)


def _interval(grid, level, index):
    """Left end of a d = 1 cube in units of the finest cell, from the shift formula."""
    side = grid.side >> level
    shift = sum(int(grid.sigma[i - 1, 0]) << (grid.L - i) for i in range(level + 1, grid.L + 1))
    return (index * side + shift) % grid.side, side


def test_standard_grid_level_one():
    g = build_grid(1, 3, [0, 0, 0])
    assert g.intervals(1) == [(0.0, 0.5), (0.5, 1.0)]


def test_shifted_grid_level_one():
    g = build_grid(1, 2, [0, 1])
    lefts = sorted(a for a, _ in g.intervals(1))
    assert lefts == [0.25, 0.75]


def test_cell_count_d2():
    assert build_grid(2, 4, np.ones((4, 2), dtype=int)).n_cells == 256


def test_bad_shift_word():
    with pytest.raises(ConfigurationError):
        build_grid(1, 3, [0, 1])
    with pytest.raises(ConfigurationError):
        build_grid(1, 2, [0, 2])
    with pytest.raises(ConfigurationError):
        build_grid(1, 21)


@pytest.mark.parametrize("d,L,count", [(1, 3, 8), (1, 8, 256), (2, 3, 64)])
def test_enumeration_counts(d, L, count):
    words = enumerate_shift_words(d, L)
    assert len(words) == count
    assert len({w.tobytes() for w in words}) == count


def test_enumeration_cap():
    with pytest.raises(ConfigurationError, match="sample"):
        enumerate_shift_words(2, 9)


@settings(max_examples=25, deadline=None)
@given(L=st.integers(1, 6), word=st.integers(0, 63), level=st.integers(0, 6))
def test_levels_partition_and_nest(L, word, level):
    sigma = [(word >> i) & 1 for i in range(L)]
    g = DyadicGrid(1, L, sigma)
    level = min(level, L)
    cells = g.cells(level)
    assert cells.shape == (1 << level, 1 << (L - level))
    assert sorted(cells.ravel().tolist()) == list(range(g.n_cells))
    if level < L:
        kids = g.cells(level + 1)[g.children(level)]
        for K in range(1 << level):
            assert set(kids[K].ravel()) == set(cells[K])


def test_cells_follow_shift_formula():
    g = DyadicGrid(1, 5, [1, 0, 1, 1, 0])
    for lev in range(6):
        for j in range(1 << lev):
            left, side = _interval(g, lev, j)
            assert sorted(g.cells(lev)[j].tolist()) == sorted((left + np.arange(side)) % g.side)


def test_haar_function_examples():
    g = DyadicGrid(1, 2)
    h = haar_function(HaarIndex(g.cube(0, (0,)), (1,))).values
    assert np.array_equal(h, [1, 1, -1, -1])
    h0 = haar_function(HaarIndex(g.cube(1, (0,)), (0,))).values
    assert np.allclose(h0, [np.sqrt(2), np.sqrt(2), 0, 0])
    g2 = DyadicGrid(2, 1)
    h = haar_function(HaarIndex(g2.cube(0, (0, 0)), (1, 0))).values.reshape(2, 2)
    assert np.array_equal(h, [[1, 1], [-1, -1]])
    with pytest.raises(ResolutionError):
        haar_function(HaarIndex(g.cube(2, (0,)), (1,)))


@pytest.mark.parametrize("d,L", [(1, 5), (2, 3)])
def test_gram_matrix_is_identity(d, L):
    B = haar_basis_matrix(DyadicGrid(d, L, np.ones((L, d), dtype=int)))
    G = B.T @ B / B.shape[0]
    assert np.max(np.abs(G - np.eye(G.shape[0]))) < 1e-12


def test_transform_examples():
    g = DyadicGrid(1, 4)
    c = haar_transform(GridFunction(g, np.full(16, 3.5)))
    assert c.mean == 3.5 and c.energy() == 0.0
    idx = HaarIndex(g.cube(2, (1,)), (1,))
    c = haar_transform(haar_function(idx))
    assert abs(c[idx] - 1) < 1e-14 and abs(c.energy() - 1) < 1e-14
    assert np.allclose(inverse_haar_transform(0.0, {idx: 1.0}, g).values, haar_function(idx).values)
    with pytest.raises(GridIndexError):
        inverse_haar_transform(0.0, {HaarIndex(DyadicGrid(1, 4, [1, 0, 0, 0]).cube(1, (0,)), (1,)): 1.0}, g)


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 2), L=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_roundtrip_and_parseval(d, L, seed):
    rng = np.random.default_rng(seed)
    g = DyadicGrid(d, L, rng.integers(0, 2, (L, d)))
    f = GridFunction(g, rng.standard_normal(g.n_cells))
    c = haar_transform(f)
    assert np.max(np.abs(inverse_haar_transform(c.mean, c).values - f.values)) < 1e-12
    assert abs(f.norm() ** 2 - c.mean**2 - c.energy()) < 1e-11


def test_martingale_examples():
    g = DyadicGrid(1, 4, [0, 1, 1, 0])
    I = g.cube(1, (1,))
    const = GridFunction(g, np.full(16, 2.0))
    assert np.allclose(martingale_difference(const, I).values, 0)
    f = GridFunction(g, np.random.default_rng(1).standard_normal(16))
    assert np.array_equal(expectation_block(f, I, 0).values, expectation(f, I).values)
    ops = martingale_ops(f, I, 2)
    assert set(ops) == {"E", "E_k", "Delta", "Delta_k", "P_k"}
    # Delta_I f = sum_eta <f, h_I^eta> h_I^eta
    h = haar_function(HaarIndex(I, (1,)))
    assert np.allclose(ops["Delta"].values, f.inner(h) * h.values)


def test_collapse_identity():
    rng = np.random.default_rng(3)
    g = DyadicGrid(2, 3, rng.integers(0, 2, (3, 2)))
    f = GridFunction(g, rng.standard_normal(g.n_cells))
    for lev in range(g.L + 1):
        lhs = np.full(g.n_cells, f.mean())
        for m in range(lev):
            for I in g.cubes(m):
                lhs += martingale_difference(f, I).values
        rhs = sum(expectation(f, I).values for I in g.cubes(lev))
        assert np.max(np.abs(lhs - rhs)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(L=st.integers(2, 6), k=st.integers(0, 7), seed=st.integers(0, 2**31))
def test_p_block_multiplicity(L, k, seed):
    """sum_K ||P_{K,k} f||^2 = sum_I m(I, k) |<f, h_I>|^2 with m counting existing parents."""
    rng = np.random.default_rng(seed)
    g = DyadicGrid(1, L, rng.integers(0, 2, L))
    f = GridFunction(g, rng.standard_normal(g.n_cells))
    brute = sum(p_block(f, K, k).norm() ** 2 for lev in range(L + 1) for K in g.cubes(lev))
    c = haar_transform(f)
    count = sum((min(k, lev) + 1) * float(np.sum(a**2)) for lev, a in enumerate(c.levels))
    assert abs(brute - count) < 1e-12 * max(1.0, count)
    assert abs(p_block_energy(f, g, k) - count) < 1e-12 * max(1.0, count)


def test_square_function_and_maximal():
    rng = np.random.default_rng(4)
    g = DyadicGrid(1, 6, rng.integers(0, 2, 6))
    f = GridFunction(g, rng.standard_normal(64))
    assert abs(square_function(f).norm() ** 2 - (f.norm() ** 2 - f.mean() ** 2)) < 1e-12
    spike = np.zeros(8)
    spike[5] = 1.0
    g3 = DyadicGrid(1, 3)
    assert dyadic_maximal(GridFunction(g3, spike)).values[5] == 1.0
    # L^4 square function comparison stays within a calibration constant
    ratios = []
    for s in range(20):
        v = np.random.default_rng(s).standard_normal(256)
        v -= v.mean()
        f = GridFunction(DyadicGrid(1, 8), v)
        ratios.append(square_function(f).norm(4) / f.norm(4))
    assert 1 / 3 < min(ratios) and max(ratios) < 3


def test_goodness_positions_d1():
    g = DyadicGrid(1, 4)
    # the four grandchildren of a cube, two middle ones are 2-good
    assert goodness_mask(g, 2, 2).tolist() == [False, True, True, False]
    assert is_k_good(g.cube(3, (2,)), 2) is True
    with pytest.raises(GridIndexError):
        goodness_mask(g, 1, 2)


def test_goodness_d2_fraction():
    g = DyadicGrid(2, 2)
    assert goodness_mask(g, 2, 2).sum() == 4


def test_goodness_against_distance_oracle():
    """Goodness equals d(I, boundary of I^(k)) >= 2^{k-2} l(I), measured on the torus within the parent."""
    L, k = 6, 3
    for word in range(0, 64, 7):
        g = DyadicGrid(1, L, [(word >> i) & 1 for i in range(L)])
        for lev in range(k, L + 1):
            mask = goodness_mask(g, lev, k)
            for j in range(1 << lev):
                a, side = _interval(g, lev, j)
                pa, pside = _interval(g, lev - k, int(g.parents(lev, k)[j]))
                off = (a - pa) % g.side
                dist = min(off, pside - (off + side))
                assert mask[j] == (dist >= (1 << (k - 2)) * side)


def test_serialization_roundtrip(tmp_path):
    g = DyadicGrid(2, 3, np.array([[1, 0], [0, 1], [1, 1]]))
    f = GridFunction(g, np.random.default_rng(5).standard_normal(64))
    back = GridFunction.from_bytes(f.to_bytes())
    assert back.grid == g and np.array_equal(back.values, f.values)
    assert np.array_equal(GridFunction.from_csv(g, f.to_csv()).values, f.values)
    with pytest.raises(ConfigurationError):
        GridFunction.from_bytes(b"nope" + f.to_bytes()[4:])
