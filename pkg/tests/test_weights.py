import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_rep.grid import ConfigurationError, DyadicGrid, GridFunction, ProductGrid, haar_function, HaarIndex
from dyadic_rep.weights import (
    DomainError,
    ap_constant,
    bmo_seq_norm,
    h1_bmo_pairing_ratio,
    little_bmo_norm,
    product_bmo_norm,
    slice_ap_constants,
    slice_bmo_norms,
    weighted_bmo_norm,
)


def _brute_ap(v, grid, p):
    """Direct loop over every cube of the grid."""
    pp = p / (p - 1)
    best = 0.0
    for lev in range(grid.L + 1):
        for cells in grid.cells(lev):
            best = max(best, v[cells].mean() * (v[cells] ** (1 - pp)).mean() ** (p - 1))
    return best


def test_ap_examples():
    g = DyadicGrid(1, 1)
    assert ap_constant(GridFunction(g, [2.0, 1.0]), 2.0) == pytest.approx(9 / 8, abs=1e-15)
    g = DyadicGrid(2, 3, np.ones((3, 2), dtype=int))
    assert ap_constant(GridFunction(g, np.ones(64)), 3.0) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DomainError):
        ap_constant(GridFunction(g, np.zeros(64)), 2.0)
    with pytest.raises(ConfigurationError):
        ap_constant(GridFunction(g, np.ones(64)), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(1.2, 5.0), c=st.floats(0.01, 100))
def test_ap_brute_force_and_scaling(seed, p, c):
    rng = np.random.default_rng(seed)
    g = DyadicGrid(1, 5, rng.integers(0, 2, 5))
    v = np.exp(rng.standard_normal(32))
    a = ap_constant(GridFunction(g, v), p)
    assert abs(a - _brute_ap(v, g, p)) <= 1e-12 * a
    assert abs(ap_constant(GridFunction(g, c * v), p) - a) <= 1e-12 * a


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(1.1, 6.0), d=st.integers(1, 2))
def test_ap_duality(seed, p, d):
    rng = np.random.default_rng(seed)
    L = 6 // d
    g = DyadicGrid(d, L, rng.integers(0, 2, (L, d)))
    w = np.exp(rng.standard_normal(g.n_cells))
    pp = p / (p - 1)
    a = ap_constant(GridFunction(g, w), p)
    b = ap_constant(GridFunction(g, w ** (1 - pp)), pp)
    assert abs(b - a ** (pp - 1)) <= 1e-12 * b


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(1.2, 4.0))
def test_slice_bound(seed, p):
    rng = np.random.default_rng(seed)
    P = ProductGrid(DyadicGrid(1, 4, rng.integers(0, 2, 4)), DyadicGrid(1, 3, rng.integers(0, 2, 3)))
    v = np.exp(rng.standard_normal(P.shape))
    a = ap_constant(v, p, mode="rectangles", grid=P)
    s1, s2 = slice_ap_constants(v, p, P)
    assert max(s1, s2) <= a * (1 + 1e-12)


def test_bmo_seq_examples():
    g = DyadicGrid(1, 4)
    I = g.cube(2, (1,))
    assert bmo_seq_norm({I: 3.0}, g) == pytest.approx(3.0 / np.sqrt(0.25), abs=1e-14)
    assert bmo_seq_norm({}, g) == 0.0
    b = haar_function(HaarIndex(I, (1,)))
    # a_I = <b, h_I> for b = h_J: a single unit coefficient at J
    assert weighted_bmo_norm(b) == pytest.approx(1.0 / np.sqrt(I.measure), abs=1e-12)


def test_weighted_bmo_reduces_to_unweighted():
    rng = np.random.default_rng(2)
    g = DyadicGrid(1, 6, rng.integers(0, 2, 6))
    b = GridFunction(g, rng.standard_normal(64))
    one = GridFunction(g, np.ones(64))
    assert weighted_bmo_norm(b, one) == pytest.approx(weighted_bmo_norm(b), rel=1e-13)
    assert weighted_bmo_norm(b, one, "bmo") == pytest.approx(weighted_bmo_norm(b, None, "bmo"), rel=1e-13)


def test_constant_symbol_vanishes():
    g = DyadicGrid(1, 5)
    b = GridFunction(g, np.full(32, 4.0))
    nu = GridFunction(g, np.linspace(0.5, 2.0, 32))
    assert weighted_bmo_norm(b, nu) == 0.0
    assert weighted_bmo_norm(b, nu, "bmo") == pytest.approx(0.0, abs=1e-14)
    P = ProductGrid(DyadicGrid(1, 3), DyadicGrid(1, 3))
    assert product_bmo_norm(np.full(P.shape, 2.0), P).value == pytest.approx(0.0, abs=1e-14)


def test_little_bmo_of_one_variable_symbol():
    rng = np.random.default_rng(3)
    g1, g2 = DyadicGrid(1, 4, rng.integers(0, 2, 4)), DyadicGrid(1, 3, rng.integers(0, 2, 3))
    beta = rng.standard_normal(16)
    X = np.repeat(beta[:, None], 8, axis=1)
    P = ProductGrid(g1, g2)
    assert little_bmo_norm(X, P) == pytest.approx(little_bmo_norm(beta, g1), rel=1e-13)
    s1, s2 = slice_bmo_norms(X, P)
    assert s1 == pytest.approx(0.0, abs=1e-14)
    assert s2 == pytest.approx(little_bmo_norm(beta, g1), rel=1e-13)


def test_product_bmo_rectangles_lower_bound():
    rng = np.random.default_rng(4)
    P = ProductGrid(DyadicGrid(1, 3), DyadicGrid(1, 3))
    res = product_bmo_norm(rng.standard_normal(P.shape), P, n_unions=16, seed=1)
    assert res.value >= res.rectangles_only > 0 and res.n_open_sets == 16
    with pytest.raises(ConfigurationError):
        weighted_bmo_norm(rng.standard_normal(P.shape), None, "BMO", P)


def test_pairing_ratio_examples():
    g = DyadicGrid(1, 3)
    a = [np.zeros(1), np.zeros(2), np.array([0.0, 2.0, 0.0, 0.0])]
    b = [np.zeros(1), np.zeros(2), np.array([0.0, -3.0, 0.0, 0.0])]
    assert h1_bmo_pairing_ratio(a, b, g).value == pytest.approx(1.0, abs=1e-14)
    zero = [np.zeros(1), np.zeros(2), np.zeros(4)]
    assert h1_bmo_pairing_ratio(zero, b, g).value == 0.0


def test_pairing_ratio_sweep_bounded():
    g = DyadicGrid(1, 8)
    worst = 0.0
    for s in range(20):
        rng = np.random.default_rng(s)
        a = [rng.standard_normal(1 << lev) * 2.0 ** (-lev / 2) for lev in range(8)]
        b = [rng.standard_normal(1 << lev) * 2.0 ** (-lev / 2) for lev in range(8)]
        worst = max(worst, h1_bmo_pairing_ratio(a, b, g).value)
    assert 0 < worst < 3
