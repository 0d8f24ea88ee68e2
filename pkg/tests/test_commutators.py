import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_rep.commutators import (
    CommutatorSpec,
    a3_commutator_difference,
    a3_remainder,
    apply_commutator,
    bloom_growth_experiment,
    bloom_weight,
    commutator_expansion,
    commutator_norm,
    coherent_standard_shift,
    paraproduct_split,
    telescoping_residual,
)
from dyadic_rep.grid import ConfigurationError, DyadicGrid, GridFunction
from dyadic_rep.model_ops import operator_matrix, random_standard_shift
from dyadic_rep.representation import DiscreteOperator, kernel_family
from dyadic_rep.weights import DomainError


def _grid(seed, d=1, L=6):
    return DyadicGrid(d, L, np.random.default_rng(seed).integers(0, 2, (L, d)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 2))
def test_split_reassembles_product(seed, d):
    g = _grid(seed, d, 6 // d)
    rng = np.random.default_rng(seed)
    b, f = rng.standard_normal((2, g.n_cells))
    s = paraproduct_split(b, f, g)
    assert np.max(np.abs(s.total() - b * f)) < 1e-12
    # only A1 and the mean term carry mass; A1 integrates to the covariance
    assert abs(s.A2.mean()) < 1e-13 and abs(s.A3.mean()) < 1e-13
    assert s.A1.mean() == pytest.approx(np.mean(b * f) - b.mean() * f.mean(), abs=1e-13)


def test_split_degenerate_inputs():
    g = _grid(1)
    rng = np.random.default_rng(2)
    b = rng.standard_normal(64)
    s = paraproduct_split(b, np.full(64, 3.0), g)
    assert np.max(np.abs(s.A1)) < 1e-14 and np.max(np.abs(s.A3)) < 1e-14
    assert np.max(np.abs(s.A2 - 3.0 * (b - b.mean()))) < 1e-13
    s = paraproduct_split(np.full(64, 2.0), b, g)
    assert np.max(np.abs(s.A3 - 2.0 * (b - b.mean()))) < 1e-13
    with pytest.raises(ConfigurationError):
        paraproduct_split(b, b)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), i=st.integers(0, 2), j=st.integers(0, 2))
def test_a3_remainder_matches_difference(seed, i, j):
    g = _grid(seed)
    S = random_standard_shift(g, 1, (i, j), ("h", "h"), seed)
    rng = np.random.default_rng(seed + 1)
    b, f = rng.standard_normal((2, 64))
    R = a3_remainder(b, S)
    assert np.max(np.abs(R.apply(f) - a3_commutator_difference(b, S, GridFunction(g, f)))) < 1e-12


def test_a3_remainder_constant_symbol():
    g = _grid(3)
    S = random_standard_shift(g, 1, (1, 2), ("h", "h"), 4)
    assert np.max(np.abs(a3_remainder(np.full(64, -1.5), S).tensor)) == 0.0
    with pytest.raises(ConfigurationError):
        a3_remainder(np.ones(64), random_standard_shift(g, 2, (1, 0, 0), ("h0", "h", "h"), 5))


@pytest.mark.parametrize("level,depth", [(0, 1), (0, 4), (2, 3), (1, 0)])
def test_telescoping(level, depth):
    for d, L in ((1, 6), (2, 4)):
        if level + depth > L:
            continue
        g = _grid(level + depth, d, L)
        b = np.random.default_rng(6).standard_normal(g.n_cells)
        assert telescoping_residual(b, g, level, depth) < 1e-12


def _bilinear(L=4):
    return DiscreteOperator.from_kernel(kernel_family("bilinear", 2, 1, L))


@pytest.mark.parametrize("slots", [(1, 2), (2, 2), (1, 1, 2), (2, 1, 1)])
def test_expansion_equals_nesting(slots):
    T = _bilinear()
    rng = np.random.default_rng(len(slots))
    symbols = rng.standard_normal((len(slots), T.N))
    spec = CommutatorSpec(symbols, T, slots)
    f = rng.standard_normal((2, T.N))
    nested = apply_commutator(spec, *f)
    assert np.max(np.abs(nested - commutator_expansion(spec, *f))) < 1e-12
    h = rng.standard_normal(T.N)
    assert apply_commutator(spec, *f, h) == pytest.approx(np.mean(nested * h), abs=1e-14)


def test_linear_commutator_matrix_oracle():
    g = _grid(7, 1, 5)
    S = random_standard_shift(g, 1, (1, 1), ("h", "h"), 8)
    M = operator_matrix(S)
    rng = np.random.default_rng(9)
    b, f = rng.standard_normal((2, 32))
    spec = CommutatorSpec([b], S, [1])
    out = apply_commutator(spec, GridFunction(g, f))
    assert np.max(np.abs(out - (b * (M @ f) - M @ (b * f)))) < 1e-12
    assert commutator_norm(b, S) == pytest.approx(np.linalg.norm(b[:, None] * M - M * b[None, :], 2), rel=1e-12)


def test_commutator_is_linear_in_the_symbol():
    T = _bilinear()
    rng = np.random.default_rng(10)
    b1, b2, f1, f2 = rng.standard_normal((4, T.N))
    one = lambda b: apply_commutator(CommutatorSpec([b], T, [2]), f1, f2)
    assert np.max(np.abs(one(2 * b1 - b2) - 2 * one(b1) + one(b2))) < 1e-12
    assert np.max(np.abs(one(np.full(T.N, 4.0)))) < 1e-12


def test_spec_validation():
    T = _bilinear()
    with pytest.raises(ConfigurationError):
        CommutatorSpec([np.ones(T.N)], T, [3])
    with pytest.raises(ConfigurationError):
        CommutatorSpec([np.ones(T.N), np.ones(8)], T, [1, 2])
    with pytest.raises(ConfigurationError):
        apply_commutator(CommutatorSpec([np.ones(T.N)], T, [1]), np.ones(T.N))


def test_bloom_weight_domain():
    assert np.allclose(bloom_weight([4.0], [1.0]), 2.0)
    for mu, lam in (([0.0], [1.0]), ([1.0], [-1.0]), ([np.inf], [1.0])):
        with pytest.raises(DomainError):
            bloom_weight(mu, lam)


def test_coherent_shift_baseline():
    g = DyadicGrid(1, 6)
    S = coherent_standard_shift(g, 0, 0)
    f = np.random.default_rng(11).standard_normal(64)
    assert np.max(np.abs(operator_matrix(S) @ f - (f - f.mean()))) < 1e-13
    assert coherent_standard_shift(g, 2, 2).check_normalization() <= 1 + 1e-12


def test_bloom_rows():
    res = bloom_growth_experiment(range(0, 4), L=7)
    assert [r["i"] for r in res["rows"]] == [0, 1, 2, 3]
    assert all(np.isfinite(res[k]) and res[k] >= 1 for k in ("nu_a2", "mu_a2", "lam_a2"))
    ratios = [r["ratio"] for r in res["rows"]]
    assert max(ratios) / min(ratios) <= 3
    flat = bloom_growth_experiment(range(0, 3), L=6, symbol=np.full(64, 1.25))
    assert all(r["norm"] < 1e-12 for r in flat["rows"])
    with pytest.raises(ConfigurationError):
        bloom_growth_experiment(range(0, 2), L=5, p=3.0)
