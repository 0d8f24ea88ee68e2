import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_rep.grid import DyadicGrid, GridFunction, HaarIndex, ResolutionError, haar_function, haar_transform, p_block
from dyadic_rep.model_ops import (
    HFormSpec,
    HFunction,
    H_KINDS,
    ModifiedShiftSpec,
    ParaproductSpec,
    SpecValidationError,
    StandardShiftSpec,
    adversarial_modified_shift,
    adversarial_standard_shift,
    apply,
    decompose_modified_shift,
    form_tensor,
    norm_growth_experiment,
    operator_matrix,
    operator_norm,
    pairing,
    random_modified_shift,
    random_standard_shift,
    ratio_spread,
)


def _rand(g, seed, count):
    rng = np.random.default_rng(seed)
    return [GridFunction(g, rng.standard_normal(g.n_cells)) for _ in range(count)]


def _h(cube, eta=(1,)):
    return haar_function(HaarIndex(cube, eta))


def test_unit_haar_multiplier():
    g = DyadicGrid(1, 5, [1, 0, 1, 1, 0])
    coef = {lev: np.ones((g.n_cubes(lev), 1, 1, 1, 1)) for lev in range(g.L)}
    S = StandardShiftSpec(g, 1, (0, 0), ("h", "h"), coef)
    (f,) = _rand(g, 0, 1)
    assert np.max(np.abs(apply(S, f).values - (f.values - f.mean()))) < 1e-13


def test_single_coefficient_shift():
    g = DyadicGrid(1, 5, [0, 1, 1, 0, 1])
    lev, K, o1, o2, a = 1, 1, 1, 3, 0.4
    coef = {lev: np.zeros((2, 2, 4, 1, 1))}
    coef[lev][K, o1, o2] = a * 2.0 ** (-(2 * lev + 3) / 2 + lev)
    S = StandardShiftSpec(g, 1, (1, 2), ("h", "h"), coef)
    f, h = _rand(g, 1, 2)
    I1 = g.cube_from_index(lev + 1, g.descendants(lev, 1)[K, o1])
    I2 = g.cube_from_index(lev + 2, g.descendants(lev, 2)[K, o2])
    expect = coef[lev][K, o1, o2, 0, 0] * f.inner(_h(I1)) * h.inner(_h(I2))
    assert abs(pairing(S, f, h) - expect) < 1e-15
    zero = StandardShiftSpec(g, 1, (1, 2), ("h", "h"), {lev: np.zeros((2, 2, 4, 1, 1))})
    assert np.all(apply(zero, f).values == 0)


def test_validator_soundness():
    g = DyadicGrid(1, 4)
    arr = np.zeros((2, 2, 2, 1, 1))
    arr[0, 0, 0] = 2.0 ** (-(2 + 2) / 2 + 1) * (1 + 1e-6)
    with pytest.raises(SpecValidationError):
        StandardShiftSpec(g, 1, (1, 1), ("h", "h"), {1: arr})
    Q = random_modified_shift(g, 1, 1, 0)
    bad = {lev: a * (1 + 1e-6) / Q.check_normalization() for lev, a in Q.coef.items()}
    with pytest.raises(SpecValidationError):
        ModifiedShiftSpec(g, 1, 1, bad)
    with pytest.raises(SpecValidationError):
        StandardShiftSpec(g, 1, (0, 0), ("h", "h0"), {})
    with pytest.raises(ResolutionError):
        ModifiedShiftSpec(g, 1, 4, {})


def test_modified_shift_constants_vanish():
    g = DyadicGrid(1, 5, [1, 1, 0, 0, 1])
    for n in (1, 2):
        Q = random_modified_shift(g, n, 2, 3)
        ones = [GridFunction(g, np.full(32, 1.7))] * n
        (h,) = _rand(g, 2, 1)
        assert abs(pairing(Q, *ones, h)) < 1e-13


def test_modified_shift_one_term():
    g = DyadicGrid(1, 4, [1, 0, 0, 1])
    lev, K, oI, oJ = 1, 0, 0, 1
    arr = np.zeros((2, 2, 2, 1))
    arr[K, oI, oJ, 0] = 0.7 * 2.0 ** (-(lev + 1) + lev)
    Q = ModifiedShiftSpec(g, 1, 1, {lev: arr})
    f, h = _rand(g, 5, 2)
    kids = g.descendants(lev, 1)[K]
    I, J = (g.cube_from_index(lev + 1, kids[o]) for o in (oI, oJ))
    h0 = lambda c: haar_function(HaarIndex(c, (0,)))
    expect = arr[K, oI, oJ, 0] * (f.inner(h0(I)) - f.inner(h0(J))) * h.inner(_h(J))
    assert abs(pairing(Q, f, h) - expect) < 1e-15


def test_h_functions_and_key_property():
    g = DyadicGrid(1, 6, [0, 1, 1, 0, 1, 0])
    (f,) = _rand(g, 7, 1)
    k = 2
    for lev in range(0, g.L - k):
        for K in range(g.n_cubes(lev)):
            kids = g.descendants(lev, k)[K]
            for a in kids:
                for b in kids:
                    I, J = g.cube_from_index(lev + k, a), g.cube_from_index(lev + k, b)
                    Kc = g.cube_from_index(lev, K)
                    for kind in H_KINDS:
                        H = HFunction(I, J, kind)
                        assert all(H.check_axioms().values())
                        Hv = H.values()
                        assert abs(f.inner(Hv) - p_block(f, Kc, k).inner(Hv)) < 1e-12


def test_h_form_single_term():
    g = DyadicGrid(1, 5, [1, 0, 1, 0, 0])
    lev, K, oI, oJ, k = 1, 1, 2, 1, 2
    arr = np.zeros((2, 4, 4))
    arr[K, oI, oJ] = 0.25
    f, h = _rand(g, 8, 2)
    desc = g.descendants(lev, k)[K]
    I, J = (g.cube_from_index(lev + k, desc[o]) for o in (oI, oJ))
    for kind in H_KINDS:
        spec = HFormSpec(g, k, {lev: arr}, form=2, kind=kind)
        expect = 0.25 * f.inner(HFunction(I, J, kind).values()) * h.inner(_h(J))
        assert abs(pairing(spec, f, h) - expect) < 1e-15


def test_paraproduct_examples():
    g = DyadicGrid(1, 6, [1, 0, 0, 1, 1, 0])
    rng = np.random.default_rng(9)
    b = GridFunction(g, rng.standard_normal(64))
    c = haar_transform(b)
    spec = ParaproductSpec(g, 1, dict(enumerate(c.levels)), validate=False)
    one = GridFunction(g, np.ones(64))
    assert np.max(np.abs(apply(spec, one).values - (b.values - b.mean()))) < 1e-13
    f = GridFunction(g, rng.standard_normal(64))
    assert abs(pairing(spec, f, one)) < 1e-13
    big = {lev: 10 * a for lev, a in enumerate(c.levels)}
    with pytest.raises(SpecValidationError):
        ParaproductSpec(g, 1, big)


@pytest.mark.parametrize("n,k,count", [(1, 1, 2), (1, 3, 6), (2, 3, 12), (2, 1, 4)])
def test_decomposition_counts_and_normalization(n, k, count):
    g = DyadicGrid(1, 5, [0, 1, 0, 1, 1])
    Q = random_modified_shift(g, n, k, 11)
    dec = decompose_modified_shift(Q)
    assert len(dec.shifts) == count == 2 * n * k
    assert len(dec.a_shifts) == len(dec.u_shifts) == n * k
    assert all(s.check_normalization() <= 1 + 1e-12 for s in dec.shifts)
    assert dec.C == pytest.approx(1.0 if n == 1 else 2.0)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 2), k=st.integers(1, 3), seed=st.integers(0, 2**31), slot=st.integers(0, 2))
def test_decomposition_exact(n, k, seed, slot):
    rng = np.random.default_rng(seed)
    g = DyadicGrid(1, 5, rng.integers(0, 2, 5))
    Q = random_modified_shift(g, n, k, seed, slot=min(slot, n))
    dec = decompose_modified_shift(Q)
    assert np.max(np.abs(form_tensor(Q) - form_tensor(dec.to_form()))) < 1e-12


def test_operator_norm_examples():
    assert operator_norm(np.eye(4)).value == pytest.approx(1.0, abs=1e-12)
    assert operator_norm(np.eye(4), p=3).value == pytest.approx(1.0, abs=1e-9)
    assert operator_norm(np.diag([2.0, 1.0])).value == pytest.approx(2.0, abs=1e-12)
    assert operator_norm(np.array([[1.0, 1.0], [0.0, 1.0]])).value == pytest.approx((1 + 5**0.5) / 2, abs=1e-12)


def test_adversarial_modified_norm_closed_form():
    """Norm of the adversarial Q_k is sqrt(min(k, L - k)) (1 at k = 0)."""
    L = 8
    g = DyadicGrid(1, L)
    for k in range(0, L):
        val = operator_norm(adversarial_modified_shift(g, k, 100 + k)).value
        assert val == pytest.approx(np.sqrt(max(1, min(k, L - k))), rel=1e-9)


def test_shift_norm_complexity_free():
    g = DyadicGrid(1, 10)
    norms = [operator_norm(adversarial_standard_shift(g, i, i, 3 + i)).value for i in range(6)]
    assert max(norms) <= 1.0 + 1e-9
    assert min(norms) > 0.3


def test_growth_table():
    rows = norm_growth_experiment("Qk", range(0, 5), L=9)
    assert rows[0]["ratio"] == rows[0]["norm"]
    assert ratio_spread(rows) <= 3
    assert [r["k"] for r in rows] == list(range(5))


def test_standard_shift_random_generator_within_bound():
    g = DyadicGrid(2, 3)
    S = random_standard_shift(g, 2, (0, 1, 1), ("h0", "h", "h"), 4)
    assert S.check_normalization() <= 1
    assert operator_matrix(random_standard_shift(g, 1, (1, 0), ("h", "h"), 5)).shape == (64, 64)
