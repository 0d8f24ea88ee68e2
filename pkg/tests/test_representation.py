import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_rep.forms import FunctionTables
from dyadic_rep.grid import ConfigurationError, DyadicGrid, haar_basis_matrix
from dyadic_rep.moduli import Modulus, dini_dyadic_sum, representation_weight_sum
from dyadic_rep.representation import (
    DiscreteOperator,
    KernelSpec,
    assemble_representation,
    czo_pairing,
    decay_audit,
    direct_band_sums,
    kernel_family,
    kernel_regularity_audit,
    t1_constants,
    verify_representation,
)


def _transform_matrix(g, seed):
    """Martingale transform sum eps_I Delta_I in the grid g, as a cell matrix."""
    B = haar_basis_matrix(g)
    eps = np.random.default_rng(seed).choice([-1.0, 1.0], size=B.shape[1])
    eps[0] = 0.0
    return (B * eps) @ B.T / g.n_cells, B, eps


def test_pairing_examples():
    L = 6
    N = 1 << L
    ones = KernelSpec(1, 1, L, np.ones((N, N)))
    T = DiscreteOperator.from_kernel(ones)
    rng = np.random.default_rng(0)
    f, g = rng.uniform(-1, 1, N), rng.uniform(-1, 1, N)
    g -= g.mean()
    assert abs(czo_pairing(T, f, g)) <= np.max(np.abs(f)) * np.max(np.abs(g)) / N
    assert czo_pairing(DiscreteOperator.from_kernel(KernelSpec(1, 1, L, np.zeros((N, N)))), f, g) == 0.0
    with pytest.raises(ConfigurationError):
        czo_pairing(T, f)


def test_martingale_transform_pairing_and_t1():
    g = DyadicGrid(1, 4)
    M, B, eps = _transform_matrix(g, 1)
    T = DiscreteOperator.from_matrix(M, 1, 4)
    rng = np.random.default_rng(2)
    f, h = rng.standard_normal(16), rng.standard_normal(16)
    haar_form = float(np.sum(eps * (B.T @ f / 16) * (B.T @ h / 16)))
    assert czo_pairing(T, f, h) == pytest.approx(haar_form, abs=1e-14)
    c = t1_constants(T)
    assert max(c.bmo) < 1e-12 and np.isfinite(c.wbp)


def test_t1_constants_scale():
    T = DiscreteOperator.from_kernel(kernel_family("hilbert", 1, 1, 4))
    cT = DiscreteOperator(1, 1, 4, -3.0 * T.tensor)
    a, b = t1_constants(T), t1_constants(cT)
    assert np.allclose(np.array(b.bmo), 3 * np.array(a.bmo), rtol=1e-12)
    assert b.wbp == pytest.approx(3 * a.wbp, rel=1e-12)
    ones = DiscreteOperator.from_kernel(KernelSpec(1, 1, 4, np.ones((16, 16))))
    # T1 is constant up to the excluded diagonal, so its BMO coefficients are tiny
    assert max(t1_constants(ones, mode="sample", count=4).bmo) < 1.0 / 16 + 1e-12


def test_regularity_audit():
    K = kernel_family("hilbert", 1, 1, 5)
    rep = kernel_regularity_audit(K)
    assert np.isfinite(rep.size) and all(np.isfinite(rep.holder)) and not rep.sampled
    zero = kernel_regularity_audit(KernelSpec(1, 1, 5, np.zeros((32, 32))))
    assert zero.size == 0 and zero.holder == [0.0, 0.0]
    spike = K.values.copy()
    spike[3, 4] = 1e6
    assert kernel_regularity_audit(KernelSpec(1, 1, 5, spike)).size > 1e3 * rep.size
    assert kernel_regularity_audit(kernel_family("bilinear", 2, 1, 3)).size > 0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), family=st.sampled_from(["hilbert", "alternating", "random"]))
def test_per_grid_identity_any_word(seed, family):
    rng = np.random.default_rng(seed)
    L = 5
    T = DiscreteOperator.from_kernel(kernel_family(family, 1, 1, L, seed=seed))
    b = assemble_representation(T, rng.integers(0, 2, L))
    funcs = [rng.standard_normal(T.N) for _ in range(2)]
    assert abs(sum(direct_band_sums(b, funcs).values()) - czo_pairing(T, *funcs)) < 1e-12


def test_per_grid_identity_bilinear_d2():
    T = DiscreteOperator.from_kernel(kernel_family("random", 1, 2, 2, seed=3))
    rng = np.random.default_rng(4)
    b = assemble_representation(T, rng.integers(0, 2, (2, 2)))
    funcs = [rng.standard_normal(T.N) for _ in range(2)]
    assert abs(sum(direct_band_sums(b, funcs).values()) - czo_pairing(T, *funcs)) < 1e-12


def test_zero_operator():
    T = DiscreteOperator(1, 1, 4, np.zeros((16, 16)))
    r = verify_representation(T)
    assert r.per_grid_residual == 0 and r.expectation_residual == 0


@pytest.mark.parametrize("n,family,L", [(1, "hilbert", 5), (2, "bilinear", 4)])
def test_gated_bands_match_in_expectation(n, family, L):
    T = DiscreteOperator.from_kernel(kernel_family(family, n, 1, L))
    r = verify_representation(T, k_max=L - 2)
    assert r.expectation_residual < 1e-12 and r.per_grid_residual < 1e-12
    assert r.band_residuals and max(r.band_residuals.values()) < 1e-13
    assert r.grids == 1 << L


def test_haar_multiplier_lives_on_the_diagonal():
    sigma = [1, 0, 1, 1, 0]
    g = DyadicGrid(1, 5, sigma)
    M, _, _ = _transform_matrix(g, 5)
    T = DiscreteOperator.from_matrix(M, 1, 5)
    b = assemble_representation(T, sigma)
    rng = np.random.default_rng(6)
    funcs = [rng.standard_normal(32) for _ in range(2)]
    sums = direct_band_sums(b, funcs)
    off = {k: v for k, v in sums.items() if k not in (("remainder", 0),)}
    assert max(abs(v) for v in off.values()) < 1e-13
    assert sums[("remainder", 0)] == pytest.approx(czo_pairing(T, *funcs), abs=1e-13)


def test_gated_assembly_is_exact_form():
    """Evaluating the model operators of every grid and averaging reproduces the pairing."""
    T = DiscreteOperator.from_kernel(kernel_family("alternating", 1, 1, 4))
    rng = np.random.default_rng(7)
    funcs = [rng.standard_normal(16) for _ in range(2)]
    total = 0.0
    for w in range(16):
        b = assemble_representation(T, [(w >> i) & 1 for i in range(4)])
        tabs = [FunctionTables((b.grid,), f) for f in funcs]
        total += sum(p.form().evaluate(tabs) for p in b.pieces)
    assert total / 16 == pytest.approx(czo_pairing(T, *funcs), abs=1e-13)


def test_decay_audit_small():
    T = DiscreteOperator.from_kernel(kernel_family("alternating", 1, 1, 6))
    a = decay_audit(T)
    assert set(a["ratios"]) == {2, 3, 4}
    assert a["C"] == max(a["ratios"].values())
    assert a["spread"] <= 2


def test_weight_series_matches_dini_half():
    for text in ["power:1", "power:0.5", "logdamped:3"]:
        w = Modulus.parse(text)
        series = representation_weight_sum(w, 1)
        dyadic = dini_dyadic_sum(w, 0.5)
        # sqrt(k) <= sqrt(k + 1) <= sqrt(2) sqrt(k) for k >= 1
        assert dyadic <= series <= np.sqrt(2) * dyadic


def test_tail_report():
    T = DiscreteOperator.from_kernel(kernel_family("hilbert", 1, 1, 5))
    r = verify_representation(T, k_max=3, mode="sample", count=4, seed=1)
    assert r.tail["k_max"] == 3 and r.tail["weight_tail"] > 0
    assert r.mode == "sample" and r.grids == 4
