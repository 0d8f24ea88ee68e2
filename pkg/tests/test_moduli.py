import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from dyadic_rep.grid import ConfigurationError
from dyadic_rep.moduli import Modulus, dini_dyadic_sum, dini_norm, dyadic_comparison_bound, validate

FAMILIES = ["power:1", "power:0.5", "power:0.25", "logdamped:2", "logdamped:3", "table:1,0.6,0.3,0.12,0.05"]


def _quad_oracle(w: Modulus, alpha: float) -> float:
    # independent route: adaptive quadrature in u = log 1/t
    return quad(lambda u: float(w.at_log(u)) * (1 + u) ** alpha, 0, np.inf, limit=400)[0]


@pytest.mark.parametrize("text,alpha,expected", [("power:1", 0, 1.0), ("power:1", 1, 2.0), ("power:0.5", 0, 2.0)])
def test_dini_closed_forms(text, alpha, expected):
    assert abs(dini_norm(Modulus.parse(text), alpha).value - expected) < 1e-6


@pytest.mark.parametrize("text", FAMILIES)
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_dini_matches_quadrature_oracle(text, alpha):
    w = Modulus.parse(text)
    ref = _quad_oracle(w, alpha)
    assert abs(dini_norm(w, alpha).value - ref) <= 1e-6 * ref


def test_dyadic_sums():
    w = Modulus.parse("power:1")
    assert abs(dini_dyadic_sum(w, 0) - 1) < 1e-14
    assert abs(dini_dyadic_sum(w, 1) - 2) < 1e-14
    assert abs(dini_dyadic_sum(w, 0, 3) - 0.875) < 1e-15
    with pytest.raises(ConfigurationError):
        dini_dyadic_sum(w, 0, 0)


@pytest.mark.parametrize("text", FAMILIES)
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 2.0])
def test_dyadic_comparison(text, alpha):
    w = Modulus.parse(text)
    bound = dyadic_comparison_bound(w, alpha)
    assert bound == pytest.approx(dini_norm(w, alpha).value / np.log(2) ** (1 + alpha), rel=1e-15)
    assert dini_dyadic_sum(w, alpha) <= bound


def test_comparison_needs_the_alpha_power():
    # with only 1 / log 2 in front the comparison fails once alpha > 0 and omega decays slowly
    w = Modulus.parse("power:0.25")
    assert dini_dyadic_sum(w, 1.0) > dini_norm(w, 1.0).value / np.log(2) + 1.0


@settings(max_examples=30, deadline=None)
@given(g=st.floats(0.1, 1.0), a1=st.floats(0, 2), a2=st.floats(0, 2))
def test_monotone_in_alpha(g, a1, a2):
    w = Modulus("power", (g,))
    lo, hi = sorted((a1, a2))
    assert dini_norm(w, lo).value <= dini_norm(w, hi).value * (1 + 1e-9)


def test_divergent_flag():
    res = dini_norm(Modulus("power", (0.0,)), 0)
    assert res.divergent


def test_validation_examples():
    assert validate(Modulus.parse("power:0.5")).ok
    rep = validate(Modulus.parse("power:2"))
    assert not rep.ok and any(v[0] == "subadditive" for v in rep.violations)
    rep = validate(Modulus.parse("table:1,0.2,0.5,0.1"))
    assert any(v[0] == "monotone" for v in rep.violations)
    with pytest.raises(ConfigurationError):
        validate(Modulus.parse("power:1"), samples=4)


def test_parse_errors():
    for bad in ["power", "power:x", "cosine:1", "power:1,2"]:
        with pytest.raises(ConfigurationError):
            Modulus.parse(bad)
    assert str(Modulus.parse("logdamped:2")) == "logdamped:2"
