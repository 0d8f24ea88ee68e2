"""Commutators with pointwise multipliers, the paraproduct split of b f, and Bloom-type growth."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import ConfigurationError, DyadicGrid, GridFunction, as_values, haar_transform, level_expectation, sign_matrix
from .model_ops import StandardShiftSpec, adversarial_standard_shift, apply as apply_spec, operator_matrix
from .representation import DiscreteOperator
from .weights import DomainError, ap_constant, weighted_bmo_seq_norm


def _apply_base(base, funcs) -> np.ndarray:
    """Cell values of base(f_1, ..., f_n) for a discrete operator, a model spec or a callable."""
    if isinstance(base, DiscreteOperator):
        return base.apply(*funcs)
    if hasattr(base, "to_form") or hasattr(base, "coef"):
        return as_values(apply_spec(base, *funcs))
    if callable(base):
        return np.asarray(base(*funcs), dtype=float)
    raise ConfigurationError(f"cannot apply base operator of type {type(base).__name__}")


def _n_inputs(base) -> int:
    return int(getattr(base, "n", 1))


@dataclass
class CommutatorSpec:
    """[b_m, ... [b_2, [b_1, T]_{k_1}]_{k_2} ...]_{k_m} with 1-based slots k_i."""

    symbols: tuple
    base: object
    slots: tuple

    def __post_init__(self):
        self.symbols = tuple(as_values(b) for b in self.symbols)
        self.slots = tuple(int(k) for k in self.slots)
        if len(self.symbols) != len(self.slots):
            raise ConfigurationError("one slot per symbol is required")
        n = _n_inputs(self.base)
        bad = [k for k in self.slots if not 1 <= k <= n]
        if bad:
            raise ConfigurationError(f"slots {bad} outside 1..{n}")
        sizes = {b.size for b in self.symbols}
        if len(sizes) > 1:
            raise ConfigurationError("grid mismatch between symbols")


def _nested(spec: CommutatorSpec, m: int, funcs) -> np.ndarray:
    if m == 0:
        return _apply_base(spec.base, funcs)
    b = spec.symbols[m - 1]
    k = spec.slots[m - 1] - 1
    moved = list(funcs)
    moved[k] = b * moved[k]
    return b * _nested(spec, m - 1, funcs) - _nested(spec, m - 1, moved)


def apply_commutator(spec: CommutatorSpec, *funcs):
    """Cell values of the iterated commutator; with n + 1 functions, the pairing with the last one."""
    n = _n_inputs(spec.base)
    vals = [as_values(f) for f in funcs]
    if any(v.size != vals[0].size for v in vals) or (spec.symbols and spec.symbols[0].size != vals[0].size):
        raise ConfigurationError("grid mismatch between functions and symbols")
    if len(vals) == n + 1:
        out = _nested(spec, len(spec.symbols), vals[:n])
        return float(np.mean(out * vals[n]))
    if len(vals) != n:
        raise ConfigurationError(f"expected {n} or {n + 1} functions, got {len(vals)}")
    return _nested(spec, len(spec.symbols), vals)


def commutator_expansion(spec: CommutatorSpec, *funcs) -> np.ndarray:
    """The 2^m-term form: sum over subsets S of (-1)^{m-|S|} prod_{i in S} b_i T(..., prod_{i not in S} b_i f_{k_i}, ...)."""
    vals = [as_values(f) for f in funcs]
    m = len(spec.symbols)
    total = np.zeros_like(vals[0])
    for outer in itertools.product((True, False), repeat=m):
        moved = list(vals)
        left = np.ones_like(vals[0])
        for i, out in enumerate(outer):
            if out:
                left = left * spec.symbols[i]
            else:
                moved[spec.slots[i] - 1] = spec.symbols[i] * moved[spec.slots[i] - 1]
        sign = (-1.0) ** (m - sum(outer))
        total = total + sign * left * _apply_base(spec.base, moved)
    return total


# ----------------------------------------------------------------- paraproducts

@dataclass
class ParaproductSplit:
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    mean_correction: np.ndarray

    def total(self) -> np.ndarray:
        return self.A1 + self.A2 + self.A3 + self.mean_correction


def paraproduct_split(b, f, grid: DyadicGrid | None = None) -> ParaproductSplit:
    """b f = A1 + A2 + A3 + <b><f> with A1 = sum D_I b D_I f, A2 = sum D_I b E_I f, A3 = sum E_I b D_I f.

    Each sum over the cubes of one level is a pointwise product of level operators, since
    D_I b and E_I f live on I.
    """
    grid = grid or getattr(b, "grid", None) or getattr(f, "grid", None)
    if grid is None:
        raise ConfigurationError("a grid is required")
    bv, fv = as_values(b, grid), as_values(f, grid)
    A1 = np.zeros(grid.n_cells)
    A2 = np.zeros(grid.n_cells)
    A3 = np.zeros(grid.n_cells)
    Eb, Ef = level_expectation(grid, bv, 0), level_expectation(grid, fv, 0)
    for lev in range(grid.L):
        Eb1, Ef1 = level_expectation(grid, bv, lev + 1), level_expectation(grid, fv, lev + 1)
        Db, Df = Eb1 - Eb, Ef1 - Ef
        A1 += Db * Df
        A2 += Db * Ef
        A3 += Eb * Df
        Eb, Ef = Eb1, Ef1
    return ParaproductSplit(A1, A2, A3, np.full(grid.n_cells, bv.mean() * fv.mean()))


def a3(b, f, grid: DyadicGrid) -> np.ndarray:
    return paraproduct_split(b, f, grid).A3


def _cube_means(grid: DyadicGrid, b: np.ndarray, level: int) -> np.ndarray:
    return b[grid.cells(level)].mean(axis=1)


def a3_remainder(b, S: StandardShiftSpec) -> DiscreteOperator:
    """The operator sum_K sum [<b>_J - <b>_I] a_{IJK} <f, h_I> h_J for a linear shift S_{i,j}.

    It equals A3(b, S f) - S(A3(b, f)); the assembly goes through a shift spec whose
    coefficients carry the bracket.
    """
    g = S.grid
    if S.n != 1 or tuple(S.kinds) != ("h", "h"):
        raise ConfigurationError("a3_remainder needs a linear shift with cancellative slots")
    i, j = S.complexity
    bv = as_values(b, g)
    coef = {}
    for lev, arr in S.coef.items():
        bI = _cube_means(g, bv, lev + i)[g.descendants(lev, i)]   # (nK, O_I)
        bJ = _cube_means(g, bv, lev + j)[g.descendants(lev, j)]   # (nK, O_J)
        diff = bJ[:, None, :] - bI[:, :, None]
        coef[lev] = arr * diff[..., None, None]
    spec = StandardShiftSpec(g, 1, (i, j), ("h", "h"), coef, validate=False)
    return DiscreteOperator.from_matrix(operator_matrix(spec), g.d, g.L, name="a3_remainder")


def a3_commutator_difference(b, S: StandardShiftSpec, f) -> np.ndarray:
    """A3(b, S f) - S(A3(b, f)) computed directly."""
    g = S.grid
    Sf = as_values(apply_spec(S, f))
    return a3(b, Sf, g) - as_values(apply_spec(S, a3(b, f, g)))


def telescoping_residual(b, grid: DyadicGrid, level: int, depth: int) -> float:
    """max |<b>_J - <b>_K - sum_{J < L <= K} <b, h_L> <h_L>_J| over K at `level`, J `depth` below."""
    bv = as_values(b, grid)
    d = grid.d
    S = sign_matrix(d)
    coeffs = haar_transform(bv, grid).levels
    bK = _cube_means(grid, bv, level)
    bJ = _cube_means(grid, bv, level + depth)
    J = np.arange(grid.n_cubes(level + depth))
    K = grid.parents(level + depth, depth) if depth else J
    acc = np.zeros(len(J))
    for up in range(1, depth + 1):
        Lc = grid.parents(level + depth, up)                 # L = J^{(up)}
        child = grid.parents(level + depth, up - 1) if up > 1 else J
        kids = grid.children(level + depth - up)[Lc]          # children of L
        b_idx = np.argmax(kids == child[:, None], axis=1)     # which child contains J
        amp = 2.0 ** (d * (level + depth - up) / 2.0)
        acc += amp * np.sum(coeffs[level + depth - up][Lc] * S[b_idx], axis=1)
    return float(np.max(np.abs(bJ - bK[K] - acc)))


# ----------------------------------------------------------------- growth experiments

def bloom_weight(mu, lam, p: float = 2.0) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(mu <= 0) or np.any(lam <= 0) or not (np.all(np.isfinite(mu)) and np.all(np.isfinite(lam))):
        raise DomainError("Bloom weights must be positive and finite")
    return mu ** (1.0 / p) * lam ** (-1.0 / p)


def power_weight_1d(grid: DyadicGrid, a: float) -> np.ndarray:
    x = (np.arange(grid.n_cells) + 0.5) / grid.n_cells
    return np.abs(x - 0.5) ** a


def adversarial_symbol(grid: DyadicGrid, nu, seed: int) -> np.ndarray:
    """Symbol with a dense Haar spectrum, c_I = eps_I |I|^{1/2} <nu>_I, normalized in BMO(nu)."""
    rng = np.random.default_rng(seed)
    nd = (1 << grid.d) - 1
    nuv = np.asarray(nu, dtype=float)
    levels = []
    for lev in range(grid.L):
        m = _cube_means(grid, nuv, lev)
        levels.append(rng.choice([-1.0, 1.0], size=(grid.n_cubes(lev), nd)) * 2.0 ** (-grid.d * lev / 2.0) * m[:, None])
    from .grid import HaarCoefficients, inverse_haar_transform
    coeffs = HaarCoefficients(grid, 0.0, levels)
    b = inverse_haar_transform(0.0, coeffs).values
    norm = weighted_bmo_seq_norm(haar_transform(b, grid), nuv, grid)
    return b / norm


def coherent_standard_shift(grid: DyadicGrid, i: int, j: int) -> StandardShiftSpec:
    """Linear S_{i,j} with every coefficient at the ceiling |I|^{1/2}|J|^{1/2}/|K| and one sign.

    For i = j = 0 it is f - <f> on the torus, so the commutator baseline is [E, b].
    """
    d = grid.d
    nd = (1 << d) - 1
    coef = {}
    for lev in range(grid.L - max(i, j)):
        bound = 2.0 ** (-d * (2 * lev + i + j) / 2.0 + d * lev)
        eye = np.eye(nd)[None, None, None] if nd > 1 else np.ones((1, 1, 1, 1, 1))
        coef[lev] = bound * np.broadcast_to(eye, (grid.n_cubes(lev), 1 << (d * i), 1 << (d * j), nd, nd)).copy() / nd
    return StandardShiftSpec(grid, 1, (i, j), ("h", "h"), coef)


def commutator_norm(b, S, mu=None, lam=None) -> float:
    """||[b, S]||_{L^2(mu) -> L^2(lam)} on the normalized cell measure."""
    M = operator_matrix(S)
    bv = as_values(b)
    C = bv[:, None] * M - M * bv[None, :]
    if mu is not None:
        C = np.sqrt(np.asarray(lam, dtype=float))[:, None] * C / np.sqrt(np.asarray(mu, dtype=float))[None, :]
    return float(np.linalg.norm(C, 2))


def bloom_growth_experiment(complexities=range(0, 7), mu_exp: float = 0.4, lam_exp: float = -0.4, p: float = 2.0,
                            seed: int = 0, L: int = 10, order: int = 1, mu=None, lam=None,
                            family: str = "coherent", symbol=None) -> dict:
    """Norms of [b, S_{i,i}] (order 1) or [b, [b, S_{i,i}]] (order 2) between power-weighted spaces.

    family "coherent" uses coherent_standard_shift, "rank1" the seeded rank-one sign blocks.
    The symbol defaults to a dense-spectrum b normalized in BMO(nu).
    Returns {"rows": [...], "nu_a2": [nu]_{A_2}, "mu_a2", "lam_a2"}; each row has the
    complexity, the norm and the ratio to (1 + i)^{order / 2}. Constant symbols give 0.
    """
    if p != 2:
        raise ConfigurationError("two-weight commutator norms are measured at p = 2")
    grid = DyadicGrid(1, L)
    mu = power_weight_1d(grid, mu_exp) if mu is None else np.asarray(mu, dtype=float)
    lam = power_weight_1d(grid, lam_exp) if lam is None else np.asarray(lam, dtype=float)
    nu = bloom_weight(mu, lam, p)
    b = adversarial_symbol(grid, nu, seed) if symbol is None else as_values(symbol)
    if family not in ("coherent", "rank1"):
        raise ConfigurationError(f"unknown shift family {family!r}")
    rows = []
    for i in complexities:
        if family == "coherent":
            S = coherent_standard_shift(grid, i, i)
        else:
            S = adversarial_standard_shift(grid, i, i, seed * 1000 + i)
        M = operator_matrix(S)
        C = M
        for _ in range(order):
            C = b[:, None] * C - C * b[None, :]
        W = np.sqrt(lam)[:, None] * C / np.sqrt(mu)[None, :]
        norm = float(np.linalg.norm(W, 2))
        rows.append({"i": int(i), "j": int(i), "norm": norm, "ratio": norm / (1.0 + i) ** (order / 2.0)})
    return {"rows": rows, "nu_a2": ap_constant(GridFunction(grid, nu), 2.0),
            "mu_a2": ap_constant(GridFunction(grid, mu), 2.0), "lam_a2": ap_constant(GridFunction(grid, lam), 2.0)}
