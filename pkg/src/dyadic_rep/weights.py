"""Muckenhoupt constants and the BMO family on finite dyadic grids.

All suprema are exact maxima over the finite set of dyadic cubes (or dyadic
rectangles of a ProductGrid). The one exception is product BMO, where the open
sets are replaced by all rectangles plus a seeded family of finite unions, so the
reported value is a lower bound for the true supremum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import FunctionTables
from .grid import (
    ConfigurationError,
    DyadicCube,
    DyadicGrid,
    HaarCoefficients,
    HaarIndex,
    ProductGrid,
    as_values,
    haar_transform,
    level_averages,
    level_averages_axis,
)


class DomainError(ValueError):
    """Weight values must be strictly positive."""


def _grid_of(w, grid):
    if grid is not None:
        return grid
    g = getattr(w, "grid", None)
    if g is None:
        raise ConfigurationError("pass the grid explicitly for raw arrays")
    return g


def _positive(v: np.ndarray) -> np.ndarray:
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise DomainError("weight must be strictly positive and finite")
    return v


# --------------------------------------------------------------- A_p

def ap_constant(w, p: float, mode: str = "cubes", grid=None) -> float:
    """[w]_{A_p}: max over dyadic cubes (or rectangles) of <w>_Q <w^{1-p'}>_Q^{p-1}."""
    if not p > 1:
        raise ConfigurationError("A_p needs p > 1")
    grid = _grid_of(w, grid)
    pp = p / (p - 1.0)
    if isinstance(grid, ProductGrid):
        if mode not in ("rectangles", "cubes"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        v = _positive(grid.as_array(w))
        A = grid.rectangle_averages(v)
        B = grid.rectangle_averages(v ** (1.0 - pp))
        return float(max(np.max(A[key] * B[key] ** (p - 1.0)) for key in A))
    if mode != "cubes":
        raise ConfigurationError("rectangle mode needs a ProductGrid")
    v = _positive(as_values(w, grid))
    A = level_averages(grid, v)
    B = level_averages(grid, v ** (1.0 - pp))
    return float(max(np.max(a * b ** (p - 1.0)) for a, b in zip(A, B)))


def slice_ap_constants(w, p: float, grid: ProductGrid) -> tuple[float, float]:
    """(max over x1 of [w(x1, .)]_{A_p}, max over x2 of [w(., x2)]_{A_p})."""
    v = _positive(grid.as_array(w))
    g1, g2 = grid.factors
    pp = p / (p - 1.0)

    def axis_max(X, g):
        A = level_averages_axis(g, X)
        B = level_averages_axis(g, X ** (1.0 - pp))
        return float(max(np.max(a * b ** (p - 1.0)) for a, b in zip(A, B)))

    return axis_max(v.T, g2), axis_max(v, g1)


# --------------------------------------------------------------- BMO sequences

def _level_energy(a, grid: DyadicGrid) -> list[np.ndarray]:
    """|a_I|^2 per level (summed over eta), levels 0..L-1 (level L is zero)."""
    out = [np.zeros(grid.n_cubes(lev)) for lev in range(grid.L + 1)]
    if isinstance(a, HaarCoefficients):
        a = a.levels
    if isinstance(a, dict):
        for key, val in a.items():
            cube = key.cube if isinstance(key, HaarIndex) else key
            if not isinstance(cube, DyadicCube) or cube.grid.key != grid.key:
                raise ConfigurationError(f"coefficient key {key!r} is not a cube of the grid")
            out[cube.level][cube.index] += abs(val) ** 2
        return out
    for lev, arr in enumerate(a):
        arr = np.asarray(arr, dtype=float)
        out[lev] = out[lev] + np.sum(np.abs(arr.reshape(grid.n_cubes(lev), -1)) ** 2, axis=1)
    return out


def _subtree_sums(grid: DyadicGrid, energy: list[np.ndarray]) -> list[np.ndarray]:
    """sum over I contained in I0 of energy[I], for every cube I0."""
    out = [None] * (grid.L + 1)
    out[grid.L] = energy[grid.L].copy()
    for lev in range(grid.L - 1, -1, -1):
        out[lev] = energy[lev] + out[lev + 1][grid.children(lev)].sum(axis=1)
    return out


def bmo_seq_norm(a, grid: DyadicGrid) -> float:
    """sup over I0 of (|I0|^{-1} sum_{I in I0} |a_I|^2)^{1/2}.

    `a` is a map cube -> value (or HaarIndex -> value), HaarCoefficients, or a list of
    per-level arrays of shape (2^{dl},) or (2^{dl}, 2^d - 1).
    """
    sums = _subtree_sums(grid, _level_energy(a, grid))
    return float(np.sqrt(max(np.max(s) * 2.0 ** (grid.d * lev) for lev, s in enumerate(sums))))


def weighted_bmo_seq_norm(a, nu, grid: DyadicGrid) -> float:
    """sup over I0 of (nu(I0)^{-1} sum_{I in I0} |a_I|^2 / <nu>_I)^{1/2}."""
    v = _positive(as_values(nu, grid))
    avg = level_averages(grid, v)
    energy = [e / m for e, m in zip(_level_energy(a, grid), avg)]
    sums = _subtree_sums(grid, energy)
    return float(np.sqrt(max(np.max(s / (m * 2.0 ** (-grid.d * lev))) for lev, (s, m) in enumerate(zip(sums, avg)))))


# --------------------------------------------------------------- product grids

def bi_haar_energy(b, grid: ProductGrid) -> dict:
    """|<b, h_R>|^2 summed over signatures, keyed by (l1, l2) with l_i < L_i."""
    g1, g2 = grid.factors
    tabs = FunctionTables(grid.factors, grid.as_array(b))
    out = {}
    for l1 in range(g1.L):
        for l2 in range(g2.L):
            t = tabs.level_table((l1, l2), ("h", "h"))
            out[(l1, l2)] = np.sum(t**2, axis=(1, 3))
    return out


def _rect_subtree(grid: ProductGrid, c: dict) -> dict:
    """S[R0] = sum over dyadic rectangles R inside R0 of c[R] (missing levels count 0)."""
    g1, g2 = grid.factors
    S = {}
    for l1 in range(g1.L, -1, -1):
        for l2 in range(g2.L, -1, -1):
            acc = c.get((l1, l2), np.zeros((g1.n_cubes(l1), g2.n_cubes(l2)))).copy()
            if l1 < g1.L:
                acc += S[(l1 + 1, l2)][g1.children(l1)].sum(axis=1)
            if l2 < g2.L:
                acc += S[(l1, l2 + 1)][:, g2.children(l2)].sum(axis=2)
            if l1 < g1.L and l2 < g2.L:
                t = S[(l1 + 1, l2 + 1)][g1.children(l1)].sum(axis=1)
                acc -= t[:, g2.children(l2)].sum(axis=2)
            S[(l1, l2)] = acc
    return S


def _rectangle_mask(grid: ProductGrid, l1, i1, l2, i2) -> np.ndarray:
    g1, g2 = grid.factors
    m = np.zeros(grid.shape, dtype=bool)
    m[np.ix_(g1.cells(l1)[i1], g2.cells(l2)[i2])] = True
    return m


def sample_open_sets(grid: ProductGrid, count: int, seed: int, max_pieces: int = 4) -> list[np.ndarray]:
    """Seeded unions of at most `max_pieces` dyadic rectangles, as boolean cell masks."""
    rng = np.random.default_rng(seed)
    g1, g2 = grid.factors
    out = []
    for _ in range(count):
        m = np.zeros(grid.shape, dtype=bool)
        for _ in range(int(rng.integers(2, max_pieces + 1))):
            l1 = int(rng.integers(0, g1.L + 1))
            l2 = int(rng.integers(0, g2.L + 1))
            m |= _rectangle_mask(grid, l1, int(rng.integers(g1.n_cubes(l1))), l2, int(rng.integers(g2.n_cubes(l2))))
        out.append(m)
    return out


@dataclass(frozen=True)
class ProductBMO:
    value: float          # max over rectangles and sampled unions (a lower bound)
    rectangles_only: float
    n_open_sets: int


def product_bmo_norm(b, grid: ProductGrid, nu=None, n_unions: int = 64, seed: int = 0, energy=None) -> ProductBMO:
    """Weighted product BMO over the declared test family of open sets.

    `energy` may carry precomputed |a_R|^2 by level pair (for coefficient sequences);
    otherwise a_R = <b, h_R>.
    """
    g1, g2 = grid.factors
    v = np.ones(grid.shape) if nu is None else _positive(grid.as_array(nu))
    avg = grid.rectangle_averages(v)
    en = bi_haar_energy(b, grid) if energy is None else energy
    c = {key: e / avg[key] for key, e in en.items()}
    S = _rect_subtree(grid, c)
    rect = 0.0
    for (l1, l2), s in S.items():
        meas = 2.0 ** (-(g1.d * l1 + g2.d * l2))
        rect = max(rect, float(np.max(s / (avg[(l1, l2)] * meas))))
    best = rect
    masks = sample_open_sets(grid, n_unions, seed) if n_unions else []
    for m in masks:
        inside = grid.rectangle_averages(m.astype(float))
        tot = 0.0
        for key, cc in c.items():
            tot += float(np.sum(cc[inside[key] >= 1.0 - 1e-12]))
        w_omega = float(np.mean(v * m))
        if w_omega > 0:
            best = max(best, tot / w_omega)
    return ProductBMO(float(np.sqrt(best)), float(np.sqrt(rect)), len(masks))


def little_bmo_norm(b, grid, nu=None) -> float:
    """sup over dyadic rectangles (cubes in one parameter) of nu(R)^{-1} int_R |b - <b>_R|."""
    if isinstance(grid, ProductGrid):
        X = grid.as_array(b)
        v = np.ones(grid.shape) if nu is None else _positive(grid.as_array(nu))
        g1, g2 = grid.factors
        avg_b = grid.rectangle_averages(X)
        avg_v = grid.rectangle_averages(v)
        best = 0.0
        for (l1, l2), mb in avg_b.items():
            spread = mb[g1.labels(l1)][:, g2.labels(l2)]
            dev = np.abs(X - spread)
            avg_dev = grid.rectangle_averages(dev)[(l1, l2)]
            best = max(best, float(np.max(avg_dev / avg_v[(l1, l2)])))
        return best
    x = as_values(b, grid)
    v = np.ones(grid.n_cells) if nu is None else _positive(as_values(nu, grid))
    best = 0.0
    mv = level_averages(grid, v)
    for lev in range(grid.L + 1):
        cells = grid.cells(lev)
        dev = np.abs(x[cells] - x[cells].mean(axis=1, keepdims=True)).mean(axis=1)
        best = max(best, float(np.max(dev / mv[lev])))
    return best


def weighted_bmo_norm(b, nu=None, variant: str = "BMO", grid=None, n_unions: int = 64, seed: int = 0):
    """BMO(nu) (dyadic Haar form), bmo(nu) (rectangle oscillation) or BMO_prod(nu).

    BMO_prod returns a ProductBMO record; the other variants return a float.
    """
    grid = _grid_of(b, grid)
    if nu is not None and getattr(nu, "grid", grid) is not grid:
        ng = nu.grid
        if getattr(ng, "key", None) != getattr(grid, "key", None):
            raise ConfigurationError("symbol and weight live on different grids")
    if variant == "BMO":
        if isinstance(grid, ProductGrid):
            raise ConfigurationError("BMO(nu) is one-parameter; use BMO_prod or bmo")
        coeffs = haar_transform(as_values(b, grid), grid)
        if nu is None:
            return bmo_seq_norm(coeffs, grid)
        return weighted_bmo_seq_norm(coeffs, nu, grid)
    if variant == "bmo":
        return little_bmo_norm(b, grid, nu)
    if variant == "BMO_prod":
        if not isinstance(grid, ProductGrid):
            raise ConfigurationError("BMO_prod needs a ProductGrid")
        return product_bmo_norm(b, grid, nu, n_unions=n_unions, seed=seed)
    raise ConfigurationError(f"unknown BMO variant {variant!r}")


def slice_bmo_norms(b, grid: ProductGrid, nu=None) -> tuple[float, float]:
    """max over x1 of ||b(x1, .)||_{BMO(nu(x1, .))} and the same over x2 (oscillation form)."""
    X = grid.as_array(b)
    v = np.ones(grid.shape) if nu is None else _positive(grid.as_array(nu))
    g1, g2 = grid.factors
    first = max(little_bmo_norm(X[i], g2, v[i]) for i in range(X.shape[0]))
    second = max(little_bmo_norm(X[:, j], g1, v[:, j]) for j in range(X.shape[1]))
    return first, second


# --------------------------------------------------------------- H^1-BMO duality

@dataclass(frozen=True)
class PairingRatio:
    value: float
    defined: bool
    numerator: float
    denominator: float


def h1_bmo_pairing_ratio(a, b, grid, nu=None, averaged: bool = False) -> PairingRatio:
    """Observed constant in sum |a_I||b_I| <= C ||a||_BMO ||(sum |b_I|^2 1_I/|I|)^{1/2}||_{L^1}.

    One parameter: a, b are per-level arrays (n_l,) or (n_l, nd); with a weight nu the
    BMO norm of a is BMO(nu) and the L^1 norm is L^1(nu).
    Product grids: a, b are dicts (l1, l2) -> (n1, n2) arrays and the BMO norm is the
    product one. With `averaged`, each term carries <nu>_R and the BMO norm is unweighted.
    """
    if isinstance(grid, ProductGrid):
        g1, g2 = grid.factors
        v = np.ones(grid.shape) if nu is None else _positive(grid.as_array(nu))
        avg = grid.rectangle_averages(v)
        num = 0.0
        sq = np.zeros(grid.shape)
        for key, arr in b.items():
            arr = np.asarray(arr, dtype=float)
            A = np.asarray(a.get(key, np.zeros_like(arr)), dtype=float)
            fac = avg[key] if averaged else 1.0
            num += float(np.sum(np.abs(A) * np.abs(arr) * fac))
            l1, l2 = key
            meas = 2.0 ** (-(g1.d * l1 + g2.d * l2))
            sq += (arr**2 / meas)[g1.labels(l1)][:, g2.labels(l2)]
        energy = {k: np.abs(np.asarray(x, dtype=float)) ** 2 for k, x in a.items()}
        anorm = product_bmo_norm(np.zeros(grid.shape), grid, None if averaged else nu, energy=energy).value
        l1norm = float(np.mean(np.sqrt(sq) * v))
    else:
        v = np.ones(grid.n_cells) if nu is None else _positive(as_values(nu, grid))
        num = 0.0
        sq = np.zeros(grid.n_cells)
        for lev in range(len(b)):
            B = np.asarray(b[lev], dtype=float).reshape(grid.n_cubes(lev), -1)
            A = np.asarray(a[lev], dtype=float).reshape(grid.n_cubes(lev), -1)
            num += float(np.sum(np.abs(A) * np.abs(B)))
            sq += (np.sum(B**2, axis=1) * 2.0 ** (grid.d * lev))[grid.labels(lev)]
        anorm = bmo_seq_norm(list(a), grid) if nu is None else weighted_bmo_seq_norm(list(a), v, grid)
        l1norm = float(np.mean(np.sqrt(sq) * v))
    den = anorm * l1norm
    if num == 0.0:
        return PairingRatio(0.0, True, 0.0, den)
    if den == 0.0:
        return PairingRatio(float("nan"), False, num, den)
    return PairingRatio(num / den, True, num, den)
