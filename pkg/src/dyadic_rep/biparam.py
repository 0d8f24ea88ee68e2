"""Bi-parameter model operators on product grids.

An operator is described per parameter by a Component:

* ("S", complexity, kinds): standard shift behaviour, slot j sits complexity[j]
  levels below the top cube and uses h or h^0;
* ("Q", k, slot): modified shift, every slot k levels down, slot `slot` cancellative,
  evaluated with the two-term bracket (full minus tied to the cancellative cube);
* ("P", slot): paraproduct behaviour, h_K on `slot` and 1_K / |K| elsewhere;
* ("E",): the torus mean, 1 in every slot (only used for mean corrections).

Coefficient arrays, per pair of top levels (l1, l2), have shape
(nK1, nK2, O1_1, O2_1, ..., O1_{n+1}, O2_{n+1}, eta1..., eta2...) where O_m_j counts the
descendants used by slot j in parameter m and one eta axis follows for every
cancellative (slot, parameter) pair, parameter 1 first, slots in order. The product of
the two brackets gives the four-term bracket of Q x Q and the two-term bracket of QS
and Q pi.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .forms import FunctionTables, MultilinearForm, SlotSpec, Term
from .grid import (
    ConfigurationError,
    DyadicGrid,
    GridIndexError,
    ProductGrid,
    ResolutionError,
    goodness_mask,
    sign_matrix,
)
from .grid import enumerate_shift_words, sample_shift_words, DEFAULT_ENUMERATION_CAP
from .model_ops import SpecValidationError, _bits, _flat, _positions, NORM_RTOL
from .representation import _basis, tuple_geometry
from .weights import product_bmo_norm

KINDS = ("S", "Q", "QS", "SQ", "Spi", "piS", "Qpi", "piQ", "Pi")


# ----------------------------------------------------------------- components

@dataclass(frozen=True)
class Component:
    type: str
    depths: tuple
    kinds: tuple
    slot: int | None = None

    @property
    def n_slots(self) -> int:
        return len(self.depths)

    @property
    def h_slots(self) -> list:
        return [j for j, kd in enumerate(self.kinds) if kd == "h"]

    def variants(self):
        """(weight, tied) pairs: tied=True replaces every offset by that of the cancellative slot."""
        if self.type == "Q":
            return [(1.0, False), (-1.0, True)]
        return [(1.0, False)]


def shift_component(complexity, kinds) -> Component:
    kinds = tuple(kinds)
    if len(complexity) != len(kinds):
        raise SpecValidationError("complexity and kinds need one entry per slot")
    if sum(kd == "h" for kd in kinds) < 2:
        raise SpecValidationError("a shift component needs two cancellative slots")
    return Component("S", tuple(int(i) for i in complexity), kinds)


def modified_component(k: int, n: int, slot: int | None = None) -> Component:
    slot = n if slot is None else slot
    if k < 1:
        raise SpecValidationError("modified components have k >= 1")
    return Component("Q", (k,) * (n + 1), tuple("h" if j == slot else "h0" for j in range(n + 1)), slot)


def paraproduct_component(n: int, slot: int | None = None) -> Component:
    slot = n if slot is None else slot
    return Component("P", (0,) * (n + 1), tuple("h" if j == slot else "h0" for j in range(n + 1)), slot)


def mean_component(n: int) -> Component:
    return Component("E", (0,) * (n + 1), ("h0",) * (n + 1))


def _kind_name(c1: Component, c2: Component) -> str:
    name = {"S": "S", "Q": "Q", "P": "pi", "E": "E"}
    a, b = name[c1.type], name[c2.type]
    if a == b and a in ("S", "Q"):
        return a
    if a == b == "pi":
        return "Pi"
    return a + b


def _shift_bound(c: Component, d: int, n: int, lev: int) -> float:
    return 2.0 ** (-d * sum(lev + i for i in c.depths) / 2.0 + d * n * lev)


# ----------------------------------------------------------------- specs

def _batch_bmo(levels: list, grid: DyadicGrid) -> np.ndarray:
    """Dyadic BMO norm of many sequences at once; levels[l] has shape (n_l, E, *batch)."""
    energy = [np.sum(np.asarray(a) ** 2, axis=1) for a in levels]
    sums = [None] * len(energy)
    best = None
    for lev in range(len(energy) - 1, -1, -1):
        s = energy[lev].copy()
        if lev + 1 < len(energy):
            s += sums[lev + 1][grid.children(lev)].sum(axis=1)
        sums[lev] = s
        val = np.max(s, axis=0) * 2.0 ** (grid.d * lev)
        best = val if best is None else np.maximum(best, val)
    return np.sqrt(best)


@dataclass
class BiOperatorSpec:
    grid: ProductGrid
    n: int
    comps: tuple
    coef: dict
    validate: bool = True
    truncated: int = field(default=0, init=False)

    def __post_init__(self):
        g1, g2 = self.grid.factors
        self.comps = tuple(self.comps)
        if len(self.comps) != 2 or any(c.n_slots != self.n + 1 for c in self.comps):
            raise SpecValidationError("need one component per parameter with n + 1 slots")
        keep = {}
        for key, arr in self.coef.items():
            l1, l2 = (int(x) for x in key)
            ok = True
            for g, c, lev in ((g1, self.comps[0], l1), (g2, self.comps[1], l2)):
                deepest = max(i + (1 if kd == "h" else 0) for i, kd in zip(c.depths, c.kinds))
                if lev < 0 or lev + deepest > g.L:
                    ok = False
            if not ok:
                if self.comps[0].type == "Q" or self.comps[1].type == "Q":
                    self.truncated += int(np.count_nonzero(arr))
                    continue
                raise ResolutionError(f"top levels {(l1, l2)} leave no room for the component depths")
            keep[(l1, l2)] = np.asarray(arr, dtype=float)
        self.coef = keep
        for key, arr in self.coef.items():
            if arr.shape != self.shape(*key):
                raise SpecValidationError(f"levels {key}: coefficient shape {arr.shape} != {self.shape(*key)}")
        if self.validate:
            self.check_normalization()

    @property
    def kind(self) -> str:
        return _kind_name(*self.comps)

    def shape(self, l1: int, l2: int) -> tuple:
        g1, g2 = self.grid.factors
        c1, c2 = self.comps
        shp = [g1.n_cubes(l1), g2.n_cubes(l2)]
        for j in range(self.n + 1):
            shp += [1 << (g1.d * c1.depths[j]), 1 << (g2.d * c2.depths[j])]
        shp += [(1 << g1.d) - 1] * len(c1.h_slots) + [(1 << g2.d) - 1] * len(c2.h_slots)
        return tuple(shp)

    def check_normalization(self) -> float:
        """Largest ratio to the kind's normalization; raises above 1."""
        worst = self.normalization_ratio()
        if worst > 1.0 + NORM_RTOL:
            raise SpecValidationError(f"{self.kind}: coefficients exceed the normalization by factor {worst:.12g}")
        return worst

    def normalization_ratio(self) -> float:
        """Largest ratio of the coefficients to the kind's normalization."""
        g1, g2 = self.grid.factors
        c1, c2 = self.comps
        n = self.n
        paras = [c.type in ("P", "E") for c in self.comps]
        worst = 0.0
        if not any(paras):
            for (l1, l2), arr in self.coef.items():
                b = _shift_bound(c1, g1.d, n, l1) * _shift_bound(c2, g2.d, n, l2)
                worst = max(worst, float(np.max(np.abs(arr))) / b if arr.size else 0.0)
        elif all(paras):
            energy = {}
            for (l1, l2), arr in self.coef.items():
                energy[(l1, l2)] = np.sum(arr.reshape(arr.shape[:2] + (-1,)) ** 2, axis=2)
            worst = product_bmo_norm(None, self.grid, energy=energy).value if energy else 0.0
        else:
            m = paras.index(True)  # paraproduct parameter
            o = 1 - m
            gm, go = self.grid.factors[m], self.grid.factors[o]
            co = self.comps[o]
            by_other: dict = {}
            for key, arr in self.coef.items():
                by_other.setdefault(key[o], {})[key[m]] = arr
            for lo, rows in by_other.items():
                # move the paraproduct K axis and its eta axis to the front, the rest is a batch
                levels = []
                for lm in range(gm.L):
                    arr = rows.get(lm)
                    if arr is None:
                        arr = np.zeros(self.shape(*((lo, lm) if o == 0 else (lm, lo))))
                    X = np.moveaxis(arr, m, 0)
                    levels.append(np.moveaxis(X, X.ndim - 1 if m == 1 else -1 - len(c2.h_slots), 1))
                norms = _batch_bmo(levels, gm)
                worst = max(worst, float(np.max(norms)) / _shift_bound(co, go.d, n, lo))
        return worst

    def to_form(self) -> MultilinearForm:
        return _bi_form(self)


def _bi_form(spec: BiOperatorSpec) -> MultilinearForm:
    c1, c2 = spec.comps
    n = spec.n
    m = n + 1
    g1, g2 = spec.grid.factors
    o_lab = [[10 + j for j in range(m)], [20 + j for j in range(m)]]
    e_lab = [[30 + j for j in range(m)], [33 + j for j in range(m)]]
    axes_full = []
    for j in range(m):
        axes_full += [o_lab[0][j], o_lab[1][j]]
    axes_full += [e_lab[0][j] for j in c1.h_slots] + [e_lab[1][j] for j in c2.h_slots]
    terms = []
    for (w1, t1), (w2, t2) in itertools.product(c1.variants(), c2.variants()):
        tied = (t1, t2)
        comps = (c1, c2)
        # axes to sum away: offsets of non-cancellative slots in a tied parameter
        drop = []
        for p in range(2):
            if tied[p]:
                drop += [2 + 2 * j + p for j in range(m) if j != comps[p].slot]
        axes = [a for i, a in enumerate(axes_full) if 2 + i not in drop]
        slots = []
        for j in range(m):
            dep, kd, ol, el = [], [], [], []
            for p in range(2):
                c = comps[p]
                dep.append(c.depths[j])
                kd.append(c.kinds[j])
                ol.append(o_lab[p][c.slot] if tied[p] else o_lab[p][j])
                el.append(e_lab[p][j] if c.kinds[j] == "h" else None)
            slots.append(SlotSpec(tuple(dep), tuple(kd), tuple(ol), tuple(el)))
        coef = {}
        for (l1, l2), arr in spec.coef.items():
            a = arr.sum(axis=tuple(drop)) if drop else arr
            scale = 1.0
            for p, (c, g, lev) in enumerate(((c1, g1, l1), (c2, g2, l2))):
                if c.type in ("P", "E"):
                    # 1_K / |K| = |K|^{-1/2} h^0_K in every non-cancellative slot
                    scale *= 2.0 ** (g.d * lev * sum(kd == "h0" for kd in c.kinds) / 2.0)
            coef[(l1, l2)] = scale * a
        terms.append(Term(coef, tuple(axes), tuple(slots), weight=w1 * w2))
    return MultilinearForm(spec.grid.factors, m, terms)


def apply_bi_operator(spec: BiOperatorSpec, *funcs) -> float:
    """<T(f_1, ..., f_n), f_{n+1}> for a bi-parameter model operator."""
    g = spec.grid
    return spec.to_form().evaluate([g.as_array(f) for f in funcs])


def bi_operator_matrix(spec, cap: int = 4096) -> np.ndarray:
    """Dense matrix of a linear bi-parameter operator on flattened cell values."""
    form = spec if isinstance(spec, MultilinearForm) else spec.to_form()
    N = int(np.prod(form.shape))
    if N > cap:
        raise ConfigurationError(f"matrix dimension {N} exceeds the cap {cap}")
    return form.matrix()


def random_bi_spec(grid: ProductGrid, comps, n: int, seed: int, fill: float = 1.0) -> BiOperatorSpec:
    """Seeded spec at a fraction of its normalization (shift-type and partial kinds)."""
    rng = np.random.default_rng(seed)
    g1, g2 = grid.factors
    c1, c2 = comps
    probe = BiOperatorSpec(grid, n, comps, {}, validate=False)
    coef = {}
    for l1 in range(g1.L + 1):
        for l2 in range(g2.L + 1):
            ok = all(lev + max(i + (kd == "h") for i, kd in zip(c.depths, c.kinds)) <= g.L
                     for c, g, lev in ((c1, g1, l1), (c2, g2, l2)))
            if not ok:
                continue
            shp = probe.shape(l1, l2)
            b = 1.0
            for c, g, lev in ((c1, g1, l1), (c2, g2, l2)):
                if c.type in ("S", "Q"):
                    b *= _shift_bound(c, g.d, n, lev)
            coef[(l1, l2)] = rng.uniform(-1, 1, size=shp) * b
    spec = BiOperatorSpec(grid, n, comps, coef, validate=False)
    worst = spec.normalization_ratio() if spec.coef else 0.0
    if worst > 0:
        # rescale partial and full paraproducts to the requested fill of their BMO budget
        if any(c.type in ("P", "E") for c in comps):
            for key in spec.coef:
                spec.coef[key] *= fill / worst
        else:
            for key in spec.coef:
                spec.coef[key] *= fill
    spec.validate = True
    spec.check_normalization()
    return spec


# ----------------------------------------------------------------- decomposition

def _param_outputs(a: np.ndarray, lev: int, k: int, g: DyadicGrid, cancel: int):
    """One-parameter linear split of a modified block into standard blocks.

    a has axes (K, O_f, O_g, E, *batch) with the cancellative slot `cancel` (0 = f, 1 = g).
    Yields (sign, top level, (depth_f, depth_g), array (nM, O_f', O_g', E_f, E_g, *batch)).
    """
    d = g.d
    S = sign_matrix(d)
    nd = S.shape[1]
    batch = a.shape[4:]
    if cancel == 0:
        a = np.swapaxes(a, 1, 2)
    posk = _positions(d, k)
    I_meas = 2.0 ** (-d * (lev + k))
    b = a * np.sqrt(I_meas)
    out = []
    for i in range(k):
        Lidx = _flat(posk >> (k - i), i)
        bit = _bits((posk >> (k - i - 1)) & 1)
        W = np.zeros((1 << (d * k), 1 << (d * i), nd))
        W[np.arange(W.shape[0]), Lidx] = S[bit]
        A = 2.0 ** (d * (lev + i) / 2.0) * np.einsum("kije...,ilh->kljhe...", b, W)
        out.append((1.0, lev, (i, k), A))
        up = k - i - 1
        levM = lev + up
        posM = posk >> (i + 1)
        rel = posk & ((1 << (i + 1)) - 1)
        Mloc = _flat(posM, up)
        relflat = _flat(rel, i + 1)
        child = _bits((_positions(d, i + 1) >> i) & 1)
        Bbar = b.sum(axis=1)  # (K, O_g, E, *batch)
        Mi = g.descendants(lev, up)[:, Mloc]  # (K, O_g)
        V = np.zeros((g.n_cubes(levM), 1 << (d * (i + 1)), nd) + batch)
        V[Mi, relflat[None, :]] = Bbar
        Sc = S[child]  # (rel, eta')
        U = 2.0 ** (d * levM / 2.0) * V[:, None, :, None] * Sc.reshape((1, 1) + Sc.shape + (1,) * (1 + len(batch)))
        # U axes: (M, 1, rel, eta', eta, *batch)
        out.append((-1.0, levM, (0, i + 1), U))
    if cancel == 0:
        out = [(s, lv, (dp[1], dp[0]), np.swapaxes(np.swapaxes(X, 1, 2), 3, 4)) for s, lv, dp, X in out]
    return out


@dataclass
class BiShiftDecomposition:
    shifts: list      # (sign, BiOperatorSpec) pairs
    c: int            # output count divided by k1 k2

    def to_form(self) -> MultilinearForm:
        forms = [s.to_form().scaled(w) for w, s in self.shifts]
        total = forms[0]
        for f in forms[1:]:
            total = total + f
        return total


def decompose_bi_modified_shift(Q: BiOperatorSpec, validate: bool = True) -> BiShiftDecomposition:
    """Split a linear bi-parameter modified shift Q_{k1,k2} into standard bi-parameter shifts.

    In each parameter the modified bracket splits into k shifts of complexity (i, k) that
    expand the averages of the cancelled slot along the chain of parents, and k shifts
    of complexity (0, i+1) that collapse the tied average; the bi-parameter identity is
    the tensor product of the two splits, so there are 4 k1 k2 outputs.
    """
    c1, c2 = Q.comps
    if Q.n != 1 or c1.type != "Q" or c2.type != "Q":
        raise ConfigurationError("the decomposition handles linear Q_{k1,k2}")
    g1, g2 = Q.grid.factors
    k1, k2 = c1.depths[0], c2.depths[0]
    acc: dict = {}
    for (l1, l2), arr in Q.coef.items():
        # (K1, K2, O1f, O2f, O1g, O2g, E1, E2) -> (K1, O1f, O1g, E1, K2, O2f, O2g, E2)
        X = np.transpose(arr, (0, 2, 4, 6, 1, 3, 5, 7))
        for s1, lv1, dp1, Y in _param_outputs(X, l1, k1, g1, c1.slot):
            # Y: (M1, L1f, L1g, E1f, E1g, K2, O2f, O2g, E2)
            Z = np.moveaxis(Y, (5, 6, 7, 8), (0, 1, 2, 3))
            for s2, lv2, dp2, W in _param_outputs(Z, l2, k2, g2, c2.slot):
                # W: (M2, L2f, L2g, E2f, E2g, M1, L1f, L1g, E1f, E1g)
                out = np.transpose(W, (5, 0, 6, 1, 7, 2, 8, 9, 3, 4))
                key = (s1 * s2, dp1, dp2)
                acc.setdefault(key, {}).setdefault((lv1, lv2), 0.0)
                acc[key][(lv1, lv2)] = acc[key][(lv1, lv2)] + out
    shifts = []
    for (sign, dp1, dp2), coef in acc.items():
        comps = (shift_component(dp1, ("h", "h")), shift_component(dp2, ("h", "h")))
        shifts.append((sign, BiOperatorSpec(Q.grid, 1, comps, coef, validate=validate)))
    return BiShiftDecomposition(shifts, 4)


# ----------------------------------------------------------------- haar operations

def _along(grid: DyadicGrid, X: np.ndarray, axis: int, fn) -> np.ndarray:
    """Apply a one-parameter cell-value map fn along one axis of a product array."""
    Y = np.moveaxis(np.asarray(X, dtype=float), axis, 0)
    out = fn(Y.reshape(grid.n_cells, -1))
    return np.moveaxis(out.reshape(Y.shape), 0, axis)


def _expect(grid: DyadicGrid, level: int, I=None, at: int | None = None):
    """E_l along axis 0, batched over columns; with I, restricted to cube I of level `at`."""
    def fn(Y):
        avg = Y[grid.cells(level)].mean(axis=1)[grid.labels(level)]
        if I is None:
            return avg
        out = np.zeros_like(Y)
        c = grid.cells(level if at is None else at)[I]
        out[c] = avg[c]
        return out
    return fn


def _block(grid: DyadicGrid, level: int, k: int, I=None):
    """E_{l+k} - E_l (restricted to the level-l cube I), truncated at the finest level."""
    hi = min(level + k, grid.L)
    def fn(Y):
        return _expect(grid, hi, I, level)(Y) - _expect(grid, level, I, level)(Y)
    return fn


def _haar1(grid: DyadicGrid, level: int, index: int, kind: str, eta: int = 0) -> np.ndarray:
    v = np.zeros(grid.n_cells)
    amp = 2.0 ** (grid.d * level / 2.0)
    if kind == "h0":
        v[grid.cells(level)[index]] = amp
        return v
    if level >= grid.L:
        raise ResolutionError("cancellative Haar functions need level < L")
    S = sign_matrix(grid.d)
    for b, child in enumerate(grid.children(level)[index]):
        v[grid.cells(level + 1)[child]] = amp * S[b, eta]
    return v


def _check_rect(grid: ProductGrid, R):
    for g, cube in zip(grid.factors, R):
        if cube.grid.key != g.key:
            raise GridIndexError("rectangle does not belong to the product grid")


def bi_square_function(f, grid: ProductGrid, which: str = "D") -> np.ndarray:
    """S_D (both parameters), S1 or S2 (one parameter) as cell values."""
    g1, g2 = grid.factors
    X = grid.as_array(f)
    def diffs(g, axis, Y):
        return [_along(g, Y, axis, _expect(g, l + 1)) - _along(g, Y, axis, _expect(g, l)) for l in range(g.L)]
    if which == "1":
        return np.sqrt(sum(D**2 for D in diffs(g1, 0, X)))
    if which == "2":
        return np.sqrt(sum(D**2 for D in diffs(g2, 1, X)))
    if which != "D":
        raise ConfigurationError("which must be 'D', '1' or '2'")
    acc = np.zeros_like(X)
    for D in diffs(g1, 0, X):
        for DD in diffs(g2, 1, D):
            acc += DD**2
    return np.sqrt(acc)


def strong_maximal(f, grid: ProductGrid) -> np.ndarray:
    """M_D f(x) = sup of <|f|>_R over dyadic rectangles R containing x."""
    g1, g2 = grid.factors
    A = np.abs(grid.as_array(f))
    out = np.zeros_like(A)
    for l1 in range(g1.L + 1):
        B = _along(g1, A, 0, _expect(g1, l1))
        for l2 in range(g2.L + 1):
            out = np.maximum(out, _along(g2, B, 1, _expect(g2, l2)))
    return out


def mixed_square_maximal(f, grid: ProductGrid, which: int = 1) -> np.ndarray:
    """S^i_{D,M}: square function in parameter i of the maximal function in the other."""
    g1, g2 = grid.factors
    X = grid.as_array(f)
    if which == 2:
        return mixed_square_maximal(X.T, ProductGrid(g2, g1), 1).T
    acc = np.zeros_like(X)
    for l in range(g1.L):
        D = _along(g1, X, 0, _expect(g1, l + 1)) - _along(g1, X, 0, _expect(g1, l))
        M = np.zeros_like(D)
        for l2 in range(g2.L + 1):
            M = np.maximum(M, _along(g2, np.abs(D), 1, _expect(g2, l2)))
        acc += M**2
    return np.sqrt(acc)


def square_function_energy(f, grid: ProductGrid) -> dict:
    """||S_D f||^2 next to ||f||^2 minus the partial-mean corrections.

    ||S_D f||_2^2 = ||f||^2 - ||<f>_1||^2 - ||<f>_2||^2 + <f>^2 where <f>_i averages over
    parameter i.
    """
    X = grid.as_array(f)
    m1 = X.mean(axis=0)
    m2 = X.mean(axis=1)
    closed = float(np.mean(X**2) - np.mean(m1**2) - np.mean(m2**2) + X.mean() ** 2)
    return {"square": float(np.mean(bi_square_function(X, grid) ** 2)), "closed": closed}


def bi_p_energy(f, grid: ProductGrid, k=(0, 0)) -> float:
    """sum over rectangles K of ||P_{K,k} f||_2^2 with P_{K,k} = P_{K1,k1} P_{K2,k2}."""
    g1, g2 = grid.factors
    X = grid.as_array(f)
    total = 0.0
    for l1 in range(g1.L + 1):
        A = _along(g1, X, 0, _block(g1, l1, k[0] + 1))
        for l2 in range(g2.L + 1):
            B = _along(g2, A, 1, _block(g2, l2, k[1] + 1))
            total += float(np.mean(B**2))
    return total


def bi_p_multiplicity(f, grid: ProductGrid, k=(0, 0)) -> float:
    """sum over R of m(R1, k1) m(R2, k2) |<f, h_R>|^2, the closed form of bi_p_energy."""
    g1, g2 = grid.factors
    tabs = FunctionTables((g1, g2), grid.as_array(f))
    total = 0.0
    for l1 in range(g1.L):
        for l2 in range(g2.L):
            c = tabs.level_table((l1, l2), ("h", "h"))
            total += (min(k[0], l1) + 1) * (min(k[1], l2) + 1) * float(np.sum(c**2))
    return total


def biparam_haar_ops(f, R, k=(0, 0), eta=(0, 0)) -> dict:
    """Tensor-composed Haar operators of f at the rectangle R = (I1, I2).

    Keys: the four Haar variants "h_R", "h_R^{1,0}", "h_R^{0,1}", "h_R^0" (1,0 means
    cancellative in the first parameter only), "Delta_R" f, "Delta1_K" = Delta_{I1,k1} in the
    first parameter, "P_K" = P_{R,k}, and the pairings "<f,h_R>" and "<f>_R".
    """
    I1, I2 = R
    grid = ProductGrid(I1.grid, I2.grid)
    g1, g2 = grid.factors
    X = grid.as_array(f)
    N = grid.n_cells
    out = {}
    for name, kinds in (("h_R", ("h", "h")), ("h_R^{1,0}", ("h", "h0")), ("h_R^{0,1}", ("h0", "h")), ("h_R^0", ("h0", "h0"))):
        u1 = _haar1(g1, I1.level, I1.index, kinds[0], eta[0])
        u2 = _haar1(g2, I2.level, I2.index, kinds[1], eta[1])
        out[name] = np.outer(u1, u2)
    out["<f,h_R>"] = float(np.sum(X * out["h_R"])) / N
    out["<f>_R"] = float(np.mean(X[np.ix_(g1.cells(I1.level)[I1.index], g2.cells(I2.level)[I2.index])]))
    D1 = _along(g1, X, 0, _block(g1, I1.level, 1, I1.index))
    out["Delta_R"] = _along(g2, D1, 1, _block(g2, I2.level, 1, I2.index))
    kk1 = I1.level + k[0]
    if kk1 < g1.L:
        lo = _along(g1, X, 0, _expect(g1, kk1, None))
        hi = _along(g1, X, 0, _expect(g1, kk1 + 1, None))
        mask = np.zeros(g1.n_cells)
        mask[g1.cells(I1.level)[I1.index]] = 1.0
        out["Delta1_K"] = (hi - lo) * mask[:, None]
    else:
        out["Delta1_K"] = np.zeros_like(X)
    P1 = _along(g1, X, 0, _block(g1, I1.level, k[0] + 1, I1.index))
    out["P_K"] = _along(g2, P1, 1, _block(g2, I2.level, k[1] + 1, I2.index))
    return out


def lower_square_ratio(f, w, grid: ProductGrid) -> float:
    """||f - partial means||_{L^2(w)} / ||S_D f||_{L^2(w)} (the lower square function estimate)."""
    X = grid.as_array(f)
    W = grid.as_array(w)
    Y = X - X.mean(axis=0, keepdims=True) - X.mean(axis=1, keepdims=True) + X.mean()
    S = bi_square_function(X, grid)
    return float(np.sqrt(np.sum(Y**2 * W) / np.sum(S**2 * W)))


# ----------------------------------------------------------------- bi-parameter operators

@dataclass
class BiDiscreteOperator:
    """Linear operator on product-grid cell values, tensor A[x1, x2, y1, y2] in slot order.

    <T f, g> = (N1 N2)^{-2} sum A[x, y] f(x) g(y).
    """

    d: tuple
    L: tuple
    tensor: np.ndarray
    omega: tuple = (None, None)
    name: str = "operator"

    def __post_init__(self):
        N1, N2 = self.N
        self.tensor = np.asarray(self.tensor, dtype=float)
        if self.tensor.shape != (N1, N2, N1, N2):
            raise ConfigurationError(f"operator tensor shape {self.tensor.shape} != {(N1, N2, N1, N2)}")

    @property
    def N(self) -> tuple:
        return tuple(1 << (d * L) for d, L in zip(self.d, self.L))

    @classmethod
    def tensor_product(cls, T1, T2) -> "BiDiscreteOperator":
        if T1.n != 1 or T2.n != 1:
            raise ConfigurationError("tensor products are built from linear operators")
        A = np.einsum("ab,cd->acbd", T1.tensor, T2.tensor)
        return cls((T1.d, T2.d), (T1.L, T2.L), A, (T1.omega, T2.omega), f"{T1.name}x{T2.name}")

    def form(self, f, g) -> float:
        N1, N2 = self.N
        return float(np.einsum("abcd,ab,cd->", self.tensor, np.reshape(f, (N1, N2)), np.reshape(g, (N1, N2)))) / (N1 * N2) ** 2


def _stacked_basis(g: DyadicGrid):
    """All level bases side by side: columns for (level, kind) blocks, with their offsets."""
    cols, where, start = [], {}, 0
    for lev in range(g.L + 1):
        for kd in ("h0", "h"):
            if lev >= g.L:
                continue
            B = _basis(g, lev, kd)
            where[(lev, kd)] = (start, B.shape[1])
            cols.append(B)
            start += B.shape[1]
    return np.concatenate(cols, axis=1), where


def _param_entries(g: DyadicGrid):
    """One-parameter expansion slots: ("mean", 0, (h0, h0)) and (level, pattern) with an h."""
    yield 0, ("h0", "h0")
    for lev in range(g.L):
        for kinds in (("h", "h0"), ("h0", "h"), ("h", "h")):
            yield lev, kinds


@dataclass
class _Group:
    key: tuple        # (type, band, depth, slot, gated)
    top: int
    rows: np.ndarray
    K: np.ndarray
    offs: tuple
    weight: float
    direct_rows: np.ndarray | None = None  # the band without the goodness gate


def _component(key) -> Component:
    typ, band, depth, slot, gated = key
    if typ == "E":
        return mean_component(1)
    if typ == "P":
        return paraproduct_component(1, slot)
    if typ == "Q":
        return modified_component(depth, 1, slot)
    return shift_component((depth, depth), ("h", "h"))


def _param_groups(g: DyadicGrid, lev: int, kinds: tuple) -> list:
    d = g.d
    if "h" not in kinds:
        z = np.zeros(1, dtype=np.int64)
        return [_Group(("E", 0, 0, None, False), 0, z, z, (z, z), 1.0, direct_rows=z)], np.zeros((1, 2), dtype=np.int64)
    ref, tup, band = tuple_geometry(g, lev, kinds)
    rows_all = np.arange(tup.shape[0])
    nh = sum(kd == "h" for kd in kinds)
    z = np.zeros(tup.shape[0], dtype=np.int64)
    groups = []
    if nh == 1:
        s = kinds.index("h")
        groups.append(_Group(("P", 0, 0, s, False), lev, rows_all, tup[:, s], (z, z), 2.0 ** (-d * lev / 2.0)))
    else:
        sel = band == 0
        groups.append(_Group(("S", 0, 0, None, False), lev, rows_all[sel], tup[sel, 0],
                             (z[sel], z[sel]), 1.0))
    typ = "Q" if nh == 1 else "S"
    slot = kinds.index("h") if nh == 1 else None
    for k in np.unique(band[band > 0]):
        k = int(k)
        sel = band == k
        if k <= lev:
            direct = rows_all[sel]
            sel = sel & goodness_mask(g, lev, k)[tup[:, ref]]
            rows = rows_all[sel]
            K = g.parents(lev, k)[tup[rows, ref]]
            pos = g.position_in_parent(lev, k)
            groups.append(_Group((typ, k, k, slot, True), lev - k, rows, K,
                                 tuple(_flat(pos[tup[rows, j]], k) for j in range(2)), float(1 << d),
                                 direct_rows=direct))
        else:
            rows = rows_all[sel]
            pos = g.position_in_parent(lev, lev)
            groups.append(_Group((typ, k, lev, slot, False), 0, rows, np.zeros(len(rows), dtype=np.int64),
                                 tuple(_flat(pos[tup[rows, j]], lev) for j in range(2)), 1.0))
    for gr in groups:
        if gr.direct_rows is None:
            gr.direct_rows = gr.rows
    return groups, tup


@dataclass
class BiPiece:
    kind: str
    keys: tuple      # per-parameter group keys
    spec: BiOperatorSpec
    weight: float    # product of the gating weights

    @property
    def bands(self) -> tuple:
        return (self.keys[0][1], self.keys[1][1])


@dataclass
class BiRepresentationBundle:
    grid: ProductGrid
    pieces: list
    direct: dict      # kind -> ungated per-tuple sum (only when functions were given)

    def pairing(self, f, g) -> float:
        tabs = [FunctionTables(self.grid.factors, self.grid.as_array(x)) for x in (f, g)]
        return sum(p.spec.to_form().evaluate(tabs) for p in self.pieces)


def _bi_pattern(R, grids, wheres, levels, kinds):
    """Pattern tensor (r1, r2, t1f, t1g, t2f, t2g) from the operator in stacked-basis coordinates.

    Rows of parameter p run over all cube pairs (I_f, I_g) at levels[p] in C order.
    """
    g1, g2 = grids
    n1, n2 = g1.n_cubes(levels[0]), g2.n_cubes(levels[1])
    sl, t = [], []
    for j in range(2):
        for p in range(2):
            a, w = wheres[p][(levels[p], kinds[p][j])]
            sl.append(slice(a, a + w))
            t.append(w // (n1, n2)[p])
    X = R[tuple(sl)].reshape(n1, t[0], n2, t[1], n1, t[2], n2, t[3])
    i1 = np.indices((n1, n1)).reshape(2, -1)
    i2 = np.indices((n2, n2)).reshape(2, -1)
    Y = X[i1[0], :, :, :, i1[1]]               # (r1, t1f, n2, t2f, t1g, n2, t2g)
    Y = Y[:, :, i2[0], :, :, i2[1]]            # (r2, r1, t1f, t2f, t1g, t2g)
    return np.transpose(Y, (1, 0, 2, 4, 3, 5))


def _variants(gr: _Group, tup: np.ndarray, slot):
    """(sign, cube index per slot) for the direct evaluation of one group."""
    rows = gr.direct_rows
    full = (tup[rows, 0], tup[rows, 1])
    typ = gr.key[0]
    if typ == "Q":
        tied = (tup[rows, slot], tup[rows, slot])
        return [(1.0, full), (-1.0, tied)]
    if typ == "P":
        return [(1.0, (tup[rows, slot], tup[rows, slot]))]
    return [(1.0, full)]


def assemble_bi_representation(T: BiDiscreteOperator, sigmas=(None, None), funcs=None) -> BiRepresentationBundle:
    """Bi-parameter model-operator expansion of a linear operator in one grid pair.

    Each parameter is expanded as in the one-parameter case (mean, paraproduct, main
    bracket bands, remainder bands and diagonal); the pieces are the products of the two
    expansions. Gated bands carry 2^{d_i} on the k-good rows. With funcs = (f, g) the
    ungated per-tuple sums by kind are computed alongside as an independent route.
    """
    g1 = sigmas[0] if isinstance(sigmas[0], DyadicGrid) else DyadicGrid(T.d[0], T.L[0], sigmas[0])
    g2 = sigmas[1] if isinstance(sigmas[1], DyadicGrid) else DyadicGrid(T.d[1], T.L[1], sigmas[1])
    grid = ProductGrid(g1, g2)
    N1, N2 = T.N
    B1, w1 = _stacked_basis(g1)
    B2, w2 = _stacked_basis(g2)
    R = np.tensordot(T.tensor, B1, axes=([0], [0]))       # (x2, y1, y2, i)
    R = np.tensordot(R, B2, axes=([0], [0]))              # (y1, y2, i, j)
    R = np.tensordot(R, B1, axes=([0], [0]))              # (y2, i, j, k)
    R = np.tensordot(R, B2, axes=([0], [0])) / (N1 * N2) ** 2
    entries = [[(lev, kinds) + _param_groups(g, lev, kinds) for lev, kinds in _param_entries(g)] for g in (g1, g2)]
    tabs = None
    if funcs is not None:
        tabs = [FunctionTables((g1, g2), grid.as_array(x)) for x in funcs]
    direct: dict = {}
    acc: dict = {}
    probes: dict = {}
    for l1, k1, gr1, tup1 in entries[0]:
        for l2, k2, gr2, tup2 in entries[1]:
            P = _bi_pattern(R, (g1, g2), (w1, w2), (l1, l2), (k1, k2))
            eshape = [P.shape[2 + a] for a, (p, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1)))
                      if (k1, k2)[p][j] == "h"]
            Pr = P.reshape(P.shape[:2] + tuple(eshape))
            if tabs is not None:
                F = tabs[0].level_table((l1, l2), (k1[0], k2[0]))
                G = tabs[1].level_table((l1, l2), (k1[1], k2[1]))
            for a in gr1:
                c1 = _component(a.key)
                for b in gr2:
                    c2 = _component(b.key)
                    kind = _kind_name(c1, c2)
                    if tabs is not None:
                        tot = 0.0
                        s1 = k1.index("h") if a.key[0] in ("P", "Q") else None
                        s2 = k2.index("h") if b.key[0] in ("P", "Q") else None
                        for sg1, (i1f, i1g) in _variants(a, tup1, s1):
                            for sg2, (i2f, i2g) in _variants(b, tup2, s2):
                                Fv = F[i1f[:, None], :, i2f[None, :], :]   # (r1, r2, t1f, t2f)
                                Gv = G[i1g[:, None], :, i2g[None, :], :]
                                Pv = P[np.ix_(a.direct_rows, b.direct_rows)]
                                tot += sg1 * sg2 * float(np.einsum("abwxyz,abwy,abxz->", Pv, Fv, Gv))
                        direct[kind] = direct.get(kind, 0.0) + tot
                    if len(a.rows) == 0 or len(b.rows) == 0:
                        continue
                    keys = (a.key, b.key)
                    if keys not in probes:
                        probes[keys] = BiOperatorSpec(grid, 1, (c1, c2), {}, validate=False)
                    top = (a.top, b.top)
                    store = acc.setdefault(keys, {})
                    if top not in store:
                        store[top] = np.zeros(probes[keys].shape(*top))
                    X = a.weight * b.weight * Pr[np.ix_(a.rows, b.rows)]
                    idx = (a.K[:, None], b.K[None, :], a.offs[0][:, None], b.offs[0][None, :],
                           a.offs[1][:, None], b.offs[1][None, :])
                    np.add.at(store[top], idx, X)
    pieces = []
    for keys, coef in acc.items():
        spec = probes[keys]
        spec = BiOperatorSpec(grid, 1, spec.comps, coef, validate=False)
        gate = (float(1 << g1.d) if keys[0][4] else 1.0) * (float(1 << g2.d) if keys[1][4] else 1.0)
        pieces.append(BiPiece(spec.kind, keys, spec, gate))
    return BiRepresentationBundle(grid, pieces, direct)


@dataclass
class BiRepresentationReport:
    per_grid_residual: float      # max over grid pairs of |ungated direct sum - <T f, g>|
    expectation_residual: float   # |E gated assembly - <T f, g>|
    kind_residuals: dict          # kind -> |E direct kind sum - E gated kind sum|
    value: float
    grids: int
    audit: dict                   # kind -> {(k1, k2): max normalized coefficient / (omega1 omega2)}
    mode: str


def _omega_at(omega, k: int) -> float:
    return 1.0 if omega is None or k == 0 else float(omega(2.0 ** -k))


def verify_bi_representation(T: BiDiscreteOperator, mode: str = "enumerate", seed: int = 0, funcs=None,
                             count: int = 16, cap: int = DEFAULT_ENUMERATION_CAP, audit: bool = False,
                             omega=None) -> BiRepresentationReport:
    """Check the bi-parameter expansion of <T f, g> per grid pair and in expectation.

    Enumeration runs over all 2^{d1 L1 + d2 L2} pairs of shift words and needs that count
    within `cap`. The audit divides each gated piece's normalization ratio by
    omega1(2^{-k1}) omega2(2^{-k2}); it is off by default because the product-BMO checks
    of the full paraproducts dominate the cost.
    """
    (d1, d2), (L1, L2) = T.d, T.L
    if mode == "enumerate":
        if (1 << (d1 * L1 + d2 * L2)) > cap:
            raise ConfigurationError(f"enumeration of {1 << (d1 * L1 + d2 * L2)} grid pairs exceeds the cap {cap}")
        pairs = list(itertools.product(enumerate_shift_words(d1, L1, cap), enumerate_shift_words(d2, L2, cap)))
    elif mode == "sample":
        pairs = list(zip(sample_shift_words(d1, L1, count, seed), sample_shift_words(d2, L2, count, seed + 1)))
    else:
        raise ConfigurationError(f"mode must be 'enumerate' or 'sample', got {mode!r}")
    N1, N2 = T.N
    if funcs is None:
        rng = np.random.default_rng(seed)
        funcs = []
        for _ in range(2):
            v = rng.standard_normal((N1, N2))
            funcs.append(v / np.sqrt(np.mean(v**2)))
    f, g = (np.reshape(x, (N1, N2)) for x in funcs)
    value = T.form(f, g)
    omega = omega or T.omega
    per_grid = 0.0
    gated_total = 0.0
    kind_direct: dict = {}
    kind_gated: dict = {}
    table: dict = {}
    for s1, s2 in pairs:
        b = assemble_bi_representation(T, (s1, s2), (f, g))
        per_grid = max(per_grid, abs(sum(b.direct.values()) - value))
        for kd, v in b.direct.items():
            kind_direct[kd] = kind_direct.get(kd, 0.0) + v
        tabs = [FunctionTables(b.grid.factors, x) for x in (f, g)]
        for p in b.pieces:
            v = p.spec.to_form().evaluate(tabs)
            gated_total += v
            kind_gated[p.kind] = kind_gated.get(p.kind, 0.0) + v
            if audit and all(k[4] or k[1] == 0 for k in p.keys):
                r = p.spec.normalization_ratio() / p.weight
                r /= _omega_at(omega[0], p.bands[0]) * _omega_at(omega[1], p.bands[1])
                slot = table.setdefault(p.kind, {})
                slot[p.bands] = max(slot.get(p.bands, 0.0), r)
    G = len(pairs)
    kinds = sorted(set(kind_direct) | set(kind_gated))
    kres = {k: abs(kind_direct.get(k, 0.0) - kind_gated.get(k, 0.0)) / G for k in kinds}
    return BiRepresentationReport(per_grid, abs(gated_total / G - value), kres, value, G, table, mode)


# ----------------------------------------------------------------- norm experiments

def _adversarial_component(k: int):
    """k = 0 is the Haar multiplier h_K x h_K, otherwise the modified component Q_k."""
    return shift_component((0, 0), ("h", "h")) if k == 0 else modified_component(k, 1)


def adversarial_bi_shift(grid: ProductGrid, k, seed: int, kind: str = "Qk") -> BiOperatorSpec:
    """Linear bi-parameter operators at the normalization ceiling with seeded signs.

    "Qk": a_{K,I,J} = eps_{K,J} |I|/|K| in each parameter with signs that do not factorize,
    so Q f = sum eps_{K,J} |J|^{1/2} <P_{K,k-1} f>_J h_J; k_i = 0 gives Haar multipliers.
    "Si": standard shifts of complexity (i, i) in both parameters with rank-one sign blocks.
    """
    g1, g2 = grid.factors
    if g1.d != 1 or g2.d != 1:
        raise ConfigurationError("the adversarial families are built for d = 1")
    rng = np.random.default_rng(seed)
    k1, k2 = (int(x) for x in k)
    coef = {}
    if kind == "Qk":
        comps = (_adversarial_component(k1), _adversarial_component(k2))
        layout = BiOperatorSpec(grid, 1, comps, {}, validate=False)
        O1, O2 = 1 << k1, 1 << k2
        for l1 in range(g1.L - k1):
            for l2 in range(g2.L - k2):
                n1, n2 = g1.n_cubes(l1), g2.n_cubes(l2)
                # signs depend on K and the output pair J only, axes (nK1, nK2, O1f, O2f, O1g, O2g)
                eps = rng.choice([-1.0, 1.0], size=(n1, n2, 1, 1, O1, O2))
                blk = np.broadcast_to(eps * 2.0 ** (-k1 - k2), (n1, n2, O1, O2, O1, O2))
                coef[(l1, l2)] = blk.reshape(layout.shape(l1, l2)).copy()
        return BiOperatorSpec(grid, 1, comps, coef)
    if kind == "Si":
        i = k1
        comps = (shift_component((i, i), ("h", "h")), shift_component((i, i), ("h", "h")))
        for l1 in range(g1.L - i):
            for l2 in range(g2.L - i):
                n1, n2 = g1.n_cubes(l1), g2.n_cubes(l2)
                O = 1 << i
                b = _shift_bound(comps[0], 1, 1, l1) * _shift_bound(comps[1], 1, 1, l2)
                e1 = rng.choice([-1.0, 1.0], size=(n1, n2, O, O, 1, 1))
                e2 = rng.choice([-1.0, 1.0], size=(n1, n2, 1, 1, O, O))
                coef[(l1, l2)] = (b * e1 * e2)[..., None, None, None, None]
        return BiOperatorSpec(grid, 1, comps, coef)
    raise ConfigurationError(f"unknown adversarial family {kind!r}")


def power_weight(grid: ProductGrid, alpha=(0.5, 0.5)) -> np.ndarray:
    """w(x) = |x1 - 1/2|^a1 |x2 - 1/2|^a2 at cell centres (d = 1), a bi-parameter A_2 weight for |a_i| < 1."""
    out = np.ones(grid.shape)
    for axis, (g, a) in enumerate(zip(grid.factors, alpha)):
        if g.d != 1:
            raise ConfigurationError("power weights are built for d = 1")
        x = np.abs((np.arange(g.n_cells) + 0.5) / g.n_cells - 0.5) ** a
        out = out * (x[:, None] if axis == 0 else x[None, :])
    return out


def weighted_norm(spec, w=None, seed: int = 0) -> float:
    """||T||_{L^2(w) -> L^2(w)} as the top singular value of W^{1/2} T W^{-1/2}."""
    from scipy.sparse.linalg import LinearOperator, svds
    from .model_ops import operator_norm

    if w is None:
        return operator_norm(spec, seed=seed).value
    form = spec.to_form() if hasattr(spec, "to_form") else spec
    s = np.sqrt(np.asarray(w, dtype=float).reshape(-1))
    base = form.linear_operator()
    op = LinearOperator(base.shape, matvec=lambda x: s * base.matvec(np.ravel(x) / s),
                        rmatvec=lambda y: base.rmatvec(s * np.ravel(y)) / s, dtype=float)
    v0 = np.random.default_rng(seed).normal(size=op.shape[1])
    return float(svds(op, k=1, v0=v0, return_singular_vectors=False, maxiter=20000)[0])


def bi_norm_experiments(kind: str = "Qk", k_range=range(0, 5), p: float = 2.0, weight=None, seed: int = 0,
                        L=(7, 7), diagonal: bool = False) -> list[dict]:
    """Norms of seeded bi-parameter operators against their predicted law.

    kind "Qk": adversarial Q_{k1,k2}, law sqrt(k1+1) sqrt(k2+1); "Si": adversarial standard
    shifts S_{(i,i),(i,i)}, law 1; "Qpi", "Spi", "Pi": seeded operators filled to their
    normalization, laws sqrt(k+1), 1 and 1. weight = None or (a1, a2) for a power weight.
    diagonal=True restricts "Qk" to k1 = k2.
    """
    if p != 2:
        raise ConfigurationError("bi-parameter experiments run at p = 2")
    grid = ProductGrid(DyadicGrid(1, L[0]), DyadicGrid(1, L[1]))
    w = power_weight(grid, weight) if weight is not None else None
    ks = list(k_range)
    if kind == "Qk":
        pairs = [(k, k) for k in ks] if diagonal else list(itertools.product(ks, ks))
    elif kind == "Pi":
        pairs = [(0, 0)]
    else:
        pairs = [(k, 0) for k in ks]
    rows = []
    for k1, k2 in pairs:
        s = seed * 1000 + 31 * k1 + 7 * k2
        if kind in ("Qk", "Si"):
            spec = adversarial_bi_shift(grid, (k1, k2), s, kind)
        elif kind == "Qpi":
            comps = (modified_component(k1, 1) if k1 else shift_component((0, 0), ("h", "h")), paraproduct_component(1))
            spec = random_bi_spec(grid, comps, 1, s)
        elif kind == "Spi":
            spec = random_bi_spec(grid, (shift_component((k1, k1), ("h", "h")), paraproduct_component(1)), 1, s)
        elif kind == "Pi":
            spec = random_bi_spec(grid, (paraproduct_component(1), paraproduct_component(1)), 1, s)
        else:
            raise ConfigurationError(f"unknown kind {kind!r}")
        norm = weighted_norm(spec, w, seed=s)
        law = np.sqrt((k1 + 1.0) * (k2 + 1.0)) if kind == "Qk" else (np.sqrt(k1 + 1.0) if kind == "Qpi" else 1.0)
        rows.append({"k1": k1, "k2": k2, "norm": norm, "law": float(law), "ratio": norm / law})
    return rows
