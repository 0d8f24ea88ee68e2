"""Discrete Calderon-Zygmund forms on the torus and their expansion into model operators.

A multilinear operator T of arity n on the finest cells of [0,1)^d is stored as a
tensor A in slot order, so that

    <T(f_1, ..., f_n), f_{n+1}> = N^{-(n+1)} sum_x A[x_1, ..., x_{n+1}] prod_j f_j(x_j).

For a dyadic grid the form splits exactly, using E_{l+1} = E_l + D_l in every slot,
into the coarse mean term plus, for every level l and every pattern of E/D choices
with at least one D:

* one D in slot j: a bracket sum (grouped into bands k by the largest cube offset)
  plus the paraproduct with symbol T^{j*}(1, ..., 1);
* two or more D: the diagonal (all cubes equal) and the off-diagonal bands.

Band k collects the offsets with max |m| in (2^{k-3}, 2^{k-2}], k >= 2. Restricting a
band to reference cubes that are k-good (which makes the whole tuple fit inside the
k-th parent K) and multiplying by 2^d gives the model operators Q_k and S_{k..k}; in
expectation over the grid translations this reproduces the ungated band exactly.
On the torus the outermost band at level l has k = l + 1, with no k-th parent. Those
terms are kept ungated, as shifts of complexity l under the whole torus.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .forms import FunctionTables, MultilinearForm, SlotSpec, Term, axis_synthesis, axis_tables
from .grid import (
    DEFAULT_ENUMERATION_CAP,
    ConfigurationError,
    DyadicGrid,
    ResolutionError,
    as_values,
    enumerate_shift_words,
    goodness_mask,
    sample_shift_words,
)
from .model_ops import ModifiedShiftSpec, ParaproductSpec, StandardShiftSpec, _flat, as_form
from .moduli import Modulus, dini_dyadic_sum, representation_weight_sum
from .weights import bmo_seq_norm

AUDIT_CAP = 1 << 26


# ----------------------------------------------------------------- geometry

def cell_centers(d: int, L: int) -> np.ndarray:
    s = 1 << L
    return (np.indices((s,) * d).reshape(d, -1).T + 0.5) / s


def torus_delta(a, b):
    """Signed torus difference a - b per axis, in [-1/2, 1/2)."""
    return (np.asarray(a) - np.asarray(b) + 0.5) % 1.0 - 0.5


def odd_chord(a, b):
    """sin(2 pi (a - b)) / (2 pi): smooth, 1-periodic and odd, close to a - b near the diagonal."""
    return np.sin(2 * np.pi * (np.asarray(a) - np.asarray(b))) / (2 * np.pi)


def even_chord(a, b):
    """|sin(pi (a - b))| / pi: a 1-periodic distance comparable to the torus distance."""
    return np.abs(np.sin(np.pi * (np.asarray(a) - np.asarray(b)))) / np.pi


# ----------------------------------------------------------------- kernels

@dataclass
class KernelSpec:
    """Kernel values K(x_{n+1}, x_1, ..., x_n) at cell centres; the full diagonal is zero."""

    n: int
    d: int
    L: int
    values: np.ndarray
    family: str = "custom"
    omega: Modulus | None = None

    def __post_init__(self):
        N = 1 << (self.d * self.L)
        self.values = np.array(self.values, dtype=float)
        if self.values.shape != (N,) * (self.n + 1):
            raise ConfigurationError(f"kernel shape {self.values.shape} != {(N,) * (self.n + 1)}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("kernel values must be finite")
        diag = np.arange(N)
        self.values[(diag,) * (self.n + 1)] = 0.0


def kernel_family(name: str, n: int, d: int, L: int, seed: int = 0, gamma: float = 0.5) -> KernelSpec:
    """Built-in periodized kernels.

    hilbert   n=1, d=1: cot(pi (y - x)), smooth off the diagonal (omega = t).
    riesz     n=1: s_1 / r^{d+1} with s = sin(2 pi (y - x)) / 2 pi and r the even chord distance.
    bilinear  n=2, d=1: (a + b) / (r_1 + r_2)^3 with odd chords a, b and even chords r_j of y - x_j.
    alternating  n=1, d=1: (-1)^{cell(y)} N^{-gamma} g^{-1-gamma}, g = max(|y - x| - 1/N, 1/N)
              the gap between the two cells. The sign flip between neighbouring cells makes
              omega = t^gamma sharp at every distance while the size stays below 1/|y - x|.
    random    seeded Gaussian values times the size bound (sum |y - x_j|)^{-dn}.
    """
    X = cell_centers(d, L)
    N = X.shape[0]
    if name == "hilbert":
        if (n, d) != (1, 1):
            raise ConfigurationError("hilbert kernel needs n=1, d=1")
        t = torus_delta(X[:, 0][:, None], X[:, 0][None, :])
        with np.errstate(divide="ignore"):
            K = np.where(t != 0, 1.0 / np.tan(np.pi * np.where(t != 0, t, 1.0)), 0.0)
        return KernelSpec(1, 1, L, K, name, Modulus("power", (1.0,)))
    if name == "riesz":
        if n != 1:
            raise ConfigurationError("riesz kernel needs n=1")
        t = odd_chord(X[:, None, 0], X[None, :, 0])
        r = np.sqrt((even_chord(X[:, None, :], X[None, :, :]) ** 2).sum(-1))
        K = np.where(r > 0, t / np.where(r > 0, r, 1.0) ** (d + 1), 0.0)
        return KernelSpec(1, d, L, K, name, Modulus("power", (1.0,)))
    if name == "bilinear":
        if (n, d) != (2, 1):
            raise ConfigurationError("bilinear kernel needs n=2, d=1")
        x = X[:, 0]
        a = odd_chord(x[:, None, None], x[None, :, None])
        b = odd_chord(x[:, None, None], x[None, None, :])
        s = even_chord(x[:, None, None], x[None, :, None]) + even_chord(x[:, None, None], x[None, None, :])
        K = np.where(s > 0, (a + b) / np.where(s > 0, s, 1.0) ** 3, 0.0)
        return KernelSpec(2, 1, L, K, name, Modulus("power", (1.0,)))
    if name == "alternating":
        if (n, d) != (1, 1):
            raise ConfigurationError("alternating kernel needs n=1, d=1")
        x = X[:, 0]
        D = np.abs(torus_delta(x[:, None], x[None, :]))
        gap = np.maximum(D - 1.0 / N, 1.0 / N)
        sign = np.where(np.arange(N) % 2 == 0, 1.0, -1.0)[:, None]
        K = np.where(D > 0, sign * N**-gamma * gap ** (-1.0 - gamma), 0.0)
        return KernelSpec(1, 1, L, K, name, Modulus("power", (gamma,)))
    if name == "random":
        rng = np.random.default_rng(seed)
        Xs = [X[(slice(None),) + (None,) * j] for j in range(n + 1)]
        dist = sum(np.sqrt((torus_delta(Xs[0][(slice(None),) + (None,) * n],
                                        X.reshape((1,) * (j + 1) + (N,) + (1,) * (n - j - 1) + (d,))) ** 2).sum(-1))
                   for j in range(n))
        with np.errstate(divide="ignore"):
            K = np.where(dist > 0, rng.standard_normal((N,) * (n + 1)) / np.where(dist > 0, dist, 1.0) ** (d * n), 0.0)
        return KernelSpec(n, d, L, K, name, Modulus("power", (1.0,)))
    raise ConfigurationError(f"unknown kernel family {name!r}")


# ----------------------------------------------------------------- operators

@dataclass
class DiscreteOperator:
    """Operator tensor in slot order (x_1, ..., x_n, x_{n+1})."""

    n: int
    d: int
    L: int
    tensor: np.ndarray
    omega: Modulus | None = None
    name: str = "operator"

    def __post_init__(self):
        N = 1 << (self.d * self.L)
        self.tensor = np.asarray(self.tensor, dtype=float)
        if self.tensor.shape != (N,) * (self.n + 1):
            raise ConfigurationError(f"operator tensor shape {self.tensor.shape} != {(N,) * (self.n + 1)}")

    @property
    def N(self) -> int:
        return 1 << (self.d * self.L)

    @classmethod
    def from_kernel(cls, K: KernelSpec, diagonal=None) -> "DiscreteOperator":
        A = np.moveaxis(K.values, 0, -1).copy()
        if diagonal is not None:
            idx = np.arange(A.shape[0])
            A[(idx,) * (K.n + 1)] += np.asarray(diagonal, dtype=float)
        return cls(K.n, K.d, K.L, A, K.omega, K.family)

    @classmethod
    def from_matrix(cls, M, d: int, L: int, name: str = "matrix") -> "DiscreteOperator":
        """Linear operator with cell values (Tf)(y) = sum_x M[y, x] f(x)."""
        M = np.asarray(M, dtype=float)
        return cls(1, d, L, M.shape[0] * M.T, None, name)

    def form(self, *funcs) -> float:
        return czo_pairing(self, *funcs)

    def apply(self, *funcs) -> np.ndarray:
        """Cell values of T(f_1, ..., f_n)."""
        R = self.tensor
        for f in funcs:
            R = np.tensordot(as_values(f), R, axes=([0], [0]))
        return R / self.N ** len(funcs)

    def adjoint(self, j: int) -> "DiscreteOperator":
        """T^{j*}: slot j and the output slot exchanged (1-based j, j = 0 is T itself)."""
        if j == 0:
            return self
        return DiscreteOperator(self.n, self.d, self.L, np.swapaxes(self.tensor, j - 1, self.n), self.omega, f"{self.name}^{j}*")


def czo_pairing(T: DiscreteOperator, *funcs) -> float:
    if len(funcs) != T.n + 1:
        raise ConfigurationError(f"expected {T.n + 1} functions, got {len(funcs)}")
    R = T.tensor
    for f in funcs:
        R = np.tensordot(as_values(f), R, axes=([0], [0]))
    return float(R) / T.N ** (T.n + 1)


def _basis(grid: DyadicGrid, level: int, kind: str) -> np.ndarray:
    """Cell values of the level-l Haar functions of one kind, shape (N, n_l * t)."""
    n_l = grid.n_cubes(level)
    t = 1 if kind == "h0" else (1 << grid.d) - 1
    C = np.eye(n_l * t).reshape(n_l, t, n_l * t)
    return axis_synthesis(grid, level, kind, C)


def pattern_tensor(T: DiscreteOperator, grid: DyadicGrid, level: int, kinds: tuple) -> np.ndarray:
    """P[I_1, ..., I_{n+1}, eta...] = <T(u_{I_1}, ...), u_{I_{n+1}}> with u = h^0 or h per slot.

    Trailing eta axes follow the cancellative slots in slot order.
    """
    n_l = grid.n_cubes(level)
    R = T.tensor
    ts = []
    for kd in kinds:
        B = _basis(grid, level, kd)
        ts.append(B.shape[1] // n_l)
        R = np.tensordot(R, B, axes=([0], [0]))
    R = R / T.N ** (T.n + 1)
    shape = []
    for t in ts:
        shape += [n_l, t]
    R = R.reshape(shape)
    m = len(kinds)
    perm = [2 * j for j in range(m)] + [2 * j + 1 for j in range(m) if kinds[j] == "h"]
    R = np.transpose(R, perm + [2 * j + 1 for j in range(m) if kinds[j] != "h"])
    return R.reshape(R.shape[: m + sum(kd == "h" for kd in kinds)])


def symbol_coefficients(T: DiscreteOperator, grid: DyadicGrid, j: int) -> list[np.ndarray]:
    """<T(1, ..., h_I, ..., 1), 1> with h_I in slot j (0-based), per level, shape (n_l, 2^d - 1).

    Slot j = n gives the Haar coefficients of T(1, ..., 1).
    """
    R = np.moveaxis(T.tensor, j, 0)
    for _ in range(T.n):
        R = R.sum(axis=1)
    R = R / T.N ** T.n
    _, h = axis_tables(grid, R)
    return [a for a in h]


# ----------------------------------------------------------------- constants

@dataclass
class T1Constants:
    bmo: list          # per slot j, sup over grids of the dyadic BMO norm of T^{j*}1
    wbp: float         # sup |<T(1_I, ..., 1_I), 1_I>| / |I|
    diagonal: list     # per level, max |<T(1_I, ..., 1_I), 1_I>| / |I|
    grids: int


def t1_constants(T: DiscreteOperator, mode: str = "enumerate", count: int = 16, seed: int = 0,
                 cap: int = DEFAULT_ENUMERATION_CAP) -> T1Constants:
    words = _grid_words(T.d, T.L, mode, count, seed, cap)
    bmo = [0.0] * (T.n + 1)
    diag = [0.0] * (T.L + 1)
    for s in words:
        g = DyadicGrid(T.d, T.L, s)
        for j in range(T.n + 1):
            bmo[j] = max(bmo[j], bmo_seq_norm(symbol_coefficients(T, g, j), g))
        for lev in range(T.L + 1):
            B = _basis(g, lev, "h0")  # h0_I = |I|^{-1/2} 1_I
            R = T.tensor
            for _ in range(T.n + 1):
                R = np.tensordot(R, B, axes=([0], [0]))
            idx = np.arange(g.n_cubes(lev))
            vals = R[(idx,) * (T.n + 1)] / T.N ** (T.n + 1)
            size = 2.0 ** (-T.d * lev)
            # <T(1_I..), 1_I> = |I|^{(n+1)/2} * vals
            diag[lev] = max(diag[lev], float(np.max(np.abs(vals))) * size ** ((T.n + 1) / 2.0) / size)
    return T1Constants(bmo, max(diag), diag, len(words))


@dataclass
class RegularityAudit:
    size: float          # C_K
    holder: list         # per slot j = 0..n, sup of the continuity ratio
    omega: Modulus
    sampled: bool


def kernel_regularity_audit(K: KernelSpec, omega: Modulus | None = None, cap: int = AUDIT_CAP,
                            seed: int = 0) -> RegularityAudit:
    """Size constant and per-slot omega-continuity multipliers on cell centres.

    Size: |K(x)| (sum_m |x_{n+1} - x_m|)^{dn}. Continuity in slot j: moving x_j to x'_j with
    |x_j - x'_j| <= max_m |x_{n+1} - x_m| / 2 changes K by at most
    C omega(|x_j - x'_j| / sum_m |x_{n+1} - x_m|) (sum_m |x_{n+1} - x_m|)^{-dn}.
    Slot index n is the output variable. When N^{n+2} exceeds cap, tuples are sampled.
    """
    if K.n not in (1, 2):
        raise ConfigurationError("the regularity audit handles n = 1 and n = 2")
    omega = omega or K.omega or Modulus("power", (1.0,))
    X = cell_centers(K.d, K.L)
    N = X.shape[0]
    n, d = K.n, K.d
    V = K.values  # axis 0 is the output variable
    sampled = N ** (n + 2) > cap
    rng = np.random.default_rng(seed)
    if sampled:
        m = max(1, cap // N)
        tuples = rng.integers(0, N, size=(m, n + 1))
    else:
        tuples = np.indices((N,) * (n + 1)).reshape(n + 1, -1).T
    out_pt = X[tuples[:, 0]]

    def dists(tp):
        y = X[tp[:, 0]]
        ds = [np.sqrt((torus_delta(y, X[tp[:, j]]) ** 2).sum(-1)) for j in range(1, n + 1)]
        return sum(ds), np.max(ds, axis=0)

    S, M = dists(tuples)
    off = S > 0
    tuples, S, M, out_pt = tuples[off], S[off], M[off], out_pt[off]
    vals = V[tuple(tuples.T)]
    size = float(np.max(np.abs(vals) * S ** (d * n)))
    holder = []
    # slot order: output variable last, matching the operator slot convention
    for axis in list(range(1, n + 1)) + [0]:
        best = 0.0
        for shift in range(1, N):
            moved = tuples.copy()
            moved[:, axis] = (moved[:, axis] + shift) % N
            step = np.sqrt((torus_delta(X[moved[:, axis]], X[tuples[:, axis]]) ** 2).sum(-1))
            ok = step <= 0.5 * M
            if not np.any(ok):
                continue
            t, s = moved[ok], S[ok]
            diff = np.abs(V[tuple(t.T)] - vals[ok])
            w = omega(np.minimum(step[ok] / s, 1.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(w > 0, diff * s ** (d * n) / w, 0.0)
            best = max(best, float(np.max(r)))
        holder.append(best)
    return RegularityAudit(size, holder, omega, sampled)


# ----------------------------------------------------------------- assembly

def _grid_words(d, L, mode, count, seed, cap):
    if mode == "enumerate":
        return enumerate_shift_words(d, L, cap)
    if mode == "sample":
        return sample_shift_words(d, L, count, seed)
    raise ConfigurationError(f"mode must be 'enumerate' or 'sample', got {mode!r}")


def _centered(x: np.ndarray, level: int) -> np.ndarray:
    if level == 0:
        return np.zeros_like(x)
    half = 1 << (level - 1)
    return (x + half - 1) % (1 << level) - (half - 1)


def _bands(max_offset: np.ndarray) -> np.ndarray:
    """Band index: 0 on the diagonal, else 2 + ceil(log2 max|m|)."""
    out = np.zeros(max_offset.shape, dtype=np.int64)
    nz = max_offset > 0
    out[nz] = 2 + np.ceil(np.log2(max_offset[nz]) - 1e-12).astype(np.int64)
    return out


def patterns(n: int):
    """All E/D patterns with at least one D, as kind tuples."""
    for bits in itertools.product(("h0", "h"), repeat=n + 1):
        if "h" in bits:
            yield bits


@dataclass
class Piece:
    kind: str         # "mean", "paraproduct", "main", "remainder", "diagonal"
    pattern: tuple    # slot kinds
    k: int            # band (0 for diagonal, paraproduct and mean)
    gated: bool       # True when built from k-good references with the 2^d factor
    spec: object
    weight: float = 1.0

    def form(self) -> MultilinearForm:
        return as_form(self.spec).scaled(self.weight)


@dataclass
class LevelData:
    level: int
    pattern: tuple
    ref: int
    tuples: np.ndarray   # (n_tup, n+1) cube indices
    band: np.ndarray     # (n_tup,)
    P: np.ndarray        # (n_tup, E...)


@dataclass
class RepresentationBundle:
    grid: DyadicGrid
    n: int
    k_max: int
    pieces: list
    mean_value: float                      # <T(1, ..., 1), 1>
    symbols: list                          # per slot: list over levels of T^{j*}1 Haar coefficients
    phi_ratio: dict = field(default_factory=dict)   # band -> max |phi| / normalization bound
    rem_ratio: dict = field(default_factory=dict)
    data: list = field(default_factory=list)

    def bands(self) -> dict:
        out = {}
        for p in self.pieces:
            out.setdefault(p.k, []).append(p)
        return out

    def form(self) -> MultilinearForm:
        parts = [p.form() for p in self.pieces]
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total

    def pairing(self, funcs, select=None) -> float:
        vals = [as_values(f) for f in funcs]
        return sum(p.form().evaluate(vals) for p in self.pieces if select is None or select(p))

    def tail(self) -> list:
        return [p for p in self.pieces if p.k > self.k_max]


def _mean_form(grid: DyadicGrid, n: int, value: float) -> MultilinearForm:
    slot = SlotSpec((0,), ("h0",), (10,), (None,))
    return MultilinearForm(grid, n + 1, [Term({(0,): np.full((1, 1), value)}, (10,), (slot,) * (n + 1))])


def tuple_geometry(grid: DyadicGrid, level: int, kinds: tuple):
    """(reference slot, all cube tuples at the level, band of each tuple)."""
    n_l = grid.n_cubes(level)
    m = len(kinds)
    tuples = np.indices((n_l,) * m).reshape(m, -1).T
    ref = max(j for j in range(m) if kinds[j] == "h")
    q = np.stack(np.unravel_index(np.arange(n_l), (1 << level,) * grid.d), axis=1)
    M = np.zeros(tuples.shape[0], dtype=np.int64)
    for j in range(m):
        off = _centered(q[tuples[:, j]] - q[tuples[:, ref]], level)
        M = np.maximum(M, np.abs(off).max(axis=1))
    return ref, tuples, _bands(M)


def level_data(T: DiscreteOperator, grid: DyadicGrid, level: int, kinds: tuple) -> LevelData:
    P = pattern_tensor(T, grid, level, kinds)
    ref, tuples, band = tuple_geometry(grid, level, kinds)
    Pf = P.reshape((tuples.shape[0],) + P.shape[len(kinds):])
    return LevelData(level, kinds, ref, tuples, band, Pf)


def assemble_representation(T: DiscreteOperator, sigma=None, k_max: int | None = None, cache=None) -> RepresentationBundle:
    """Model-operator expansion of T in the grid with shift word sigma.

    Pieces: the mean term, one paraproduct per slot, the per-band main terms Q_k (slot j
    cancellative), the remainder shifts S_{k..k} for every pattern with two or more
    cancellative slots, and their diagonals. Band pieces with k <= level are gated by
    k-goodness with weight 2^d; outermost torus bands stay ungated.
    """
    g = sigma if isinstance(sigma, DyadicGrid) else DyadicGrid(T.d, T.L, sigma)
    if (g.d, g.L) != (T.d, T.L):
        raise ConfigurationError("grid and operator resolutions differ")
    L, d, n = g.L, g.d, T.n
    if k_max is None:
        k_max = L
    if not 2 <= k_max <= L:
        raise ResolutionError(f"k_max must lie in [2, {L}]")
    m = n + 1
    nd = (1 << d) - 1
    mean_value = czo_pairing(T, *([np.ones(T.N)] * m))
    pieces = [Piece("mean", ("h0",) * m, 0, False, _mean_form(g, n, mean_value))]
    symbols = [symbol_coefficients(T, g, j) for j in range(m)]
    for j in range(m):
        coef = {lev: symbols[j][lev] for lev in range(L)}
        pat = tuple("h" if i == j else "h0" for i in range(m))
        pieces.append(Piece("paraproduct", pat, 0, False, ParaproductSpec(g, n, coef, slot=j, validate=False)))

    gated: dict = {}   # (pattern, k) -> {K level: array}
    wrap: dict = {}    # (pattern, l) -> array at top level 0
    diag: dict = {}    # pattern -> {level: array}
    phi_ratio: dict = {}
    rem_ratio: dict = {}
    data = []
    for lev in range(L):
        for kinds in patterns(n):
            ld = cache[(lev, kinds)] if cache is not None and (lev, kinds) in cache else level_data(T, g, lev, kinds)
            data.append(ld)
            nh = sum(kd == "h" for kd in kinds)
            main = nh == 1
            tup, band, P = ld.tuples, ld.band, ld.P
            esh = (nd,) * nh
            dmask = band == 0
            if not main:
                arr = np.zeros((g.n_cubes(lev),) + (1,) * m + esh)
                arr[(tup[dmask, 0],) + (0,) * m] = P[dmask]
                diag.setdefault(kinds, {})[lev] = arr
            for k in np.unique(band[~dmask]):
                k = int(k)
                sel = band == k
                if k <= lev:
                    good = goodness_mask(g, lev, k)[tup[:, ld.ref]]
                    sel = sel & good
                    top = lev - k
                    Kidx = g.parents(lev, k)[tup[sel, ld.ref]]
                    pos = g.position_in_parent(lev, k)
                    weight = float(1 << d)
                    store = gated.setdefault((kinds, k), {})
                else:
                    top, Kidx = 0, np.zeros(int(sel.sum()), dtype=np.int64)
                    pos = g.position_in_parent(lev, lev) if lev else np.zeros((1, d), dtype=np.int64)
                    k_eff = lev
                    weight = 1.0
                    store = None
                depth = k if k <= lev else lev
                O = 1 << (d * depth)
                if store is not None:
                    arr = store.setdefault(top, np.zeros((g.n_cubes(top),) + (O,) * m + esh))
                else:
                    arr = wrap.setdefault((kinds, k_eff), np.zeros((1,) + (O,) * m + esh))
                idx = (Kidx,) + tuple(_flat(pos[tup[sel, j]], depth) for j in range(m))
                arr[idx] = weight * P[sel]
                if k <= lev and np.any(sel):
                    bound = 2.0 ** (-d * lev * m / 2.0 + d * n * top)
                    r = float(np.max(np.abs(P[sel]))) / bound
                    tgt = phi_ratio if main else rem_ratio
                    tgt[k] = max(tgt.get(k, 0.0), r)

    for (kinds, k), coef in sorted(gated.items(), key=lambda x: (x[0][1], x[0][0])):
        pieces.append(_band_piece(g, n, kinds, k, coef, True))
    for (kinds, lev), arr in sorted(wrap.items(), key=lambda x: (x[0][1], x[0][0])):
        pieces.append(_band_piece(g, n, kinds, lev + 1, {0: arr}, False, depth=lev))
    for kinds, coef in diag.items():
        pieces.append(Piece("diagonal", kinds, 0, False,
                            StandardShiftSpec(g, n, (0,) * m, kinds, coef, validate=False)))
    return RepresentationBundle(g, n, k_max, pieces, mean_value, symbols, phi_ratio, rem_ratio, data)


def _band_piece(g, n, kinds, k, coef, gated, depth=None):
    depth = k if depth is None else depth
    nh = sum(kd == "h" for kd in kinds)
    if nh == 1:
        slot = kinds.index("h")
        spec = ModifiedShiftSpec(g, n, depth, coef, slot=slot, validate=False)
        return Piece("main", kinds, k, gated, spec)
    spec = StandardShiftSpec(g, n, (depth,) * (n + 1), kinds, coef, validate=False)
    return Piece("remainder", kinds, k, gated, spec)


# ----------------------------------------------------------------- direct route

def _coefficient_tables(grid: DyadicGrid, funcs):
    return [axis_tables(grid, as_values(f)) for f in funcs]


def direct_band_sums(bundle: RepresentationBundle, funcs) -> dict:
    """Ungated per-band sums computed tuple by tuple from the level data.

    Keys: "mean", ("paraproduct", j), ("main", k), ("remainder", k); k = 0 is the diagonal.
    """
    g, n = bundle.grid, bundle.n
    m = n + 1
    tabs = _coefficient_tables(g, funcs)
    out: dict = {"mean": bundle.mean_value * float(np.prod([np.mean(as_values(f)) for f in funcs]))}
    for j in range(m):
        total = 0.0
        for lev in range(g.L):
            avg = np.ones(g.n_cubes(lev))
            for i in range(m):
                if i != j:
                    avg = avg * tabs[i][0][lev][:, 0] * 2.0 ** (g.d * lev / 2.0)
            total += float(np.sum(bundle.symbols[j][lev] * tabs[j][1][lev] * avg[:, None]))
        out[("paraproduct", j)] = total
    for ld in bundle.data:
        tup, kinds = ld.tuples, ld.pattern
        lev = ld.level
        prod = ld.P
        hs = [i for i in range(m) if kinds[i] == "h"]
        main = len(hs) == 1
        for i in hs:
            c = tabs[i][1][lev][tup[:, i]]  # (n_tup, E)
            prod = (prod * c.reshape(c.shape + (1,) * (prod.ndim - 2))).sum(axis=1)
        full = np.ones(tup.shape[0])
        tied = np.ones(tup.shape[0])
        for i in range(m):
            if kinds[i] == "h0":
                full = full * tabs[i][0][lev][tup[:, i], 0]
                tied = tied * tabs[i][0][lev][tup[:, hs[0]], 0]
        contrib = prod * (full - tied) if main else prod * full
        key = "main" if main else "remainder"
        sums = np.bincount(ld.band, weights=contrib)
        for k, v in enumerate(sums):
            if k == 0 and main:
                continue
            out[(key, k)] = out.get((key, k), 0.0) + float(v)
    return out


# ----------------------------------------------------------------- verification

@dataclass
class RepresentationReport:
    per_grid_residual: float      # max over grids of |ungated sum - <T(f), g>|
    expectation_residual: float   # |E_sigma gated assembly - <T(f), g>|
    band_residuals: dict          # k -> |E ungated band k - E gated band k|
    value: float
    grids: int
    phi_ratio: dict               # band -> max normalized |phi| over grids
    rem_ratio: dict
    tail: dict
    mode: str


def _unit_functions(N: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        v = rng.standard_normal(N)
        out.append(v / np.sqrt(np.mean(v**2)))
    return out


def verify_representation(T: DiscreteOperator, k_max: int | None = None, mode: str = "enumerate", seed: int = 0,
                          funcs=None, count: int = 16, cap: int = DEFAULT_ENUMERATION_CAP,
                          omega: Modulus | None = None) -> RepresentationReport:
    """Check the expansion of <T(f_1, ..., f_n), f_{n+1}> grid by grid and in expectation.

    Inputs default to seeded Gaussian functions normalized in L^2. The per-grid residual
    compares the direct ungated band sums to the pairing; the expectation residual
    averages the gated model-operator assembly over the grids (exact under enumeration).
    """
    L = T.L
    if k_max is None:
        k_max = L - 2 if L >= 4 else L
    funcs = funcs if funcs is not None else _unit_functions(T.N, T.n + 1, seed)
    vals = [as_values(f) for f in funcs]
    value = czo_pairing(T, *vals)
    words = _grid_words(T.d, L, mode, count, seed, cap)
    per_grid = 0.0
    gated_total = 0.0
    band_direct: dict = {}
    band_gated: dict = {}
    phi_ratio: dict = {}
    rem_ratio: dict = {}
    tail_vals = []
    for s in words:
        b = assemble_representation(T, s, k_max)
        direct = direct_band_sums(b, vals)
        per_grid = max(per_grid, abs(sum(direct.values()) - value))
        for key, v in direct.items():
            if isinstance(key, tuple) and key[0] in ("main", "remainder") and key[1] >= 2:
                band_direct[key[1]] = band_direct.get(key[1], 0.0) + v
        tabs = [FunctionTables((b.grid,), v) for v in vals]
        gsum = 0.0
        tail = 0.0
        for p in b.pieces:
            pv = p.form().evaluate(tabs)
            gsum += pv
            if p.k >= 2:
                band_gated[p.k] = band_gated.get(p.k, 0.0) + pv
            if p.k > k_max:
                tail += pv
        tail_vals.append(tail)
        gated_total += gsum
        for k, r in b.phi_ratio.items():
            phi_ratio[k] = max(phi_ratio.get(k, 0.0), r)
        for k, r in b.rem_ratio.items():
            rem_ratio[k] = max(rem_ratio.get(k, 0.0), r)
    G = len(words)
    band_res = {k: abs(band_direct.get(k, 0.0) - band_gated.get(k, 0.0)) / G
                for k in sorted(set(band_direct) | set(band_gated))}
    omega = omega or T.omega or Modulus("power", (1.0,))
    tail = {
        "k_max": k_max,
        "mean_tail": float(np.mean(tail_vals)),
        "max_abs_tail": float(np.max(np.abs(tail_vals))),
        "weight_tail": representation_weight_sum(omega, k_max + 1, L) if k_max < L else 0.0,
        "weight_total": representation_weight_sum(omega),
        "dini_half": dini_dyadic_sum(omega, 0.5),
    }
    return RepresentationReport(per_grid, abs(gated_total / G - value), band_res, value, G,
                                phi_ratio, rem_ratio, tail, mode)


def decay_audit(T: DiscreteOperator, omega: Modulus | None = None, k_range=None, mode: str = "enumerate",
                count: int = 16, seed: int = 0) -> dict:
    """Largest normalized band-k main coefficient divided by omega(2^{-k}).

    Returns {"ratios": {k: r_k}, "C": max r_k, "spread": max r_k / min r_k}.
    """
    omega = omega or T.omega or Modulus("power", (1.0,))
    L = T.L
    ks = list(k_range) if k_range is not None else list(range(2, L - 1))
    ratios = {k: 0.0 for k in ks}
    for s in _grid_words(T.d, L, mode, count, seed, DEFAULT_ENUMERATION_CAP):
        g = DyadicGrid(T.d, L, s)
        for lev in range(2, L):
            for kinds in patterns(T.n):
                if sum(kd == "h" for kd in kinds) != 1:
                    continue
                ld = level_data(T, g, lev, kinds)
                for k in ks:
                    if k > lev:
                        continue
                    sel = (ld.band == k) & goodness_mask(g, lev, k)[ld.tuples[:, ld.ref]]
                    if not np.any(sel):
                        continue
                    top = lev - k
                    bound = 2.0 ** (-T.d * lev * (T.n + 1) / 2.0 + T.d * T.n * top)
                    r = float(np.max(np.abs(ld.P[sel]))) / bound / float(omega(2.0**-k))
                    ratios[k] = max(ratios[k], r)
    vals = [v for v in ratios.values() if v > 0]
    C = max(vals) if vals else 0.0
    return {"ratios": ratios, "C": C, "spread": C / min(vals) if vals else float("inf")}
