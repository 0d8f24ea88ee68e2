"""One-parameter model operators and the splitting of modified shifts into standard shifts.

Coefficient layouts (per top level l, K runs over the 2^{dl} level-l cubes):

* StandardShiftSpec: a[l] has shape (nK, O_1, ..., O_{n+1}, E...) where O_j = 2^{d i_j}
  indexes the depth-i_j descendant I_j of K (position order) and one trailing
  axis of size 2^d - 1 follows for every cancellative slot, in slot order.
* ModifiedShiftSpec: a[l] has shape (nK, O, ..., O, E) with O = 2^{dk}; the eta
  axis belongs to the cancellative slot.
* ParaproductSpec: a[l] has shape (nK, E), levels 0..L-1.
* HFormSpec (d = 1, linear): a[l] has shape (nK, O_I, O_J) with O = 2^k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forms import MultilinearForm, SlotSpec, Term
from .grid import (
    ConfigurationError,
    DyadicCube,
    DyadicGrid,
    GridFunction,
    ResolutionError,
    as_values,
    haar_function,
    HaarIndex,
    sign_matrix,
)
from .weights import bmo_seq_norm

NORM_RTOL = 1e-9
MATRIX_CAP = 4096


class SpecValidationError(ValueError):
    """A coefficient tensor violates its normalization or shape contract."""


def _oslot(j):
    return 10 + j


def _eslot(j):
    return 30 + j


def _slot(depth, kind, o, e=None):
    return SlotSpec((depth,), (kind,), (o,), (e if kind == "h" else None,))


def _check_levels(coef: dict, grid: DyadicGrid, max_level: int, what: str) -> dict:
    out = {}
    for lev, arr in coef.items():
        lev = int(lev if not isinstance(lev, tuple) else lev[0])
        if lev < 0 or lev > max_level:
            raise ResolutionError(f"{what}: top level {lev} leaves no room below (max {max_level})")
        out[lev] = np.asarray(arr, dtype=float)
    return out


def _check_bound(arr, bound, what, lev):
    worst = float(np.max(np.abs(arr) / bound)) if arr.size else 0.0
    if worst > 1.0 + NORM_RTOL:
        raise SpecValidationError(f"{what}: level {lev} coefficient exceeds normalization by factor {worst:.12g}")
    return worst


# ----------------------------------------------------------------- standard shifts

@dataclass
class StandardShiftSpec:
    grid: DyadicGrid
    n: int
    complexity: tuple
    kinds: tuple  # per slot "h" or "h0"
    coef: dict
    validate: bool = True

    def __post_init__(self):
        self.complexity = tuple(int(i) for i in self.complexity)
        self.kinds = tuple(self.kinds)
        if len(self.complexity) != self.n + 1 or len(self.kinds) != self.n + 1:
            raise SpecValidationError("complexity and kinds need n + 1 entries")
        if any(k not in ("h", "h0") for k in self.kinds):
            raise SpecValidationError("slot kinds are 'h' or 'h0'")
        if sum(k == "h" for k in self.kinds) < 2:
            raise SpecValidationError("a standard shift needs at least two cancellative slots")
        g = self.grid
        deepest = max(i + (1 if kd == "h" else 0) for i, kd in zip(self.complexity, self.kinds))
        self.coef = _check_levels(self.coef, g, g.L - deepest, "standard shift")
        nd = (1 << g.d) - 1
        for lev, arr in self.coef.items():
            shape = (g.n_cubes(lev),) + tuple(1 << (g.d * i) for i in self.complexity) + (nd,) * self.n_cancellative
            if arr.shape != shape:
                raise SpecValidationError(f"level {lev}: coefficient shape {arr.shape} != {shape}")
        if self.validate:
            self.check_normalization()

    @property
    def n_cancellative(self) -> int:
        return sum(k == "h" for k in self.kinds)

    def bound(self, lev: int) -> float:
        d = self.grid.d
        return 2.0 ** (-d * sum(lev + i for i in self.complexity) / 2.0 + d * self.n * lev)

    def check_normalization(self) -> float:
        """Largest |a| / bound; raises when above 1."""
        worst = 0.0
        for lev, arr in self.coef.items():
            worst = max(worst, _check_bound(arr, self.bound(lev), "standard shift", lev))
        return worst

    def to_form(self) -> MultilinearForm:
        slots, axes, eaxes = [], [], []
        for j, (i, kd) in enumerate(zip(self.complexity, self.kinds)):
            slots.append(_slot(i, kd, _oslot(j), _eslot(j)))
            axes.append(_oslot(j))
            if kd == "h":
                eaxes.append(_eslot(j))
        term = Term({(lev,): a for lev, a in self.coef.items()}, tuple(axes + eaxes), tuple(slots))
        return MultilinearForm(self.grid, self.n + 1, [term])

    def permuted(self, order) -> "StandardShiftSpec":
        """Slot s of the result is slot order[s] of self."""
        order = list(order)
        h_pos = [j for j in range(self.n + 1) if self.kinds[j] == "h"]
        new_h = [j for j in order if self.kinds[j] == "h"]
        perm = [0] + [1 + j for j in order] + [1 + self.n + 1 + h_pos.index(j) for j in new_h]
        coef = {lev: np.transpose(a, perm) for lev, a in self.coef.items()}
        return StandardShiftSpec(self.grid, self.n, tuple(self.complexity[j] for j in order),
                                 tuple(self.kinds[j] for j in order), coef, validate=self.validate)


# ----------------------------------------------------------------- modified shifts

@dataclass
class ModifiedShiftSpec:
    grid: DyadicGrid
    n: int
    k: int
    coef: dict
    slot: int | None = None  # cancellative slot (0-based), defaults to the last one
    validate: bool = True
    truncated: int = field(default=0, init=False)

    def __post_init__(self):
        g = self.grid
        if self.k < 1:
            raise SpecValidationError("modified shifts have complexity k >= 1")
        if self.k > g.L - 1:
            raise ResolutionError(f"complexity {self.k} needs depth > {self.k}, grid has {g.L}")
        if self.slot is None:
            self.slot = self.n
        if not 0 <= self.slot <= self.n:
            raise SpecValidationError(f"slot {self.slot} outside 0..{self.n}")
        keep = {}
        for lev, arr in self.coef.items():
            lev = int(lev)
            if lev > g.L - 1 - self.k:
                self.truncated += int(np.count_nonzero(arr))
                continue
            keep[lev] = np.asarray(arr, dtype=float)
        self.coef = keep
        nd = (1 << g.d) - 1
        O = 1 << (g.d * self.k)
        for lev, arr in self.coef.items():
            shape = (g.n_cubes(lev),) + (O,) * (self.n + 1) + (nd,)
            if arr.shape != shape:
                raise SpecValidationError(f"level {lev}: coefficient shape {arr.shape} != {shape}")
        if self.validate:
            self.check_normalization()

    def bound(self, lev: int) -> float:
        d = self.grid.d
        return 2.0 ** (-d * (lev + self.k) * (self.n + 1) / 2.0 + d * self.n * lev)

    def check_normalization(self) -> float:
        worst = 0.0
        for lev, arr in self.coef.items():
            worst = max(worst, _check_bound(arr, self.bound(lev), "modified shift", lev))
        return worst

    def to_form(self) -> MultilinearForm:
        c, k, n = self.slot, self.k, self.n
        ec = _eslot(c)
        full = []
        tied = []
        for j in range(n + 1):
            if j == c:
                full.append(_slot(k, "h", _oslot(c), ec))
                tied.append(_slot(k, "h", _oslot(c), ec))
            else:
                full.append(_slot(k, "h0", _oslot(j)))
                tied.append(_slot(k, "h0", _oslot(c)))
        axes = tuple(_oslot(j) for j in range(n + 1)) + (ec,)
        others = tuple(1 + j for j in range(n + 1) if j != c)
        bar = {(lev,): a.sum(axis=others) for lev, a in self.coef.items()}
        t1 = Term({(lev,): a for lev, a in self.coef.items()}, axes, tuple(full))
        t2 = Term(bar, (_oslot(c), ec), tuple(tied), weight=-1.0)
        return MultilinearForm(self.grid, n + 1, [t1, t2])

    def canonical(self):
        """(spec with the cancellative slot last, order) where order maps new slot -> old slot."""
        order = [j for j in range(self.n + 1) if j != self.slot] + [self.slot]
        coef = {lev: np.transpose(a, [0] + [1 + j for j in order] + [self.n + 2]) for lev, a in self.coef.items()}
        return ModifiedShiftSpec(self.grid, self.n, self.k, coef, slot=self.n, validate=False), order


# ----------------------------------------------------------------- paraproducts

@dataclass
class ParaproductSpec:
    grid: DyadicGrid
    n: int
    coef: dict  # level -> (nK, E)
    slot: int | None = None
    validate: bool = True

    def __post_init__(self):
        g = self.grid
        if self.slot is None:
            self.slot = self.n
        if not 0 <= self.slot <= self.n:
            raise SpecValidationError(f"slot {self.slot} outside 0..{self.n}")
        self.coef = _check_levels(self.coef, g, g.L - 1, "paraproduct")
        nd = (1 << g.d) - 1
        for lev, arr in self.coef.items():
            if arr.shape != (g.n_cubes(lev), nd):
                raise SpecValidationError(f"level {lev}: coefficient shape {arr.shape} != {(g.n_cubes(lev), nd)}")
        if self.validate:
            norm = self.bmo_norm()
            if norm > 1.0 + 1e-12:
                raise SpecValidationError(f"paraproduct coefficients have BMO norm {norm:.12g} > 1")

    def bmo_norm(self) -> float:
        levels = [self.coef.get(lev, np.zeros((self.grid.n_cubes(lev), 1))) for lev in range(self.grid.L)]
        return bmo_seq_norm(levels, self.grid)

    def to_form(self) -> MultilinearForm:
        d, n, c = self.grid.d, self.n, self.slot
        coef = {(lev,): (2.0 ** (d * n * lev / 2.0) * a)[:, None, :] for lev, a in self.coef.items()}
        slots = tuple(_slot(0, "h" if j == c else "h0", 10, 30) for j in range(n + 1))
        return MultilinearForm(self.grid, n + 1, [Term(coef, (10, 30), slots)])


# ----------------------------------------------------------------- H-functions

H_KINDS = ("J0-I0", "I0-J0", "I", "J")


@dataclass(frozen=True)
class HFunction:
    I: DyadicCube
    J: DyadicCube
    kind: str

    def __post_init__(self):
        if self.kind not in H_KINDS:
            raise SpecValidationError(f"unknown H kind {self.kind!r}")
        if self.I.level != self.J.level:
            raise SpecValidationError("I and J must have the same size")

    def values(self) -> GridFunction:
        hI0 = haar_function(HaarIndex(self.I, (0,) * self.I.grid.d))
        hJ0 = haar_function(HaarIndex(self.J, (0,) * self.J.grid.d))
        one = (1,) + (0,) * (self.I.grid.d - 1)
        if self.kind == "J0-I0":
            return hJ0 - hI0
        if self.kind == "I0-J0":
            return hI0 - hJ0
        if self.kind == "I":
            return haar_function(HaarIndex(self.I, one))
        return haar_function(HaarIndex(self.J, one))

    def check_axioms(self, tol: float = 1e-12) -> dict:
        grid = self.I.grid
        v = self.values().values
        support = np.zeros(grid.n_cells, dtype=bool)
        support[self.I.cells()] = True
        support[self.J.cells()] = True
        const = True
        lev = self.I.level + 1
        if lev <= grid.L:
            for cube in (self.I, self.J):
                for ch in cube.children():
                    vals = v[ch.cells()]
                    const &= bool(np.ptp(vals) <= tol)
        return {
            "support": bool(np.all(np.abs(v[~support]) <= tol)),
            "constant_on_children": const,
            "bound": bool(np.max(np.abs(v)) <= self.I.measure ** -0.5 + tol),
            "zero_mean": bool(abs(v.mean()) <= tol),
        }


@dataclass
class HFormSpec:
    """Linear modified shift written with H-functions (d = 1).

    form 1: sum a <f, h_I> <g, H_{I,J}>;  form 2: sum a <f, H_{I,J}> <g, h_J>.
    """

    grid: DyadicGrid
    k: int
    coef: dict  # level -> (nK, 2^k, 2^k) over (I, J)
    form: int = 2
    kind: str = "I0-J0"
    validate: bool = True

    def __post_init__(self):
        g = self.grid
        if g.d != 1:
            raise ConfigurationError("H-forms are implemented for d = 1")
        if self.kind not in H_KINDS or self.form not in (1, 2):
            raise SpecValidationError("bad H-form kind or form index")
        self.coef = _check_levels(self.coef, g, g.L - 1 - self.k, "H-form")
        O = 1 << self.k
        for lev, arr in self.coef.items():
            if arr.shape != (g.n_cubes(lev), O, O):
                raise SpecValidationError(f"level {lev}: coefficient shape {arr.shape} != {(g.n_cubes(lev), O, O)}")
        if self.validate:
            for lev, arr in self.coef.items():
                _check_bound(arr, 2.0 ** (-self.k), "H-form", lev)

    def to_form(self) -> MultilinearForm:
        k, oI, oJ = self.k, 10, 11
        coef = {(lev,): a[..., None, None] for lev, a in self.coef.items()}
        axes = (oI, oJ, 30, 31)
        fixed = _slot(k, "h", oI if self.form == 1 else oJ, 30 if self.form == 1 else 31)
        if self.kind in ("I", "J"):
            hs = _slot(k, "h", oI if self.kind == "I" else oJ, 31 if self.form == 1 else 30)
            pieces = [(1.0, hs)]
        else:
            sJ = _slot(k, "h0", oJ)
            sI = _slot(k, "h0", oI)
            pieces = [(1.0, sJ), (-1.0, sI)] if self.kind == "J0-I0" else [(1.0, sI), (-1.0, sJ)]
        terms = []
        for w, hs in pieces:
            slots = (fixed, hs) if self.form == 1 else (hs, fixed)
            terms.append(Term(coef, axes, slots, weight=w))
        return MultilinearForm(self.grid, 2, terms)


# ----------------------------------------------------------------- evaluation

def as_form(spec) -> MultilinearForm:
    if isinstance(spec, MultilinearForm):
        return spec
    if isinstance(spec, (list, tuple)):
        parts = [as_form(s).scaled(w) for w, s in spec]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out
    return spec.to_form()


def apply(spec, *funcs) -> GridFunction:
    """T(f_1, ..., f_n) as a grid function."""
    form = as_form(spec)
    vals = form.apply(*[as_values(f) for f in funcs])
    return GridFunction(form.grids[0], vals) if len(form.grids) == 1 else vals


def pairing(spec, *funcs) -> float:
    """<T(f_1, ..., f_n), f_{n+1}>."""
    return as_form(spec).evaluate([as_values(f) for f in funcs])


apply_standard_shift = apply
apply_modified_shift = pairing
apply_paraproduct = pairing


# ----------------------------------------------------------------- decomposition

@dataclass
class ShiftDecomposition:
    """Q = sum(A shifts) - C * sum(U shifts)."""

    a_shifts: list
    u_shifts: list
    C: float

    @property
    def shifts(self) -> list:
        return self.a_shifts + self.u_shifts

    def to_form(self) -> MultilinearForm:
        parts = [(1.0, s) for s in self.a_shifts] + [(-self.C, s) for s in self.u_shifts]
        return as_form(parts)


def _positions(d: int, depth: int) -> np.ndarray:
    """Per-axis positions of the 2^{d depth} descendants in flat order, shape (n, d)."""
    return np.stack(np.unravel_index(np.arange(1 << (d * depth)), (1 << depth,) * d), axis=1) if depth else np.zeros((1, d), dtype=np.int64)


def _flat(pos: np.ndarray, depth: int) -> np.ndarray:
    d = pos.shape[1]
    out = np.zeros(pos.shape[0], dtype=np.int64)
    for a in range(d):
        out = out * (1 << depth) + pos[:, a]
    return out


def _bits(pos: np.ndarray) -> np.ndarray:
    out = np.zeros(pos.shape[0], dtype=np.int64)
    for a in range(pos.shape[1]):
        out = out * 2 + pos[:, a]
    return out


def decompose_modified_shift(Q: ModifiedShiftSpec, validate: bool = True) -> ShiftDecomposition:
    """Split Q into 2nk standard shifts following the averaging and collapse identities.

    A_{m,i} (complexity 0..0, i, k..k): expands <P_{K,k-1} f_m>_{I_m} in the Haar functions
    of the depth-i cubes L of K.  U_{m,i}: the collapse from I_{n+1}^{(i+1)} to I_{n+1}^{(i)},
    written as a shift with top cube M = I_{n+1}^{(i+1)} whose last slot sits i+1 levels down.
    """
    if Q.slot != Q.n:
        Qc, order = Q.canonical()
        dec = decompose_modified_shift(Qc, validate)
        back = [order.index(j) for j in range(Q.n + 1)]
        return ShiftDecomposition([s.permuted(back) for s in dec.a_shifts],
                                  [s.permuted(back) for s in dec.u_shifts], dec.C)
    g, n, k = Q.grid, Q.n, Q.k
    d = g.d
    S = sign_matrix(d)
    nd = S.shape[1]
    C = float(2 ** (d * (n - 1)))
    posk = _positions(d, k)
    a_shifts, u_shifts = [], []
    for m in range(n):  # slot carrying the martingale difference (0-based)
        for i in range(k):
            # A_{m,i}
            Lidx = _flat(posk >> (k - i), i)
            bit = _bits((posk >> (k - i - 1)) & 1)
            W = np.zeros((1 << (d * k), 1 << (d * i), nd))
            W[np.arange(W.shape[0]), Lidx] = S[bit]
            coefA, coefU = {}, {}
            for lev, a in Q.coef.items():
                I_meas = 2.0 ** (-d * (lev + k))
                b = a * I_meas ** (n / 2.0)
                B = b.sum(axis=tuple(range(1, 1 + m))) if m else b
                scale = 2.0 ** (d * lev * m / 2.0) * 2.0 ** (d * (lev + i) / 2.0) * I_meas ** (-(n - 1 - m) / 2.0)
                # B axes: (K, o_m, o_{m+1..n-1}, o_n, eta)
                rest = B.ndim - 4
                mid = list(range(2, 2 + rest))
                A = scale * np.einsum(B, [0, 1] + mid + [40, 41], W, [1, 50, 51], [0, 50] + mid + [40, 51, 41])
                coefA[lev] = A.reshape((A.shape[0],) + (1,) * m + A.shape[1:])
            kinds = ("h0",) * m + ("h",) + ("h0",) * (n - 1 - m) + ("h",)
            compA = (0,) * m + (i,) + (k,) * (n - 1 - m) + (k,)
            a_shifts.append(StandardShiftSpec(g, n, compA, kinds, coefA, validate=validate))

            # U_{m,i}
            up = k - i - 1
            posM = posk >> (i + 1)
            rel = posk & ((1 << (i + 1)) - 1)
            Mloc = _flat(posM, up)
            relflat = _flat(rel, i + 1)
            child = _bits((_positions(d, i + 1) >> i) & 1)  # child of M holding L, per relative offset
            for lev, a in Q.coef.items():
                levM = lev + up
                I_meas = 2.0 ** (-d * (lev + k))
                b = a * I_meas ** (n / 2.0)
                Bbar = b.sum(axis=tuple(range(1, 1 + n)))  # (nK, O_n, eta)
                Mi = g.descendants(lev, up)[:, Mloc]  # (nK, O)
                V = np.zeros((g.n_cubes(levM), 1 << (d * (i + 1)), nd))
                V[Mi, relflat[None, :]] = Bbar
                M_meas = 2.0 ** (-d * levM)
                L_meas = 2.0 ** (-d * (levM + 1))
                scale = M_meas ** (-m / 2.0) * M_meas ** (-0.5) * L_meas ** (-(n - 1 - m) / 2.0) / C
                Sc = S[child]  # (O_rel, eta')
                core = scale * V[:, :, None, :] * Sc[None, :, :, None]  # (nM, rel, eta', eta)
                nslots_mid = n - 1 - m
                shape = (V.shape[0],) + (1,) * (m + 1) + (1 << d,) * nslots_mid + (V.shape[1], nd, nd)
                U = np.zeros(shape)
                idx = [slice(None)] + [0] * (m + 1) + [child] * nslots_mid + [np.arange(V.shape[1])]
                U[tuple(idx)] = core
                coefU[levM] = U
            kinds = ("h0",) * m + ("h",) + ("h0",) * (n - 1 - m) + ("h",)
            compU = (0,) * (m + 1) + (1,) * (n - 1 - m) + (i + 1,)
            u_shifts.append(StandardShiftSpec(g, n, compU, kinds, coefU, validate=validate))
    return ShiftDecomposition(a_shifts, u_shifts, C)


# ----------------------------------------------------------------- matrices and norms

def operator_matrix(spec, cap: int = MATRIX_CAP) -> np.ndarray:
    """Dense matrix M with T f = M f on cell values (linear operators only)."""
    form = as_form(spec)
    N = int(np.prod(form.shape))
    if N > cap:
        raise ConfigurationError(f"matrix dimension {N} exceeds the cap {cap}")
    return form.matrix()


def form_tensor(spec) -> np.ndarray:
    return as_form(spec).form_tensor()


@dataclass
class NormResult:
    value: float
    p: float
    lower_bound: bool
    converged: bool
    certificate: np.ndarray | None = None


def _pnorm(x, p):
    return float(np.mean(np.abs(x) ** p) ** (1.0 / p))


def operator_norm(M, p: float = 2.0, restarts: int = 16, seed: int = 0, iters: int = 300, tol: float = 1e-10) -> NormResult:
    """||M||_{L^p -> L^p} on the normalized cell measure.

    p = 2 is the largest singular value. Other p use a nonlinear power iteration
    with seeded restarts; the result is a certified lower bound (the ratio of a
    concrete certificate vector).
    """
    from scipy.sparse.linalg import LinearOperator, svds

    if isinstance(M, MultilinearForm) or hasattr(M, "to_form"):
        form = as_form(M)
        N = int(np.prod(form.shape))
        M = form.matrix() if N <= 1024 else form.linear_operator()
    if p == 2:
        if isinstance(M, LinearOperator):
            rng = np.random.default_rng(seed)
            v0 = rng.normal(size=M.shape[1])
            s = svds(M, k=1, tol=tol * 1e-2, v0=v0, return_singular_vectors="vh", maxiter=20000)
            val = float(s[1][0]) if isinstance(s, tuple) else float(s[0])
            return NormResult(val, 2.0, False, True, None)
        M = np.asarray(M, dtype=float)
        if M.size == 0:
            return NormResult(0.0, 2.0, False, True, None)
        u, sv, vt = np.linalg.svd(M)
        return NormResult(float(sv[0]), 2.0, False, True, vt[0])
    if not p > 1:
        raise ConfigurationError("p must exceed 1")
    A = np.asarray(M, dtype=float) if not isinstance(M, LinearOperator) else M
    mv = (lambda x: A @ x) if not isinstance(A, LinearOperator) else A.matvec
    rmv = (lambda y: A.T @ y) if not isinstance(A, LinearOperator) else A.rmatvec
    q = p / (p - 1.0)
    rng = np.random.default_rng(seed)
    best, best_x, conv_all = 0.0, None, True
    for _ in range(restarts):
        x = rng.normal(size=A.shape[1])
        x /= _pnorm(x, p)
        prev = 0.0
        converged = False
        for _ in range(iters):
            y = mv(x)
            val = _pnorm(y, p)
            if val == 0:
                break
            z = rmv(np.sign(y) * np.abs(y) ** (p - 1))
            x = np.sign(z) * np.abs(z) ** (q - 1)
            nx = _pnorm(x, p)
            if nx == 0:
                break
            x /= nx
            if abs(val - prev) <= tol * max(val, 1e-300):
                converged = True
                break
            prev = val
        val = _pnorm(mv(x), p)
        conv_all &= converged
        if val > best:
            best, best_x = val, x.copy()
    return NormResult(best, p, True, conv_all, best_x)


# ----------------------------------------------------------------- generators

def random_modified_shift(grid: DyadicGrid, n: int, k: int, seed: int, slot=None, fill: float = 1.0) -> ModifiedShiftSpec:
    """Admissible modified shift with uniform coefficients in [-fill, fill] * bound."""
    rng = np.random.default_rng(seed)
    nd = (1 << grid.d) - 1
    O = 1 << (grid.d * k)
    coef = {}
    for lev in range(grid.L - k):
        bound = 2.0 ** (-grid.d * (lev + k) * (n + 1) / 2.0 + grid.d * n * lev)
        coef[lev] = fill * bound * rng.uniform(-1, 1, size=(grid.n_cubes(lev),) + (O,) * (n + 1) + (nd,))
    return ModifiedShiftSpec(grid, n, k, coef, slot=slot)


def random_standard_shift(grid: DyadicGrid, n: int, complexity, kinds, seed: int, fill: float = 1.0) -> StandardShiftSpec:
    rng = np.random.default_rng(seed)
    d = grid.d
    nd = (1 << d) - 1
    deepest = max(i + (1 if kd == "h" else 0) for i, kd in zip(complexity, kinds))
    ncan = sum(kd == "h" for kd in kinds)
    coef = {}
    for lev in range(grid.L - deepest + 1):
        bound = 2.0 ** (-d * sum(lev + i for i in complexity) / 2.0 + d * n * lev)
        shape = (grid.n_cubes(lev),) + tuple(1 << (d * i) for i in complexity) + (nd,) * ncan
        coef[lev] = fill * bound * rng.uniform(-1, 1, size=shape)
    return StandardShiftSpec(grid, n, tuple(complexity), tuple(kinds), coef)


def adversarial_modified_shift(grid: DyadicGrid, k: int, seed: int):
    """Linear Q_k at the normalization ceiling: a_{IJK} = eps_{K,J} |I|/|K|, eps seeded signs.

    The signs depend on (K, J) only, so sum_I a <f, h^0_I> telescopes to an average over K
    and Q_k f = -sum eps |J|^{1/2} <P_{K,k-1} f>_J h_J; this saturates the square-root growth.
    k = 0 returns the unit Haar multiplier with random signs (an H-form with H = h_K).
    """
    if grid.d != 1:
        raise ConfigurationError("the adversarial family is built for d = 1")
    rng = np.random.default_rng(seed)
    if k == 0:
        coef = {lev: rng.choice([-1.0, 1.0], size=(grid.n_cubes(lev), 1, 1)) for lev in range(grid.L)}
        return HFormSpec(grid, 0, coef, form=2, kind="J")
    O = 1 << k
    coef = {}
    for lev in range(grid.L - k):
        eps = rng.choice([-1.0, 1.0], size=(grid.n_cubes(lev), 1, O, 1))
        coef[lev] = np.broadcast_to(eps * 2.0 ** (-k), (grid.n_cubes(lev), O, O, 1)).copy()
    return ModifiedShiftSpec(grid, 1, k, coef)


def adversarial_standard_shift(grid: DyadicGrid, i: int, j: int, seed: int) -> StandardShiftSpec:
    """Linear S_{i,j} with rank-one blocks eps_{K,I} eps'_{K,J} at the normalization ceiling."""
    rng = np.random.default_rng(seed)
    d = grid.d
    nd = (1 << d) - 1
    coef = {}
    for lev in range(grid.L - max(i, j)):
        bound = 2.0 ** (-d * (2 * lev + i + j) / 2.0 + d * lev)
        e1 = rng.choice([-1.0, 1.0], size=(grid.n_cubes(lev), 1 << (d * i), 1, nd, 1))
        e2 = rng.choice([-1.0, 1.0], size=(grid.n_cubes(lev), 1, 1 << (d * j), 1, nd))
        coef[lev] = bound * e1 * e2 / nd
    return StandardShiftSpec(grid, 1, (i, j), ("h", "h"), coef)


def norm_growth_experiment(family: str = "Qk", k_range=range(0, 9), p: float = 2.0, trials: int = 1,
                           seed: int = 0, L: int = 12, d: int = 1) -> list[dict]:
    """Measured norms of seeded adversarial operators against sqrt(k + 1).

    family "Qk": modified shifts; "S": standard shifts S_{k,k}.
    """
    grid = DyadicGrid(d, L)
    rows = []
    for k in k_range:
        norms = []
        for t in range(trials):
            s = seed * 1000 + 17 * k + t
            spec = adversarial_modified_shift(grid, k, s) if family == "Qk" else adversarial_standard_shift(grid, k, k, s)
            norms.append(operator_norm(spec, p=p, seed=s).value)
        val = max(norms)
        rows.append({"k": int(k), "norm": val, "ratio": val / np.sqrt(k + 1.0)})
    return rows


def ratio_spread(rows: list[dict]) -> float:
    r = [row["ratio"] for row in rows]
    return max(r) / min(r)
