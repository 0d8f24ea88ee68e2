"""Evaluation engine for Haar-coefficient multilinear forms.

Every model operator in this package is a sum of terms

    sum_K  sum_{idx}  c[K, idx]  prod_j <f_j, u_j[K, idx]>

where u_j is an averaging function h^0 or a cancellative Haar function h^eta of a
descendant of the top cube K (one top cube per parameter in the bi-parameter
setting). A term records, for every slot, the depth below K, the kind of Haar
function and the einsum labels of its offset (and eta) axes, so repeated labels
express ties such as "slot j uses the cube of slot n+1".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ConfigurationError, DyadicGrid, ResolutionError, sign_matrix


@dataclass(frozen=True)
class SlotSpec:
    depth: tuple
    kind: tuple          # per parameter: "h" or "h0"
    offset_label: tuple  # per parameter einsum index
    eta_label: tuple     # per parameter einsum index, None for h0


@dataclass
class Term:
    coef: dict               # key: tuple of top levels -> array [K_1..K_P, *axes]
    axes: tuple              # einsum labels of the coefficient axes after the K axes
    slots: tuple             # SlotSpec per function slot
    weight: float = 1.0


def _child_signs(grid: DyadicGrid, level: int) -> np.ndarray:
    """Value of sign(h_I^eta) on every finest cell for the level-l cube I containing it."""
    pos = grid.position_in_parent(level + 1, 1)  # (n_{l+1}, d) bits
    bit = np.zeros(pos.shape[0], dtype=np.int64)
    for a in range(grid.d):
        bit = bit * 2 + pos[:, a]
    return sign_matrix(grid.d)[bit][grid.labels(level + 1)]


class _GridCache:
    def __init__(self, grid: DyadicGrid):
        self.grid = grid
        self._signs = {}
        self._desc = {}

    def signs(self, level):
        if level not in self._signs:
            self._signs[level] = _child_signs(self.grid, level)
        return self._signs[level]

    def desc(self, level, depth):
        key = (level, depth)
        if key not in self._desc:
            self._desc[key] = self.grid.descendants(level, depth)
        return self._desc[key]


_CACHES: dict = {}


def grid_cache(grid: DyadicGrid) -> _GridCache:
    c = _CACHES.get(grid.key)
    if c is None:
        if len(_CACHES) > 4096:
            _CACHES.clear()
        c = _CACHES[grid.key] = _GridCache(grid)
    return c


def axis_tables(grid: DyadicGrid, X: np.ndarray):
    """Haar tables along axis 0 of X (cells first, arbitrary trailing axes).

    Returns (h0, h): lists over levels of arrays shaped (n_l, t, *rest) holding
    <x, h^0_I> (t = 1) and <x, h_I^eta> (t = 2^d - 1, levels 0..L-1).
    """
    d, L = grid.d, grid.L
    rest = X.shape[1:]
    avg = [None] * (L + 1)
    avg[L] = X[grid.cells(L)[:, 0]]
    S = sign_matrix(d)
    h = [None] * L
    for lev in range(L - 1, -1, -1):
        kids = avg[lev + 1][grid.children(lev)]  # (n, 2^d, *rest)
        avg[lev] = kids.mean(axis=1)
        c = np.tensordot(kids, S, axes=([1], [0]))  # (n, *rest, nd)
        h[lev] = np.moveaxis(c, -1, 1) * (2.0 ** (-d * lev / 2.0) * 2.0 ** (-d))
    h0 = [(2.0 ** (-d * lev / 2.0)) * a.reshape((a.shape[0], 1) + rest) for lev, a in enumerate(avg)]
    return h0, h


def axis_synthesis(grid: DyadicGrid, level: int, kind: str, C: np.ndarray) -> np.ndarray:
    """Cell values of sum_I C[I, t] u_I^t for level-l functions of the given kind.

    C has shape (n_l, t, *rest); the result has shape (N, *rest).
    """
    amp = 2.0 ** (grid.d * level / 2.0)
    lab = grid.labels(level)
    if kind == "h0":
        return amp * C[lab, 0]
    sg = grid_cache(grid).signs(level)  # (N, nd)
    Cl = C[lab]  # (N, nd, *rest)
    sg = sg.reshape(sg.shape + (1,) * (Cl.ndim - 2))
    return amp * np.sum(Cl * sg, axis=1)


class FunctionTables:
    """Cached Haar tables of one function (or a batch) on a one- or two-parameter grid."""

    def __init__(self, grids: tuple, F: np.ndarray):
        self.grids = tuple(grids)
        self.P = len(self.grids)
        self.F = np.asarray(F, dtype=float)
        shape = tuple(g.n_cells for g in self.grids)
        if self.F.shape[: self.P] != shape:
            raise ConfigurationError(f"function shape {self.F.shape} does not match grid cells {shape}")
        self._first = None
        self._second = {}

    def _tables1(self):
        if self._first is None:
            self._first = axis_tables(self.grids[0], self.F)
        return self._first

    def level_table(self, levels: tuple, kinds: tuple) -> np.ndarray:
        h0, h = self._tables1()
        t1 = (h0 if kinds[0] == "h0" else h)[levels[0]]
        if self.P == 1:
            return t1
        key = (levels[0], kinds[0])
        if key not in self._second:
            X = np.moveaxis(t1, 2, 0)  # (N2, n1, t1, *b)
            self._second[key] = axis_tables(self.grids[1], X)
        s0, s = self._second[key]
        t2 = (s0 if kinds[1] == "h0" else s)[levels[1]]  # (n2, t2, n1, t1, *b)
        return np.moveaxis(np.moveaxis(t2, 2, 0), 3, 1)  # (n1, t1, n2, t2, *b)

    def slot(self, top_levels: tuple, spec: SlotSpec):
        """Slot table with its einsum axis labels (without the batch axes)."""
        for p in range(self.P):
            if spec.kind[p] == "h" and top_levels[p] + spec.depth[p] >= self.grids[p].L:
                raise ResolutionError("cancellative slot below the finest level")
            if top_levels[p] + spec.depth[p] > self.grids[p].L:
                raise ResolutionError("slot below the finest level")
        tab = self.level_table(tuple(l + i for l, i in zip(top_levels, spec.depth)), spec.kind)
        if self.P == 1:
            desc = grid_cache(self.grids[0]).desc(top_levels[0], spec.depth[0])
            X = tab[desc]  # (nK, o, t, *b)
            labels = [0, spec.offset_label[0]]
            if spec.kind[0] == "h0":
                X = X[:, :, 0]
            else:
                labels.append(spec.eta_label[0])
            return X, labels
        d1 = grid_cache(self.grids[0]).desc(top_levels[0], spec.depth[0])
        d2 = grid_cache(self.grids[1]).desc(top_levels[1], spec.depth[1])
        X = tab[d1][:, :, :, d2]  # (nK1, o1, t1, nK2, o2, t2, *b)
        X = np.moveaxis(X, 3, 1)  # (nK1, nK2, o1, t1, o2, t2, *b)
        labels = [0, 1, spec.offset_label[0]]
        if spec.kind[1] == "h0":
            X = X[:, :, :, :, :, 0]
        if spec.kind[0] == "h0":
            X = X[:, :, :, 0]
        else:
            labels.append(spec.eta_label[0])
        labels.append(spec.offset_label[1])
        if spec.kind[1] == "h":
            labels.append(spec.eta_label[1])
        return X, labels


def _scatter_synthesize(grids, top_levels, spec: SlotSpec, G: np.ndarray) -> np.ndarray:
    """Turn a gradient table G (axes as produced by FunctionTables.slot) into cell values."""
    P = len(grids)
    if P == 1:
        g = grids[0]
        lev = top_levels[0] + spec.depth[0]
        desc = grid_cache(g).desc(top_levels[0], spec.depth[0])
        rest = G.shape[3:] if spec.kind[0] == "h" else G.shape[2:]
        t = G.shape[2] if spec.kind[0] == "h" else 1
        C = np.zeros((g.n_cubes(lev), t) + rest)
        C[desc.reshape(-1)] = G.reshape((-1, t) + rest)
        return axis_synthesis(g, lev, spec.kind[0], C)
    g1, g2 = grids
    lev1 = top_levels[0] + spec.depth[0]
    lev2 = top_levels[1] + spec.depth[1]
    X = G
    if spec.kind[0] == "h0":
        X = X[:, :, :, None]
    if spec.kind[1] == "h0":
        X = X[:, :, :, :, :, None]
    nK1, nK2, o1, t1, o2, t2 = X.shape[:6]
    rest = X.shape[6:]
    d1 = grid_cache(g1).desc(top_levels[0], spec.depth[0]).reshape(-1)
    d2 = grid_cache(g2).desc(top_levels[1], spec.depth[1]).reshape(-1)
    X = np.moveaxis(X, 1, 3)  # (nK1, o1, t1, nK2, o2, t2, *rest)
    X = X.reshape((nK1 * o1, t1, nK2 * o2, t2) + rest)
    C = np.zeros((g1.n_cubes(lev1), t1, g2.n_cubes(lev2), t2) + rest)
    C[np.ix_(d1, np.arange(t1), d2, np.arange(t2))] = X
    # synthesize along parameter 2 first (axis 2), then parameter 1
    C2 = np.moveaxis(np.moveaxis(C, 3, 0), 3, 0)  # (n2, t2, n1, t1, *rest)
    V2 = axis_synthesis(g2, lev2, spec.kind[1], C2)  # (N2, n1, t1, *rest)
    V2 = np.moveaxis(V2, 0, 2)  # (n1, t1, N2, *rest)
    return axis_synthesis(g1, lev1, spec.kind[0], V2)  # (N1, N2, *rest)


class MultilinearForm:
    """A weighted sum of terms acting on n_slots functions."""

    def __init__(self, grids, n_slots: int, terms=()):
        self.grids = tuple(grids) if isinstance(grids, (tuple, list)) else (grids,)
        self.n_slots = int(n_slots)
        self.terms = list(terms)

    @property
    def shape(self):
        return tuple(g.n_cells for g in self.grids)

    def __add__(self, other: "MultilinearForm"):
        self._check_compatible(other)
        return MultilinearForm(self.grids, self.n_slots, self.terms + other.terms)

    def __sub__(self, other: "MultilinearForm"):
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "MultilinearForm":
        return MultilinearForm(
            self.grids, self.n_slots, [Term(t.coef, t.axes, t.slots, t.weight * c) for t in self.terms]
        )

    def _check_compatible(self, other):
        if self.n_slots != other.n_slots or tuple(g.key for g in self.grids) != tuple(g.key for g in other.grids):
            raise ConfigurationError("forms live on different grids or have different arity")

    def _tables(self, funcs):
        if len(funcs) != self.n_slots:
            raise ConfigurationError(f"expected {self.n_slots} functions, got {len(funcs)}")
        out = []
        for f in funcs:
            if f is None:
                out.append(None)
                continue
            if isinstance(f, FunctionTables):
                out.append(f)
                continue
            v = getattr(f, "values", f)
            v = np.asarray(v, dtype=float)
            if len(self.grids) == 2 and v.ndim >= 1 and v.shape[0] == self.shape[0] * self.shape[1] \
                    and (v.ndim == 1 or v.shape[:2] != self.shape):
                v = v.reshape(self.shape + v.shape[1:])
            out.append(FunctionTables(self.grids, v))
        return out

    def evaluate(self, funcs) -> float:
        tabs = self._tables(funcs)
        total = 0.0
        for term in self.terms:
            for lv, coef in term.coef.items():
                ops = [coef, list(range(len(self.grids))) + list(term.axes)]
                for tab, spec in zip(tabs, term.slots):
                    X, lab = tab.slot(lv, spec)
                    ops += [X, lab]
                ops.append([])
                total += term.weight * float(np.einsum(*ops, optimize=True))
        return total

    def gradient(self, funcs, slot: int) -> np.ndarray:
        """Riesz representer u of f_slot -> form(...), i.e. <u, f_slot> = form(funcs).

        funcs[slot] is ignored. Other functions may carry one common trailing batch axis
        only if slot tables are compatible; usually they are plain cell arrays.
        """
        funcs = list(funcs)
        funcs[slot] = None
        tabs = self._tables(funcs)
        out = None
        for term in self.terms:
            for lv, coef in term.coef.items():
                P = len(self.grids)
                ops = [coef, list(range(P)) + list(term.axes)]
                batch_label = None
                for j, (tab, spec) in enumerate(zip(tabs, term.slots)):
                    if j == slot:
                        continue
                    X, lab = tab.slot(lv, spec)
                    extra = X.ndim - len(lab)
                    if extra:
                        batch_label = 51
                        lab = lab + [batch_label]
                    ops += [X, lab]
                spec = term.slots[slot]
                outlab = list(range(P)) + [spec.offset_label[0]]
                if spec.kind[0] == "h":
                    outlab.append(spec.eta_label[0])
                if P == 2:
                    outlab.append(spec.offset_label[1])
                    if spec.kind[1] == "h":
                        outlab.append(spec.eta_label[1])
                if batch_label is not None:
                    outlab.append(batch_label)
                G = np.einsum(*ops, outlab, optimize=True)
                if P == 2:
                    # reorder to (K1, K2, o1, [e1], o2, [e2], *b) which already matches outlab
                    pass
                v = term.weight * _scatter_synthesize(self.grids, lv, spec, G)
                out = v if out is None else out + v
        if out is None:
            shape = self.shape
            out = np.zeros(shape)
        if len(self.grids) == 2:
            out = out.reshape((self.shape[0] * self.shape[1],) + out.shape[2:])
        return out

    # linear helpers ---------------------------------------------------
    def apply(self, *funcs) -> np.ndarray:
        """T(f_1, ..., f_n) as cell values: the representer of the last slot."""
        return self.gradient(list(funcs) + [None], self.n_slots - 1)

    def matrix(self) -> np.ndarray:
        """Dense matrix of a linear form (two slots), acting on cell values."""
        if self.n_slots != 2:
            raise ConfigurationError("matrix() needs a linear operator (two slots)")
        N = int(np.prod(self.shape))
        eye = np.eye(N).reshape(self.shape + (N,))
        return self.gradient([eye, None], 1)

    def linear_operator(self):
        from scipy.sparse.linalg import LinearOperator

        if self.n_slots != 2:
            raise ConfigurationError("linear_operator() needs two slots")
        N = int(np.prod(self.shape))
        return LinearOperator(
            (N, N),
            matvec=lambda x: self.gradient([np.asarray(x).reshape(-1), None], 1),
            rmatvec=lambda y: self.gradient([None, np.asarray(y).reshape(-1)], 0),
            dtype=float,
        )

    def form_tensor(self) -> np.ndarray:
        """Dense tensor F with F[x_1, ..., x_{n+1}] = form(e_{x_1}, ..., e_{x_{n+1}}).

        e_x is the indicator of the finest cell x (one-parameter forms). Every term only
        couples cells inside a common top cube K, and the Haar tables of a cube are the
        same in local coordinates for every K, so each level is assembled as one
        batched block tensor and scattered into place.
        """
        if len(self.grids) != 1:
            raise ConfigurationError("form_tensor() is one-parameter only")
        g = self.grids[0]
        N = g.n_cells
        ylab = [51 - j for j in range(self.n_slots)]
        blocks: dict = {}
        for term in self.terms:
            for lv, coef in term.coef.items():
                lev = lv[0]
                ops = [coef, [0] + list(term.axes)]
                for j, spec in enumerate(term.slots):
                    V = _local_table(g, lev, spec.depth[0], spec.kind[0])
                    lab = [spec.offset_label[0]] + ([spec.eta_label[0]] if spec.kind[0] == "h" else [])
                    ops += [V, lab + [ylab[j]]]
                B = term.weight * np.einsum(*ops, [0] + ylab, optimize=True)
                if lev in blocks:
                    blocks[lev] += B
                else:
                    blocks[lev] = B
        out = np.zeros((N,) * self.n_slots)
        for lev, B in blocks.items():
            C = g.cells(lev)
            nK, m = C.shape
            idx = tuple(C.reshape((nK,) + (1,) * j + (m,) + (1,) * (self.n_slots - 1 - j))
                        for j in range(self.n_slots))
            out[idx] += B
        return out


def _local_table(grid: DyadicGrid, level: int, depth: int, kind: str) -> np.ndarray:
    """<e_x, u> for the slot functions u of one top cube, x in local cell order.

    Shape (O, m) for h0 and (O, nd, m) for h, with O = 2^{d depth}, m = 2^{d(L - level)}.
    """
    d, L = grid.d, grid.L
    span = L - level
    m = 1 << (d * span)
    pos = np.stack(np.unravel_index(np.arange(m), (1 << span,) * d), axis=1)
    o = np.zeros(m, dtype=np.int64)
    for a in range(d):
        o = o * (1 << depth) + (pos[:, a] >> (span - depth))
    amp = 2.0 ** (d * (level + depth) / 2.0) / grid.n_cells
    O = 1 << (d * depth)
    if kind == "h0":
        V = np.zeros((O, m))
        V[o, np.arange(m)] = amp
        return V
    bit = np.zeros(m, dtype=np.int64)
    for a in range(d):
        bit = bit * 2 + ((pos[:, a] >> (span - depth - 1)) & 1)
    S = sign_matrix(d)
    V = np.zeros((O, S.shape[1], m))
    V[o, :, np.arange(m)] = amp * S[bit]
    return V


def term_levels(coef: dict) -> list:
    return sorted(coef)


@dataclass
class LabelPool:
    """Hands out fresh einsum labels."""

    start: int = 10
    _next: int = field(default=10, init=False)

    def __post_init__(self):
        self._next = self.start

    def new(self, count: int = 1):
        out = list(range(self._next, self._next + count))
        self._next += count
        return out if count > 1 else out[0]
