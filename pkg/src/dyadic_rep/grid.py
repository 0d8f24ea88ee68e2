"""Finite periodic dyadic grids on the d-torus, the Haar system and martingale calculus.

A grid of depth L lives on [0,1)^d and has levels 0..L. Functions are stored by
their averages on the 2^{dL} finest cells (flat C-order over the axes). The
inner product is <f, g> = mean(f * g), since every finest cell has measure
2^{-dL}.

A level-l cube with integer coordinates q is the standard cube q 2^{-l} + [0, 2^{-l})^d
translated by sum_{i=l+1}^{L} 2^{-i} sigma^i (mod 1). In units of finest cells
the translation is the integer vector ``grid.offset(l)``.
"""

from __future__ import annotations

import io
import itertools
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MAX_DEPTH = 20
DEFAULT_ENUMERATION_CAP = 2**16
_BINARY_MAGIC = b"DGF1"


class ConfigurationError(ValueError):
    """Inconsistent grid or experiment configuration."""


class ResolutionError(ValueError):
    """The grid is too shallow for the requested object."""


class GridIndexError(IndexError):
    """A cube or Haar index does not belong to the grid."""


def eta_list(d: int) -> list[tuple[int, ...]]:
    """Cancellative signatures in lexicographic order over {0,1}^d minus zero."""
    return [e for e in itertools.product((0, 1), repeat=d) if any(e)]


def sign_matrix(d: int) -> np.ndarray:
    """Signs of h^eta on the 2^d children, shape (2^d, 2^d - 1).

    Children are ordered by their bit vector (C-order); bit 0 is the lower half.
    """
    bits = np.array(list(itertools.product((0, 1), repeat=d)), dtype=int)
    etas = np.array(eta_list(d), dtype=int)
    # sign = prod over axes with eta_a = 1 of (1 - 2 bit_a)
    return np.prod(np.where(etas[None, :, :] == 1, 1 - 2 * bits[:, None, :], 1), axis=2).astype(float)


class DyadicGrid:
    """Shifted dyadic lattice on the d-torus with levels 0..L."""

    def __init__(self, d: int, L: int, sigma=None):
        if int(d) < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {d}")
        if not 1 <= int(L) <= MAX_DEPTH:
            raise ConfigurationError(f"depth must lie in [1, {MAX_DEPTH}], got {L}")
        self.d = int(d)
        self.L = int(L)
        if sigma is None:
            sig = np.zeros((self.L, self.d), dtype=np.int64)
        else:
            sig = np.asarray(sigma, dtype=np.int64)
            if sig.ndim == 1 and self.d == 1:
                sig = sig[:, None]
            if sig.shape != (self.L, self.d):
                raise ConfigurationError(
                    f"shift word must have {self.L} letters in {{0,1}}^{self.d}, got shape {sig.shape}"
                )
            if np.any((sig != 0) & (sig != 1)):
                raise ConfigurationError("shift word letters must be 0/1")
        sig.setflags(write=False)
        self.sigma = sig
        self._cells: dict[int, np.ndarray] = {}
        self._labels: dict[int, np.ndarray] = {}

    # basic sizes
    @property
    def side(self) -> int:
        return 1 << self.L

    @property
    def n_cells(self) -> int:
        return 1 << (self.d * self.L)

    def n_cubes(self, level: int) -> int:
        return 1 << (self.d * level)

    @cached_property
    def key(self) -> tuple:
        return (self.d, self.L, tuple(map(tuple, self.sigma.tolist())))

    def __eq__(self, other):
        return isinstance(other, DyadicGrid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        word = "".join("".join(map(str, s)) for s in self.sigma.tolist())
        return f"DyadicGrid(d={self.d}, L={self.L}, sigma={word})"

    def _check_level(self, level: int):
        if not 0 <= level <= self.L:
            raise GridIndexError(f"level {level} outside 0..{self.L}")

    def offset(self, level: int) -> np.ndarray:
        """Translation of the level-l cubes in finest-cell units, per axis."""
        self._check_level(level)
        w = np.array([1 << (self.L - i) for i in range(level + 1, self.L + 1)], dtype=np.int64)
        if len(w) == 0:
            return np.zeros(self.d, dtype=np.int64)
        return (w[:, None] * self.sigma[level:, :]).sum(axis=0)

    def cells(self, level: int) -> np.ndarray:
        """Flat finest-cell indices of every level-l cube, shape (2^{dl}, 2^{d(L-l)}).

        Row K lists the cells of cube K ordered by their position inside K (C-order).
        """
        self._check_level(level)
        if level not in self._cells:
            d, s = self.d, self.side
            w = 1 << (self.L - level)
            q = np.indices((1 << level,) * d).reshape(d, -1)
            r = np.indices((w,) * d).reshape(d, -1)
            off = self.offset(level)
            flat = np.zeros((q.shape[1], r.shape[1]), dtype=np.int64)
            for a in range(d):
                coord = (q[a][:, None] * w + off[a] + r[a][None, :]) % s
                flat = flat * s + coord
            flat.setflags(write=False)
            self._cells[level] = flat
        return self._cells[level]

    def labels(self, level: int) -> np.ndarray:
        """Level-l cube index of every finest cell."""
        if level not in self._labels:
            c = self.cells(level)
            lab = np.empty(self.n_cells, dtype=np.int64)
            lab[c] = np.arange(c.shape[0])[:, None]
            lab.setflags(write=False)
            self._labels[level] = lab
        return self._labels[level]

    def descendants(self, level: int, depth: int) -> np.ndarray:
        """Index of the depth-i descendants of each level-l cube, ordered by position."""
        if level + depth > self.L:
            raise ResolutionError(f"no descendants {depth} levels below level {level} at depth {self.L}")
        d = self.d
        span = self.L - level
        pos = np.indices((1 << depth,) * d).reshape(d, -1) << (span - depth)
        local = np.zeros(pos.shape[1], dtype=np.int64)
        for a in range(d):
            local = local * (1 << span) + pos[a]
        first = self.cells(level)[:, local]
        return self.labels(level + depth)[first]

    def children(self, level: int) -> np.ndarray:
        return self.descendants(level, 1)

    def parents(self, level: int, k: int = 1) -> np.ndarray:
        """Index of the k-th parent of every level-l cube."""
        if k > level:
            raise GridIndexError(f"level-{level} cubes have no {k}-th parent")
        first = self.cells(level)[:, 0]
        return self.labels(level - k)[first]

    def cube(self, level: int, coords) -> "DyadicCube":
        coords = tuple(int(c) for c in np.atleast_1d(coords))
        return DyadicCube(self, level, coords)

    def cube_from_index(self, level: int, index: int) -> "DyadicCube":
        self._check_level(level)
        coords = np.unravel_index(int(index), (1 << level,) * self.d)
        return DyadicCube(self, level, tuple(int(c) for c in coords))

    def cubes(self, level: int):
        for j in range(self.n_cubes(level)):
            yield self.cube_from_index(level, j)

    def position_in_parent(self, level: int, k: int) -> np.ndarray:
        """Per-axis position of each level-l cube inside its k-th parent, shape (n, d)."""
        par = self.parents(level, k)
        start = self._start_coords(level)
        pstart = self._start_coords(level - k)[par]
        return ((start - pstart) % self.side) >> (self.L - level)

    def _start_coords(self, level: int) -> np.ndarray:
        q = np.indices((1 << level,) * self.d).reshape(self.d, -1).T
        return (q * (1 << (self.L - level)) + self.offset(level)) % self.side

    def intervals(self, level: int) -> list[tuple[float, float]]:
        """Endpoints [a, b) of the level-l cubes in d = 1 (b may exceed 1 when wrapping)."""
        if self.d != 1:
            raise ConfigurationError("intervals() is only meaningful for d = 1")
        w = 1 << (self.L - level)
        return [((q * w + self.offset(level)[0]) % self.side / self.side,
                 ((q * w + self.offset(level)[0]) % self.side + w) / self.side)
                for q in range(1 << level)]


def build_grid(d: int, L: int, sigma=None) -> DyadicGrid:
    return DyadicGrid(d, L, sigma)


def word_to_sigma(word: int, d: int, L: int) -> np.ndarray:
    """Decode an integer in [0, 2^{dL}) into a shift word (sigma^1 is the leading bits)."""
    bits = [(word >> (d * L - 1 - b)) & 1 for b in range(d * L)]
    return np.array(bits, dtype=np.int64).reshape(L, d)


def enumerate_shift_words(d: int, L: int, cap: int = DEFAULT_ENUMERATION_CAP) -> list[np.ndarray]:
    total = 1 << (d * L)
    if total > cap:
        raise ConfigurationError(
            f"2^(dL) = {total} shift words exceed the enumeration cap {cap}; use sample_shift_words"
        )
    return [word_to_sigma(w, d, L) for w in range(total)]


def sample_shift_words(d: int, L: int, count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 2, size=(L, d)) for _ in range(count)]


@dataclass(frozen=True)
class DyadicCube:
    grid: DyadicGrid = field(repr=False)
    level: int
    coords: tuple

    def __post_init__(self):
        if not 0 <= self.level <= self.grid.L:
            raise GridIndexError(f"level {self.level} outside 0..{self.grid.L}")
        if len(self.coords) != self.grid.d or any(not 0 <= c < (1 << self.level) for c in self.coords):
            raise GridIndexError(f"coordinates {self.coords} outside level {self.level}")

    @property
    def index(self) -> int:
        return int(np.ravel_multi_index(self.coords, (1 << self.level,) * self.grid.d)) if self.grid.d else 0

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.level * self.grid.d)

    def cells(self) -> np.ndarray:
        return self.grid.cells(self.level)[self.index]

    def parent(self, k: int = 1) -> "DyadicCube":
        if k > self.level:
            raise GridIndexError(f"{self} has no {k}-th parent")
        return self.grid.cube_from_index(self.level - k, self.grid.parents(self.level, k)[self.index])

    def children(self) -> list["DyadicCube"]:
        if self.level >= self.grid.L:
            return []
        return [self.grid.cube_from_index(self.level + 1, j) for j in self.grid.children(self.level)[self.index]]

    def contains(self, other: "DyadicCube") -> bool:
        return other.level >= self.level and other.parent(other.level - self.level) == self


@dataclass(frozen=True)
class HaarIndex:
    cube: DyadicCube
    eta: tuple

    @property
    def cancellative(self) -> bool:
        return any(self.eta)

    @property
    def eta_index(self) -> int:
        return eta_list(self.cube.grid.d).index(tuple(self.eta))


class GridFunction:
    """Cell averages of a function on the finest cells of a grid."""

    def __init__(self, grid: DyadicGrid, values):
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.shape[0] != grid.n_cells:
            raise ConfigurationError(f"expected {grid.n_cells} values, got {v.shape[0]}")
        self.grid = grid
        self.values = v

    def __repr__(self):
        return f"GridFunction({self.grid!r}, mean={self.mean():.6g})"

    def mean(self) -> float:
        return float(self.values.mean())

    integral = mean

    def inner(self, other: "GridFunction") -> float:
        return float(np.mean(self.values * as_values(other, self.grid)))

    def norm(self, p: float = 2.0) -> float:
        return float(np.mean(np.abs(self.values) ** p) ** (1.0 / p))

    def _binop(self, other, op):
        if isinstance(other, GridFunction):
            return GridFunction(self.grid, op(self.values, as_values(other, self.grid)))
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, o):
        return self._binop(o, np.add)

    def __sub__(self, o):
        return self._binop(o, np.subtract)

    def __mul__(self, o):
        return self._binop(o, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("cell,value\n")
        for i, x in enumerate(self.values):
            buf.write(f"{i},{float(x)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, grid: DyadicGrid, text: str) -> "GridFunction":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        vals = np.zeros(grid.n_cells)
        for i, x in rows:
            vals[int(i)] = float(x)
        return cls(grid, vals)

    def to_bytes(self) -> bytes:
        g = self.grid
        head = _BINARY_MAGIC + struct.pack("<ii", g.d, g.L) + g.sigma.astype(np.uint8).tobytes()
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        if data[:4] != _BINARY_MAGIC:
            raise ConfigurationError("not a grid-function dump")
        d, L = struct.unpack("<ii", data[4:12])
        nsig = d * L
        sigma = np.frombuffer(data[12:12 + nsig], dtype=np.uint8).reshape(L, d)
        grid = DyadicGrid(d, L, sigma)
        vals = np.frombuffer(data[12 + nsig:], dtype="<f8")
        return cls(grid, vals)


def as_values(f, grid: DyadicGrid | None = None) -> np.ndarray:
    if isinstance(f, GridFunction):
        if grid is not None and f.grid.n_cells != grid.n_cells:
            raise ConfigurationError("grid mismatch")
        return f.values
    return np.asarray(f, dtype=float)


# ---------------------------------------------------------------- Haar system

def level_averages(grid: DyadicGrid, f) -> list[np.ndarray]:
    """<f>_I for every cube, one array per level 0..L."""
    v = as_values(f, grid)
    out = [None] * (grid.L + 1)
    out[grid.L] = v[grid.cells(grid.L)[:, 0]]
    for lev in range(grid.L - 1, -1, -1):
        out[lev] = out[lev + 1][grid.children(lev)].mean(axis=1)
    return out


def level_expectation(grid: DyadicGrid, f, level: int) -> np.ndarray:
    """E_l f = sum over level-l cubes of E_I f, as cell values."""
    v = as_values(f, grid)
    return v[grid.cells(level)].mean(axis=1)[grid.labels(level)]


@dataclass
class HaarCoefficients:
    grid: DyadicGrid
    mean: float
    levels: list  # levels[l] has shape (2^{dl}, 2^d - 1)

    def __getitem__(self, idx: HaarIndex) -> float:
        if not idx.cancellative:
            raise GridIndexError("only cancellative indices carry coefficients")
        return float(self.levels[idx.cube.level][idx.cube.index, idx.eta_index])

    def items(self):
        etas = eta_list(self.grid.d)
        for lev, arr in enumerate(self.levels):
            for j in range(arr.shape[0]):
                cube = self.grid.cube_from_index(lev, j)
                for e, eta in enumerate(etas):
                    yield HaarIndex(cube, eta), float(arr[j, e])

    def as_dict(self) -> dict:
        return dict(self.items())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.levels]) if self.levels else np.zeros(0)

    def energy(self) -> float:
        return float(sum(np.sum(a**2) for a in self.levels))


def haar_transform(f, grid: DyadicGrid | None = None) -> HaarCoefficients:
    if grid is None:
        grid = f.grid
    d = grid.d
    avg = level_averages(grid, f)
    S = sign_matrix(d)
    levels = []
    for lev in range(grid.L):
        kids = avg[lev + 1][grid.children(lev)]
        scale = 2.0 ** (-d * lev / 2.0) * 2.0 ** (-d)  # |I|^{1/2} 2^{-d}
        levels.append(scale * kids @ S)
    return HaarCoefficients(grid, float(avg[0][0]), levels)


def inverse_haar_transform(mean, coefficients, grid: DyadicGrid | None = None) -> GridFunction:
    if isinstance(coefficients, HaarCoefficients):
        grid = coefficients.grid
        levels = coefficients.levels
    else:
        if grid is None:
            raise ConfigurationError("a grid is required for mapping-style coefficients")
        nd = (1 << grid.d) - 1
        levels = [np.zeros((grid.n_cubes(lev), nd)) for lev in range(grid.L)]
        for idx, val in dict(coefficients).items():
            c = idx.cube
            if c.grid.key != grid.key or c.level >= grid.L or not idx.cancellative:
                raise GridIndexError(f"Haar index {idx} outside the grid")
            levels[c.level][c.index, idx.eta_index] += val
    d = grid.d
    S = sign_matrix(d)
    avg = np.array([float(mean)])
    for lev in range(grid.L):
        kids = grid.children(lev)
        nxt = np.empty(grid.n_cubes(lev + 1))
        amp = 2.0 ** (d * lev / 2.0)  # |I|^{-1/2}
        nxt[kids] = avg[:, None] + amp * levels[lev] @ S.T
        avg = nxt
    return GridFunction(grid, avg[grid.labels(grid.L)])


def haar_function(idx: HaarIndex) -> GridFunction:
    cube = idx.cube
    grid = cube.grid
    v = np.zeros(grid.n_cells)
    amp = 2.0 ** (grid.d * cube.level / 2.0)
    if not idx.cancellative:
        v[cube.cells()] = amp
        return GridFunction(grid, v)
    if cube.level >= grid.L:
        raise ResolutionError("cancellative Haar functions need children: level must be < L")
    S = sign_matrix(grid.d)
    e = idx.eta_index
    for b, child in enumerate(grid.children(cube.level)[cube.index]):
        v[grid.cells(cube.level + 1)[child]] = amp * S[b, e]
    return GridFunction(grid, v)


def haar_basis_matrix(grid: DyadicGrid) -> np.ndarray:
    """Columns: the constant 1 followed by every h_I^eta (level, cube, eta order)."""
    cols = [np.ones(grid.n_cells)]
    for lev in range(grid.L):
        for cube in grid.cubes(lev):
            for eta in eta_list(grid.d):
                cols.append(haar_function(HaarIndex(cube, eta)).values)
    return np.stack(cols, axis=1)


# ------------------------------------------------------ martingale operators

def _cube_of(grid, I: DyadicCube):
    if I.grid.key != grid.key:
        raise GridIndexError("cube belongs to a different grid")
    return I


def _local_block_mean(vals: np.ndarray, d: int, span: int, depth: int) -> np.ndarray:
    """Average a local cube array (C-order, side 2^span) over blocks of side 2^{span-depth}."""
    w = 1 << (span - depth)
    nb = 1 << depth
    shape = []
    for _ in range(d):
        shape += [nb, w]
    x = vals.reshape(shape)
    m = x.mean(axis=tuple(range(1, 2 * d, 2)), keepdims=True)
    return np.broadcast_to(m, x.shape).reshape(-1)


def expectation_block(f, I: DyadicCube, k: int = 0) -> GridFunction:
    """E_{I,k} f = sum of E_J f over the k-th generation descendants J of I."""
    grid = I.grid
    if k < 0:
        raise ValueError("k must be >= 0")
    v = as_values(f, grid)
    depth = min(k, grid.L - I.level)
    cells = I.cells()
    out = np.zeros(grid.n_cells)
    out[cells] = _local_block_mean(v[cells], grid.d, grid.L - I.level, depth)
    return GridFunction(grid, out)


def expectation(f, I: DyadicCube) -> GridFunction:
    return expectation_block(f, I, 0)


def martingale_difference_block(f, I: DyadicCube, k: int = 0) -> GridFunction:
    """Delta_{I,k} f; zero once the generation reaches the finest level."""
    grid = I.grid
    if I.level + k >= grid.L:
        return GridFunction(grid, np.zeros(grid.n_cells))
    return expectation_block(f, I, k + 1) - expectation_block(f, I, k)


def martingale_difference(f, I: DyadicCube) -> GridFunction:
    return martingale_difference_block(f, I, 0)


def p_block(f, I: DyadicCube, k: int) -> GridFunction:
    """P_{I,k} f = sum_{j=0}^{k} Delta_{I,j} f, truncated at the finest level."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return expectation_block(f, I, k + 1) - expectation_block(f, I, 0)


def martingale_ops(f, I: DyadicCube, k: int = 0) -> dict:
    """All block operators at (I, k) in one call."""
    return {
        "E": expectation(f, I),
        "E_k": expectation_block(f, I, k),
        "Delta": martingale_difference(f, I),
        "Delta_k": martingale_difference_block(f, I, k),
        "P_k": p_block(f, I, k),
    }


def p_multiplicity(grid: DyadicGrid, level: int, k: int) -> int:
    """m(I,k): number of j in [0,k] for which the j-th parent of a level-l cube exists."""
    return min(k, level) + 1


def p_block_energy(f, grid: DyadicGrid, k: int) -> float:
    """sum over all cubes K of ||P_{K,k} f||_2^2, computed level by level."""
    v = as_values(f, grid)
    total = 0.0
    for lev in range(grid.L + 1):
        hi = min(lev + k + 1, grid.L)
        diff = level_expectation(grid, v, hi) - level_expectation(grid, v, lev)
        total += float(np.mean(diff**2))
    return total


def square_function(f, grid: DyadicGrid | None = None) -> GridFunction:
    grid = grid or f.grid
    v = as_values(f, grid)
    acc = np.zeros(grid.n_cells)
    prev = level_expectation(grid, v, 0)
    for lev in range(1, grid.L + 1):
        cur = level_expectation(grid, v, lev)
        acc += (cur - prev) ** 2
        prev = cur
    return GridFunction(grid, np.sqrt(acc))


def dyadic_maximal(f, grid: DyadicGrid | None = None) -> GridFunction:
    grid = grid or f.grid
    a = np.abs(as_values(f, grid))
    out = np.zeros(grid.n_cells)
    for lev in range(grid.L + 1):
        out = np.maximum(out, level_expectation(grid, a, lev))
    return GridFunction(grid, out)


# ----------------------------------------------------------------- goodness

def goodness_mask(grid: DyadicGrid, level: int, k: int) -> np.ndarray:
    """k-goodness of every level-l cube: distance to the boundary of the k-th parent
    is at least 2^{k-2} side lengths in every axis (position measured inside the parent)."""
    if k < 2:
        raise ValueError("goodness is defined for k >= 2")
    if k > level:
        raise GridIndexError(f"level-{level} cubes have no {k}-th parent")
    pos = grid.position_in_parent(level, k)
    lo = 1 << (k - 2)
    hi = (1 << k) - 1 - lo
    return np.all((pos >= lo) & (pos <= hi), axis=1)


def is_k_good(I: DyadicCube, k: int) -> bool:
    return bool(goodness_mask(I.grid, I.level, k)[I.index])


def goodness_count(d: int, L: int, level: int, coords, k: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """(number of shift words making the standard cube good, number of words)."""
    good = 0
    words = enumerate_shift_words(d, L, cap)
    for s in words:
        g = DyadicGrid(d, L, s)
        if is_k_good(g.cube(level, coords), k):
            good += 1
    return good, len(words)


# ------------------------------------------------------------ product grids

class ProductGrid:
    """Two independent dyadic grids; functions are arrays of shape (N1, N2) or flat N1*N2."""

    def __init__(self, first: DyadicGrid, second: DyadicGrid):
        self.factors = (first, second)

    @property
    def shape(self) -> tuple:
        return (self.factors[0].n_cells, self.factors[1].n_cells)

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def key(self) -> tuple:
        return (self.factors[0].key, self.factors[1].key)

    def __eq__(self, other):
        return isinstance(other, ProductGrid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"ProductGrid({self.factors[0]!r}, {self.factors[1]!r})"

    def as_array(self, f) -> np.ndarray:
        v = np.asarray(getattr(f, "values", f), dtype=float)
        if v.shape == self.shape:
            return v
        if v.size != self.n_cells:
            raise ConfigurationError(f"expected {self.n_cells} values, got {v.size}")
        return v.reshape(self.shape)

    def rectangle_averages(self, f) -> dict:
        """<f>_R for every dyadic rectangle, keyed by (l1, l2), arrays of shape (n1, n2)."""
        g1, g2 = self.factors
        X = self.as_array(f)
        first = level_averages_axis(g1, X)
        out = {}
        for l1, A in enumerate(first):
            second = level_averages_axis(g2, A.T)
            for l2, B in enumerate(second):
                out[(l1, l2)] = B.T
        return out


def level_averages_axis(grid: DyadicGrid, X: np.ndarray) -> list[np.ndarray]:
    """Cube averages along axis 0 of X for every level; trailing axes are carried along."""
    out = [None] * (grid.L + 1)
    out[grid.L] = X[grid.cells(grid.L)[:, 0]]
    for lev in range(grid.L - 1, -1, -1):
        out[lev] = out[lev + 1][grid.children(lev)].mean(axis=1)
    return out
