"""Moduli of continuity and their Dini functionals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ConfigurationError

_GL_CACHE: dict = {}


@dataclass(frozen=True)
class Modulus:
    """omega(t) on [0, 1].

    kinds: "power" (t^gamma), "logdamped" (t (1 + log 1/t)^{-beta}) and "table"
    (values at t = 2^{-k}, k = 0, 1, ..., linear in between and linear down to 0
    below the last point).
    """

    kind: str
    params: tuple = ()
    table: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("power", "logdamped", "table"):
            raise ConfigurationError(f"unknown modulus kind {self.kind!r}")
        if self.kind == "table" and len(self.table) < 1:
            raise ConfigurationError("a tabulated modulus needs at least one value")
        if self.kind in ("power", "logdamped") and len(self.params) != 1:
            raise ConfigurationError(f"{self.kind} modulus takes one parameter")

    @classmethod
    def parse(cls, text: str) -> "Modulus":
        """'power:0.5', 'logdamped:2' or 'table:1,0.6,0.3'."""
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower().replace("-", "")
        if not rest:
            raise ConfigurationError(f"modulus spec {text!r} needs parameters after ':'")
        try:
            vals = tuple(float(x) for x in rest.split(","))
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse modulus parameters in {text!r}") from exc
        if kind == "table":
            return cls("table", (), vals)
        return cls(kind, vals)

    def __str__(self):
        if self.kind == "table":
            return "table:" + ",".join(f"{v:g}" for v in self.table)
        return f"{self.kind}:{self.params[0]:g}"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            g = self.params[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(t > 0, np.abs(t) ** g, 0.0 if g > 0 else 1.0)
            return out
        if self.kind == "logdamped":
            b = self.params[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(t > 0, t * (1.0 + np.log(1.0 / np.where(t > 0, t, 1.0))) ** (-b), 0.0)
            return out
        vals = np.asarray(self.table, dtype=float)
        pts = 2.0 ** -np.arange(len(vals))
        tail = vals[-1] * t / pts[-1]
        inside = np.interp(t, pts[::-1], vals[::-1])
        return np.where(t >= pts[-1], inside, tail)

    def at_log(self, u):
        """omega(e^{-u}) without underflow trouble for the power and log-damped kinds."""
        u = np.asarray(u, dtype=float)
        if self.kind == "power":
            return np.exp(-self.params[0] * u)
        if self.kind == "logdamped":
            return np.exp(-u) * (1.0 + u) ** (-self.params[0])
        return self(np.exp(-u))


@dataclass
class ValidationReport:
    ok: bool
    violations: list
    samples: int


def validate(omega: Modulus, samples: int = 64) -> ValidationReport:
    """Check omega(0) = 0, monotonicity and subadditivity on the points j / N, N = 2^ceil(log2 samples)."""
    if samples < 8:
        raise ConfigurationError("validation needs at least 8 samples")
    N = 1 << int(np.ceil(np.log2(samples)))
    N = min(N, 1 << 12)
    t = np.arange(N + 1) / N
    w = omega(t)
    bad = []
    if abs(w[0]) > 0:
        bad.append(("zero", 0.0, float(w[0])))
    dec = np.nonzero(np.diff(w) < -1e-15)[0]
    for i in dec[:10]:
        bad.append(("monotone", float(t[i]), float(t[i + 1])))
    # omega(s + t) <= omega(s) + omega(t) for grid points with s + t <= 1
    i = np.arange(N + 1)
    S, T = np.meshgrid(i, i, indexing="ij")
    mask = (S + T <= N) & (S <= T)
    lhs = w[(S + T)[mask]]
    rhs = w[S[mask]] + w[T[mask]]
    viol = np.nonzero(lhs > rhs * (1 + 1e-12) + 1e-15)[0]
    for v in viol[:10]:
        bad.append(("subadditive", float(t[S[mask][v]]), float(t[T[mask][v]])))
    return ValidationReport(not bad, bad, N)


def _gauss_legendre(m: int):
    if m not in _GL_CACHE:
        _GL_CACHE[m] = np.polynomial.legendre.leggauss(m)
    return _GL_CACHE[m]


@dataclass
class DiniResult:
    value: float
    divergent: bool
    upper_limit: float  # largest u = log(1/t) reached


def dini_norm(omega: Modulus, alpha: float, quad_points: int = 24, rtol: float = 1e-6, u_max: float = 2.0**14) -> DiniResult:
    """int_0^1 omega(t) (1 + log 1/t)^alpha dt/t, computed as int_0^inf omega(e^{-u}) (1+u)^alpha du.

    Composite Gauss-Legendre on unit panels up to u = 16, then doubling panels. If a
    panel still contributes more than rtol of the running total at u_max the integral
    is flagged divergent and the partial value is returned.
    """
    if alpha < 0:
        raise ConfigurationError("alpha must be >= 0")
    x, wq = _gauss_legendre(quad_points)
    # unit panels up to u = 16, split at the kinks u = j log 2 of a tabulated modulus
    edges = set(np.arange(1.0, 17.0).tolist())
    if omega.kind == "table":
        edges |= {j * np.log(2.0) for j in range(1, len(omega.table)) if j * np.log(2.0) < 16}
    edges = sorted(edges)
    total = 0.0
    a = 0.0
    while True:
        b = next(e for e in edges if e > a) if a < 16 else 2.0 * a
        u = 0.5 * (b - a) * x + 0.5 * (a + b)
        piece = 0.5 * (b - a) * float(np.sum(wq * omega.at_log(u) * (1.0 + u) ** alpha))
        total += piece
        a = b
        if a >= 16 and abs(piece) <= 1e-3 * rtol * abs(total):
            return DiniResult(total, False, a)
        if a >= u_max:
            return DiniResult(total, abs(piece) > rtol * abs(total), a)


def dini_dyadic_sum(omega: Modulus, alpha: float, k_max: int | None = None, max_terms: int = 100_000) -> float:
    """sum_{k=1}^{k_max} omega(2^{-k}) k^alpha; k_max=None sums until the terms are negligible."""
    if k_max is not None:
        if k_max < 1:
            raise ConfigurationError("k_max must be >= 1")
        k = np.arange(1, k_max + 1, dtype=float)
        return float(np.sum(omega.at_log(k * np.log(2.0)) * k**alpha))
    total = 0.0
    for start in range(1, max_terms, 1000):
        k = np.arange(start, start + 1000, dtype=float)
        terms = omega.at_log(k * np.log(2.0)) * k**alpha
        total += float(np.sum(terms))
        if terms[-1] <= 1e-17 * total:
            break
    return total


def dyadic_comparison_bound(omega: Modulus, alpha: float) -> float:
    """Explicit upper bound for dini_dyadic_sum(omega, alpha): (1 / log 2)^{1 + alpha} dini_norm(omega, alpha).

    On [2^{-k}, 2^{-k+1}] one has omega(t) >= omega(2^{-k}) and k <= (1 + log(1/t)) / log 2.
    """
    return float(np.log(2.0) ** (-1.0 - alpha) * dini_norm(omega, alpha).value)


def representation_weight_sum(omega: Modulus, k_from: int = 0, k_to: int | None = None) -> float:
    """sum_{k=k_from}^{k_to} omega(2^{-k}) sqrt(k + 1), the series weighting the model operators."""
    stop = k_to if k_to is not None else 4000
    k = np.arange(k_from, stop + 1, dtype=float)
    return float(np.sum(omega.at_log(k * np.log(2.0)) * np.sqrt(k + 1.0)))
