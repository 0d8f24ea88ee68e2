"""Command-line driver: deterministic CSV tables and JSON reports for the experiments.

Exit codes: 0 success, 2 invalid configuration, 3 a residual or threshold check failed.
A text config (``key = value`` lines, keys named like the long options) fills every
option that was not given on the command line. With ``--out DIR`` each command writes
DIR/<command>.csv and DIR/<command>.json, otherwise the CSV goes to stdout. The worker
count for sweeps comes from DYADIC_REP_WORKERS (default 1); rows are always emitted in
input order.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__

WORKERS_ENV = "DYADIC_REP_WORKERS"
EXIT_INVALID = 2
EXIT_THRESHOLD = 3


class ConfigError(click.ClickException):
    exit_code = EXIT_INVALID

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


# ----------------------------------------------------------------- config plumbing

def _parse_config(path: str) -> tuple[dict, list[str]]:
    out, problems = {}, []
    for no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            problems.append(f"line {no}: expected 'key = value', got {raw.strip()!r}")
            continue
        out[key.strip().replace("-", "_")] = value.strip()
    return out, problems


def _int_range(text) -> list[int]:
    """'0-6', '0,2,4' or a single integer."""
    if isinstance(text, (list, tuple, range)):
        return [int(x) for x in text]
    text = str(text).strip()
    if "-" in text[1:] and "," not in text:
        a, b = text.split("-", 1) if not text.startswith("-") else (text, "")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def _float_pair(text) -> tuple | None:
    if text is None or text == "":
        return None
    vals = [float(x) for x in str(text).split(",")]
    return (vals[0], vals[0]) if len(vals) == 1 else (vals[0], vals[1])


def _resolve(ctx: click.Context, schema: dict) -> dict:
    """Merge the command line with the config file and validate every field.

    schema maps a parameter name to (converter, check) where check returns an error
    message or None. All problems are collected before raising.
    """
    params = dict(ctx.params)
    cfg_path = ctx.find_root().params.get("config")
    from_file, problems = _parse_config(cfg_path) if cfg_path else ({}, [])
    problems += [f"{k}: unknown field" for k in sorted(from_file) if k not in schema]
    for name in schema:
        src = ctx.get_parameter_source(name) if name in ctx.params else None
        if name in from_file and src != click.core.ParameterSource.COMMANDLINE:
            params[name] = from_file[name]
    resolved = {}
    for name, (conv, check) in schema.items():
        raw = params.get(name)
        try:
            val = conv(raw) if raw is not None else None
        except (TypeError, ValueError) as exc:
            problems.append(f"{name}: cannot parse {raw!r} ({exc})")
            continue
        msg = check(val) if check is not None else None
        if msg:
            problems.append(f"{name}: {msg}")
        resolved[name] = val
    if problems:
        raise ConfigError(problems)
    return resolved


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError([f"{WORKERS_ENV}: expected an integer, got {raw!r}"])
    if n < 1:
        raise ConfigError([f"{WORKERS_ENV}: must be >= 1"])
    return n


def _map(fn, items):
    items = list(items)
    n = _workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.15g}"
    return str(x)


def config_hash(command: str, config: dict) -> str:
    blob = json.dumps({"command": command, **{k: _jsonable(v) for k, v in config.items()}}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def render_csv(command: str, config: dict, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# dyadic-rep {__version__} command={command} config={config_hash(command, config)}\n")
    if rows:
        cols = list(rows[0])
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join(_fmt(r.get(c, "")) for c in cols) + "\n")
    return buf.getvalue()


def _emit(ctx: click.Context, command: str, config: dict, rows: list[dict], report: dict, ok: bool):
    text = render_csv(command, config, rows)
    out = ctx.find_root().params.get("out")
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{command}.csv").write_text(text)
        payload = {"command": command, "version": __version__, "config": _jsonable(config),
                   "config_hash": config_hash(command, config), "ok": ok, "report": _jsonable(report)}
        (d / f"{command}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        click.echo(text, nl=False)
    if not ok:
        click.echo(f"{command}: threshold check failed", err=True)
        ctx.exit(EXIT_THRESHOLD)


def _positive(v):
    return None if v is None or v > 0 else "must be > 0"


def _in(*choices):
    return lambda v: None if v in choices else f"must be one of {', '.join(map(str, choices))}"


def _at_least(m):
    return lambda v: None if v is None or v >= m else f"must be >= {m}"


# ----------------------------------------------------------------- commands

class _Group(click.Group):
    def invoke(self, ctx):
        from .grid import ConfigurationError
        from .weights import DomainError

        try:
            return super().invoke(ctx)
        except (ConfigurationError, DomainError) as exc:
            raise ConfigError([str(exc)]) from exc


@click.group(cls=_Group)
@click.version_option(__version__)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Text config with 'key = value' lines.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for CSV and JSON outputs.")
def main(config, out):
    """Dyadic representation experiments."""


@main.command()
@click.option("--omega", multiple=True, default=("power:1",), help="Modulus, e.g. power:0.5 or logdamped:2.")
@click.option("--alpha", default="0", help="Dini exponent(s), comma separated.")
@click.option("--k-max", default=None, type=int, help="Truncation of the dyadic sum (default: to convergence).")
@click.pass_context
def dini(ctx, omega, alpha, k_max):
    """Dini functionals and the dyadic-sum comparison."""
    from .moduli import Modulus, dini_dyadic_sum, dini_norm, dyadic_comparison_bound, validate

    def mods(v):
        items = v.split(";") if isinstance(v, str) else list(v)
        return [str(Modulus.parse(s)) for s in items]

    cfg = _resolve(ctx, {
        "omega": (mods, None),
        "alpha": (lambda v: [float(x) for x in str(v).split(",")], lambda v: None if all(a >= 0 for a in v) else "must be >= 0"),
        "k_max": (int, _at_least(1)),
    })
    rows, ok = [], True
    for text in cfg["omega"]:
        w = Modulus.parse(text)
        rep = validate(w)
        for a in cfg["alpha"]:
            res = dini_norm(w, a)
            s = dini_dyadic_sum(w, a, cfg["k_max"])
            bound = dyadic_comparison_bound(w, a)
            holds = bool(res.divergent or s <= bound * (1 + 1e-12))
            ok &= holds
            rows.append({"omega": text, "alpha": a, "valid": rep.ok, "dini_norm": res.value, "divergent": res.divergent,
                         "dyadic_sum": s, "comparison_bound": bound, "comparison_holds": holds})
    _emit(ctx, "dini", cfg, rows, {"rows": rows}, ok)


def _weight_from(spec: str, d: int, L: int, seed: int):
    from .grid import DyadicGrid, GridFunction

    if spec.startswith("power:"):
        a = float(spec.split(":", 1)[1])
        x = (np.indices((1 << L,) * d).reshape(d, -1).T + 0.5) / (1 << L)
        r = np.sqrt(np.sum((x - 0.5) ** 2, axis=1))
        return GridFunction(DyadicGrid(d, L), r ** a)
    if spec == "random":
        g = DyadicGrid(d, L)
        rng = np.random.default_rng(seed)
        return GridFunction(g, np.exp(rng.standard_normal(g.n_cells)))
    return GridFunction.from_bytes(Path(spec).read_bytes())


@main.command("weights-audit")
@click.option("--weight", default="power:0.5", help="power:a, random, or a grid-function .bin file.")
@click.option("--p", default=2.0, type=float)
@click.option("--d", default=1, type=int)
@click.option("--depth", default=8, type=int, help="Grid depth L.")
@click.option("--biparam", is_flag=True, help="Audit seeded product weights and their slices.")
@click.option("--count", default=50, type=int, help="Number of seeded bi-parameter weights.")
@click.option("--seed", default=0, type=int)
@click.option("--tol", default=1e-12, type=float, help="Tolerance of the duality identity.")
@click.pass_context
def weights_audit(ctx, weight, p, d, depth, biparam, count, seed, tol):
    """A_p constants, the A_p duality identity and bi-parameter slice bounds."""
    from .grid import DyadicGrid, ProductGrid
    from .weights import ap_constant, slice_ap_constants

    cfg = _resolve(ctx, {
        "weight": (str, None), "p": (float, lambda v: None if v > 1 else "must be > 1"),
        "d": (int, _in(1, 2, 3)), "depth": (int, _at_least(1)), "biparam": (lambda v: v in (True, "true", "1", "yes"), None),
        "count": (int, _at_least(1)), "seed": (int, None), "tol": (float, _positive),
    })
    P = cfg["p"]
    pp = P / (P - 1.0)
    rows, ok = [], True
    if not cfg["biparam"]:
        w = _weight_from(cfg["weight"], cfg["d"], cfg["depth"], cfg["seed"])
        a = ap_constant(w, P)
        sigma = w.values ** (1.0 - pp)
        b = ap_constant(sigma, pp, grid=w.grid)
        res = abs(b - a ** (1.0 / (P - 1.0))) / max(a ** (1.0 / (P - 1.0)), 1e-300)
        ok = res <= cfg["tol"]
        rows.append({"weight": cfg["weight"], "p": P, "ap": a, "dual_ap": b, "duality_residual": res})
    else:
        L = cfg["depth"]
        for s in range(cfg["count"]):
            rng = np.random.default_rng(cfg["seed"] * 1000 + s)
            grid = ProductGrid(DyadicGrid(1, L), DyadicGrid(1, L))
            v = np.exp(0.5 * rng.standard_normal(grid.shape))
            a = ap_constant(v, P, mode="rectangles", grid=grid)
            s1, s2 = slice_ap_constants(v, P, grid)
            holds = max(s1, s2) <= a * (1 + 1e-12)
            ok &= holds
            rows.append({"seed": s, "p": P, "ap_rect": a, "slice1": s1, "slice2": s2, "slice_bound_holds": holds})
    _emit(ctx, "weights-audit", cfg, rows, {"rows": rows}, ok)


def _decompose_one(args):
    n, k, L, seed = args
    from .grid import DyadicGrid
    from .model_ops import decompose_modified_shift, random_modified_shift

    g = DyadicGrid(1, L, np.random.default_rng(seed).integers(0, 2, (L, 1)))
    Q = random_modified_shift(g, n, k, seed)
    dec = decompose_modified_shift(Q)
    A = Q.to_form().form_tensor() if n == 2 else Q.to_form().matrix()
    B = dec.to_form().form_tensor() if n == 2 else dec.to_form().matrix()
    worst = max((s.check_normalization() for s in dec.shifts), default=0.0)
    return {"n": n, "k": k, "seed": seed, "outputs": len(dec.shifts),
            "residual": float(np.max(np.abs(A - B))), "max_norm_ratio": worst}


def _decompose_bi(args):
    k1, k2, L, seed = args
    from .biparam import decompose_bi_modified_shift, modified_component, random_bi_spec
    from .grid import DyadicGrid, ProductGrid

    rng = np.random.default_rng(seed)
    P = ProductGrid(DyadicGrid(1, L, rng.integers(0, 2, (L, 1))), DyadicGrid(1, L, rng.integers(0, 2, (L, 1))))
    Q = random_bi_spec(P, (modified_component(k1, 1), modified_component(k2, 1)), 1, seed)
    dec = decompose_bi_modified_shift(Q)
    A = Q.to_form().matrix()
    B = dec.to_form().matrix()
    worst = max(s.normalization_ratio() for _, s in dec.shifts)
    return {"k1": k1, "k2": k2, "seed": seed, "outputs": len(dec.shifts),
            "residual": float(np.max(np.abs(A - B))), "max_norm_ratio": worst}


@main.command("decompose-verify")
@click.option("--n", default=1, type=int, help="Linearity (1 or 2).")
@click.option("--k", default="1-5", help="Complexities, e.g. 1-5 or 1,3.")
@click.option("--depth", default=8, type=int)
@click.option("--count", default=5, type=int, help="Seeded tensors per complexity.")
@click.option("--seed", default=0, type=int)
@click.option("--biparam", is_flag=True, help="Bi-parameter linear Q_{k1,k2} over all pairs of --k.")
@click.option("--threshold", default=1e-11, type=float)
@click.pass_context
def decompose_verify(ctx, n, k, depth, count, seed, biparam, threshold):
    """Split modified shifts into standard shifts and compare operators."""
    cfg = _resolve(ctx, {
        "n": (int, _in(1, 2)), "k": (_int_range, lambda v: None if v and min(v) >= 1 else "complexities must be >= 1"),
        "depth": (int, _at_least(2)), "count": (int, _at_least(1)), "seed": (int, None),
        "biparam": (lambda v: v in (True, "true", "1", "yes"), None), "threshold": (float, _positive),
    })
    if max(cfg["k"]) >= cfg["depth"]:
        raise ConfigError([f"k: complexity {max(cfg['k'])} does not fit depth {cfg['depth']}"])
    if cfg["biparam"]:
        jobs = [(k1, k2, cfg["depth"], cfg["seed"] * 1000 + t) for k1 in cfg["k"] for k2 in cfg["k"] for t in range(cfg["count"])]
        rows = _map(_decompose_bi, jobs)
    else:
        jobs = [(cfg["n"], kk, cfg["depth"], cfg["seed"] * 1000 + t) for kk in cfg["k"] for t in range(cfg["count"])]
        rows = _map(_decompose_one, jobs)
    ok = all(r["residual"] < cfg["threshold"] for r in rows)
    _emit(ctx, "decompose-verify", cfg, rows, {"max_residual": max(r["residual"] for r in rows)}, ok)


@main.command("rep-verify")
@click.option("--n", default=1, type=int)
@click.option("--d", default=1, type=int)
@click.option("--depth", default=6, type=int)
@click.option("--kmax", default=None, type=int)
@click.option("--mode", default="enumerate", type=click.Choice(["enumerate", "sample"]))
@click.option("--kernel", default=None, help="Kernel family (default hilbert for n=1, bilinear for n=2).")
@click.option("--kernel2", default="alternating", help="Second-parameter kernel for --biparam.")
@click.option("--count", default=16, type=int, help="Grids when sampling.")
@click.option("--seed", default=0, type=int)
@click.option("--biparam", is_flag=True)
@click.option("--threshold", default=None, type=float, help="Expectation residual threshold (1e-9, bi 1e-8).")
@click.pass_context
def rep_verify(ctx, n, d, depth, kmax, mode, kernel, kernel2, count, seed, biparam, threshold):
    """Verify the dyadic representation grid by grid and in expectation."""
    from .representation import DiscreteOperator, kernel_family

    cfg = _resolve(ctx, {
        "n": (int, _in(1, 2)), "d": (int, _in(1, 2)), "depth": (int, _at_least(2)), "kmax": (int, _at_least(2)),
        "mode": (str, _in("enumerate", "sample")), "kernel": (str, None), "kernel2": (str, None),
        "count": (int, _at_least(1)), "seed": (int, None), "biparam": (lambda v: v in (True, "true", "1", "yes"), None),
        "threshold": (float, _positive),
    })
    problems = []
    if cfg["kmax"] is not None and cfg["kmax"] > cfg["depth"]:
        problems.append(f"kmax: {cfg['kmax']} exceeds depth {cfg['depth']}")
    if cfg["biparam"] and (cfg["n"] != 1 or cfg["d"] != 1 or cfg["depth"] > 5):
        problems.append("biparam: needs n = 1, d = 1 and depth <= 5")
    if problems:
        raise ConfigError(problems)
    kern = cfg["kernel"] or ("hilbert" if cfg["n"] == 1 else "bilinear")
    try:
        if cfg["biparam"]:
            from .biparam import BiDiscreteOperator, verify_bi_representation

            T1 = DiscreteOperator.from_kernel(kernel_family(kern, 1, 1, cfg["depth"], seed=cfg["seed"]))
            T2 = DiscreteOperator.from_kernel(kernel_family(cfg["kernel2"], 1, 1, cfg["depth"], seed=cfg["seed"] + 1))
            rep = verify_bi_representation(BiDiscreteOperator.tensor_product(T1, T2), mode=cfg["mode"],
                                           seed=cfg["seed"], count=cfg["count"])
            thr = cfg["threshold"] or 1e-8
            rows = [{"kind": k, "residual": v} for k, v in sorted(rep.kind_residuals.items())]
            summary = {"grids": rep.grids, "value": rep.value, "per_grid_residual": rep.per_grid_residual,
                       "expectation_residual": rep.expectation_residual}
        else:
            from .representation import verify_representation

            T = DiscreteOperator.from_kernel(kernel_family(kern, cfg["n"], cfg["d"], cfg["depth"], seed=cfg["seed"]))
            rep = verify_representation(T, cfg["kmax"], mode=cfg["mode"], seed=cfg["seed"], count=cfg["count"])
            thr = cfg["threshold"] or 1e-9
            rows = [{"band": k, "residual": v, "phi_ratio": rep.phi_ratio.get(k, 0.0), "rem_ratio": rep.rem_ratio.get(k, 0.0)}
                    for k, v in sorted(rep.band_residuals.items())]
            summary = {"grids": rep.grids, "value": rep.value, "per_grid_residual": rep.per_grid_residual,
                       "expectation_residual": rep.expectation_residual, "tail": rep.tail}
    except ValueError as exc:
        raise ConfigError([str(exc)])
    rows = [{"band" if not cfg["biparam"] else "kind": "total", "residual": summary["expectation_residual"],
             **({} if cfg["biparam"] else {"phi_ratio": "", "rem_ratio": ""})}] + rows
    ok = summary["expectation_residual"] < thr and summary["per_grid_residual"] < 10 * thr
    _emit(ctx, "rep-verify", cfg, rows, summary, ok)


def _norm_row(args):
    family, k, p, L, seed = args
    from .grid import DyadicGrid
    from .model_ops import adversarial_modified_shift, adversarial_standard_shift, operator_norm

    grid = DyadicGrid(1, L)
    s = seed * 1000 + 17 * k
    spec = adversarial_modified_shift(grid, k, s) if family == "Qk" else adversarial_standard_shift(grid, k, k, s)
    val = operator_norm(spec, p=p, seed=s).value
    law = np.sqrt(k + 1.0) if family == "Qk" else 1.0
    return {"k": k, "norm": val, "law": law, "ratio": val / law}


def _bi_norm_row(args):
    k1, k2, L, weight, seed = args
    from .biparam import adversarial_bi_shift, power_weight, weighted_norm
    from .grid import DyadicGrid, ProductGrid

    grid = ProductGrid(DyadicGrid(1, L), DyadicGrid(1, L))
    w = power_weight(grid, weight) if weight is not None else None
    s = seed * 1000 + 31 * k1 + 7 * k2
    norm = weighted_norm(adversarial_bi_shift(grid, (k1, k2), s, "Qk"), w, seed=s)
    law = float(np.sqrt((k1 + 1.0) * (k2 + 1.0)))
    return {"k1": k1, "k2": k2, "norm": norm, "law": law, "ratio": norm / law}


@main.command("norm-growth")
@click.option("--kind", default="Qk", help="Qk or S (one parameter); Qk, Qpi, Si, Spi, Pi with --biparam.")
@click.option("--k", default="0-8", help="Complexity range.")
@click.option("--p", default=2.0, type=float)
@click.option("--depth", default=12, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--biparam", is_flag=True)
@click.option("--weight", default=None, help="Power-weight exponents a1,a2 (bi-parameter only).")
@click.option("--max-spread", default=3.0, type=float, help="Largest allowed max/min ratio.")
@click.pass_context
def norm_growth(ctx, kind, k, p, depth, seed, biparam, weight, max_spread):
    """Norms of adversarial model operators against their square-root laws."""
    cfg = _resolve(ctx, {
        "kind": (str, None), "k": (_int_range, lambda v: None if v and min(v) >= 0 else "complexities must be >= 0"),
        "p": (float, lambda v: None if v > 1 else "must be > 1"), "depth": (int, _at_least(2)), "seed": (int, None),
        "biparam": (lambda v: v in (True, "true", "1", "yes"), None), "weight": (_float_pair, None),
        "max_spread": (float, _positive),
    })
    problems = []
    kinds = ("Qk", "Qpi", "Si", "Spi", "Pi") if cfg["biparam"] else ("Qk", "S")
    if cfg["kind"] not in kinds:
        problems.append(f"kind: must be one of {', '.join(kinds)}")
    if max(cfg["k"]) >= cfg["depth"]:
        problems.append(f"k: complexity {max(cfg['k'])} does not fit depth {cfg['depth']}")
    if cfg["biparam"] and cfg["p"] != 2:
        problems.append("p: bi-parameter norms are measured at p = 2")
    if cfg["weight"] is not None and not cfg["biparam"]:
        problems.append("weight: only used with --biparam")
    if problems:
        raise ConfigError(problems)
    if cfg["biparam"]:
        from .biparam import bi_norm_experiments

        if cfg["kind"] == "Qk":
            jobs = [(a, b, cfg["depth"], cfg["weight"], cfg["seed"]) for a in cfg["k"] for b in cfg["k"]]
            rows = _map(_bi_norm_row, jobs)
        else:
            rows = bi_norm_experiments(cfg["kind"], cfg["k"], weight=cfg["weight"], seed=cfg["seed"],
                                       L=(cfg["depth"], cfg["depth"]))
    else:
        rows = _map(_norm_row, [(cfg["kind"], kk, cfg["p"], cfg["depth"], cfg["seed"]) for kk in cfg["k"]])
    ratios = [r["ratio"] for r in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
    ok = spread <= cfg["max_spread"]
    _emit(ctx, "norm-growth", cfg, rows, {"spread": spread}, ok)


@main.command("commutator-growth")
@click.option("--order", default=1, type=int, help="Number of nested commutators with the same symbol.")
@click.option("--complexities", default="0-6")
@click.option("--weights", nargs=2, default=None, type=click.Path(exists=True, dir_okay=False),
              help="mu.bin lambda.bin grid-function dumps.")
@click.option("--mu-exp", default=0.4, type=float, help="Power exponent of mu when no files are given.")
@click.option("--lam-exp", default=-0.4, type=float)
@click.option("--p", default=2.0, type=float)
@click.option("--depth", default=10, type=int)
@click.option("--family", default="coherent", type=click.Choice(["coherent", "rank1"]))
@click.option("--seed", default=0, type=int)
@click.option("--max-spread", default=3.0, type=float)
@click.pass_context
def commutator_growth(ctx, order, complexities, weights, mu_exp, lam_exp, p, depth, family, seed, max_spread):
    """Bloom-weighted commutator norms against (1 + i)^{order / 2}."""
    from .commutators import bloom_growth_experiment
    from .grid import GridFunction

    cfg = _resolve(ctx, {
        "order": (int, _in(1, 2, 3)), "complexities": (_int_range, lambda v: None if v and min(v) >= 0 else "must be >= 0"),
        "weights": (lambda v: tuple(v.split(",")) if isinstance(v, str) else tuple(v), None),
        "mu_exp": (float, None), "lam_exp": (float, None), "p": (float, _in(2.0)), "depth": (int, _at_least(2)),
        "family": (str, _in("coherent", "rank1")), "seed": (int, None), "max_spread": (float, _positive),
    })
    if max(cfg["complexities"]) >= cfg["depth"]:
        raise ConfigError([f"complexities: {max(cfg['complexities'])} does not fit depth {cfg['depth']}"])
    mu = lam = None
    if cfg["weights"]:
        mu_f, lam_f = (GridFunction.from_bytes(Path(x).read_bytes()) for x in cfg["weights"])
        if mu_f.grid.n_cells != 1 << cfg["depth"] or lam_f.grid.n_cells != 1 << cfg["depth"]:
            raise ConfigError(["weights: grid sizes do not match depth"])
        mu, lam = mu_f.values, lam_f.values
    try:
        res = bloom_growth_experiment(cfg["complexities"], cfg["mu_exp"], cfg["lam_exp"], cfg["p"], cfg["seed"],
                                      cfg["depth"], cfg["order"], mu, lam, cfg["family"])
    except ValueError as exc:
        raise ConfigError([f"weights: {exc}"])
    rows = res["rows"]
    ratios = [r["ratio"] for r in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
    ok = spread <= cfg["max_spread"]
    report = {k: v for k, v in res.items() if k != "rows"}
    report["spread"] = spread
    _emit(ctx, "commutator-growth", cfg, rows, report, ok)


if __name__ == "__main__":
    sys.exit(main())
