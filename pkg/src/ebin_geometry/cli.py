"""Command-line front end: preset experiments and bound reports.

Usage::

    ebin-geometry run --preset eg2 --r 1 --s 2 --t-max 40 --out eg2.csv

Exit codes: 0 when every gating check passes, 1 when a check fails, 2 on
usage or IO errors.  Outputs are written only after a preset completes, so
an error never leaves a partial file behind.
"""

import argparse
import csv
import io as _io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from . import completion, metric_space
from ._numerics import c_const
from .errors import GeometryError
from .fields import CellMask, GridSpec, MetricField, MetricPath, TangentField
from .io import load_field

__all__ = ["ExperimentConfig", "run", "main", "build_parser", "PRESETS"]

PRESETS = ("eg2", "eg3", "tori", "incompleteness", "conformal", "custom")

# flags each preset accepts besides the common ones
_PRESET_FLAGS = {
    "eg2": {"r", "s", "t_max", "samples", "eps_det", "c_big"},
    "eg3": {"k_max", "eps_det", "c_big"},
    "tori": {"s_param", "smooth_width"},
    "incompleteness": {"alpha", "beta", "samples"},
    "conformal": {"rho0", "rho1", "triples"},
    "custom": {"field0", "field1", "s_param", "smooth_width"},
}


@dataclass
class ExperimentConfig:
    """Validated run configuration."""

    preset: str
    grid: GridSpec
    params: dict = field(default_factory=dict)
    out: str = None
    fmt: str = "json"
    seed: int = 0


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    provenance: str
    gating: bool = True

    def as_row(self):
        return {
            "check": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "pass": self.passed,
            "provenance": self.provenance,
            "gating": self.gating,
        }


@dataclass
class Result:
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def check(self, name, value, threshold, passed, provenance, gating=True):
        self.checks.append(Check(name, float(value), float(threshold), bool(passed), provenance, gating))

    @property
    def ok(self):
        return all(c.passed for c in self.checks if c.gating)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Presets


def _rel(a, b):
    return abs(a - b) / abs(b)


def _preset_eg2(cfg):
    p = cfg.params
    r, s, t_max, samples = p["r"], p["s"], p["t_max"], p["samples"]
    grid = cfg.grid
    if grid.n != 2:
        raise UsageError("eg2 needs a two-dimensional grid")
    times = np.linspace(1.0, t_max, samples)

    def val(t):
        return np.diag([math.exp(r * t), math.exp(-s * t)])

    def vel(t):
        return np.diag([r * math.exp(r * t), -s * math.exp(-s * t)])

    path = MetricPath.from_function(grid, times, val, vel)
    speeds = metric_space.path_speeds(path)
    amp = math.hypot(r, s)
    analytic = amp * np.exp((r - s) * times / 4.0)
    cumulative = integrate.cumulative_simpson(speeds, x=times, initial=0.0)
    if r == s:
        exact_cum = amp * (times - times[0])
    else:
        k = (r - s) / 4.0
        exact_cum = amp / k * (np.exp(k * times) - math.exp(k * times[0]))
    res = Result()
    res.tables["path"] = [
        dict(
            t=float(t), speed=float(v), analytic_speed=float(a),
            rel_err=float(abs(v - a) / a), cumulative_length=float(c),
            analytic_length=float(e), provenance="quadrature",
        )
        for t, v, a, c, e in zip(times, speeds, analytic, cumulative, exact_cum)
    ]
    speed_err = float(np.max(np.abs(speeds - analytic) / analytic))
    length = metric_space.path_length(path, rule="simpson")
    res.check("speed_rel_err", speed_err, 1e-10, speed_err <= 1e-10, "formula")
    res.check("length_rel_err", _rel(length, exact_cum[-1]), 1e-6,
              _rel(length, exact_cum[-1]) <= 1e-6, "quadrature")
    seq = [MetricField.constant(grid, val(float(t))) for t in range(1, int(t_max) + 1)]
    defl, unb = completion.deflated_unbounded_sets(seq, p["eps_det"], p["c_big"])
    if s > r:
        res.check("deflated_fraction", defl.count() / grid.n_cells, 1.0,
                  defl.count() == grid.n_cells, "formula")
    res.check("unbounded_fraction", unb.count() / grid.n_cells, 1.0,
              unb.count() == grid.n_cells, "formula")
    return res


def _preset_eg3(cfg):
    p = cfg.params
    grid = cfg.grid
    if grid.n != 2:
        raise UsageError("eg3 needs a two-dimensional grid")
    ks = range(1, p["k_max"] + 1)
    seq = [MetricField.constant(grid, np.diag([abs(math.cos(k)), 1.0 / k])) for k in ks]
    rep = completion.omega_limit(seq, eps_det=p["eps_det"], c_big=p["c_big"])
    analytic = np.array([math.sqrt(abs(math.cos(k)) / k) for k in ks])
    vol_err = float(np.max(np.abs(rep.volume_trace - analytic)))
    rows = completion.volume_convergence_report(
        seq, rep.omega_limit, {"all": CellMask.full(grid)}, deflated=rep.deflated
    )
    res = Result()
    res.tables["volume"] = [
        dict(k=k, volume=float(v), analytic=float(a), provenance="formula")
        for k, v, a in zip(ks, rep.volume_trace, analytic)
    ]
    n_cells = grid.n_cells
    res.check("deflated_fraction", rep.deflated.count() / n_cells, 1.0,
              rep.deflated.count() == n_cells, "formula")
    res.check("unbounded_fraction", rep.unbounded.count() / n_cells, 0.0,
              rep.unbounded.count() == 0, "formula")
    lim = float(np.max(np.abs(rep.omega_limit.values)))
    res.check("omega_limit_max_abs", lim, 0.0, lim == 0.0, "formula")
    res.check("volume_trace_err", vol_err, 1e-12, vol_err <= 1e-12, "formula")
    cor = rows[-1]
    res.check("deflated_volume_decay", cor["decay"] or 0.0, 0.1, cor["pass"], "sweep")
    res.tables["certificate"] = [
        dict(window=str(w), diameter=d, provenance="formula")
        for w, d in zip(rep.cauchy_certificate["windows"], rep.cauchy_certificate["diameter"])
    ]
    return res


def _tori_fields(grid):
    g0 = MetricField.constant(grid, np.diag([10.0, 1e-5]))
    g1 = MetricField.constant(grid, np.diag([1e10, 1e-14]))
    return g0, g1


def _sweep_result(g0, g1, E, p, res):
    bound = metric_space.smallvol_bound(g0, g1, E)
    widths = sorted({0.0, p["smooth_width"]})
    rows, best = metric_space.smallvol_sweep(g0, g1, E, widths=widths)
    res.tables["sweep"] = [dict(row, provenance="sweep") for row in rows]
    res.tables.setdefault("bounds", []).extend([
        dict(quantity="C(n)", value=c_const(g0.n), provenance="formula"),
        dict(quantity="smallvol_bound", value=bound, provenance="formula"),
        dict(quantity="best_length", value=best["length"], s=best["s"],
             smooth_width=best["smooth_width"], provenance="sweep"),
    ])
    # s = 1 leaves the metrics unscaled: the straight path
    straight = next(r["length"] for r in rows if r["s"] == 1.0 and r["smooth_width"] == 0.0)
    res.tables["bounds"].append(dict(quantity="straight_length", value=straight, provenance="quadrature"))
    for w in widths:
        lengths = [r["length"] for r in rows if r["smooth_width"] == w]
        mono = all(b <= a + 1e-9 for a, b in zip(lengths, lengths[1:]))
        # sharp-mask lengths are affine in s^(n/4), so they decrease iff bound <= straight
        gating = w == 0.0 and bound <= straight
        res.check(f"monotone_in_s[w={w:g}]", float(mono), 1.0, mono, "sweep", gating=gating)
    res.check("best_over_bound", best["length"] / bound, 1.1,
              best["length"] <= 1.1 * bound, "sweep")
    if p.get("s_param") is not None:
        length = metric_space.dist_upper_smallvol(g0, g1, E, p["s_param"], p["smooth_width"])
        res.tables["bounds"].append(
            dict(quantity="length_at_s", value=length, s=p["s_param"],
                 smooth_width=p["smooth_width"], provenance="quadrature")
        )
        res.check("length_at_s_over_bound", length / bound, 1.1, length <= 1.1 * bound,
                  "quadrature", gating=False)
    return bound


def _preset_tori(cfg):
    grid = cfg.grid
    if grid.n != 2:
        raise UsageError("tori needs a two-dimensional grid")
    g0, g1 = _tori_fields(grid)
    res = Result()
    v0, v1 = metric_space.volume(g0), metric_space.volume(g1)
    res.check("vol_g0", v0, 0.01, abs(v0 - 0.01) <= 1e-12, "formula")
    res.check("vol_g1", v1, 0.01, abs(v1 - 0.01) <= 1e-12, "formula")
    _sweep_result(g0, g1, CellMask.full(grid), cfg.params, res)
    return res


def _preset_incompleteness(cfg):
    p = cfg.params
    grid = cfg.grid
    n = grid.n
    alpha, beta, samples = p["alpha"], p["beta"], p["samples"]
    if alpha >= 0:
        raise UsageError("--alpha must be negative")
    x = grid.coordinates()
    bump = np.prod([np.sin(2 * math.pi * xi) for xi in x], axis=0)
    g0 = MetricField(grid, (1.0 + 0.5 * bump)[..., None, None] * np.eye(n))
    coef = alpha * (1.0 + 0.25 * np.cos(2 * math.pi * x[0]))
    hv = coef[..., None, None] * g0.values
    if beta and n >= 2:
        t = np.zeros((n, n))
        t[0, 0], t[1, 1] = beta, -beta
        left = (x[0] < 0.5)[..., None, None]
        hv = hv + np.where(left, t, 0.0)
    h = TangentField(grid, hv)
    h = h * (1.0 / metric_space.l2_norm(g0, h))
    norm = metric_space.l2_norm(g0, h)
    sup = metric_space.exp_domain_sup(g0, h)
    res = Result()
    res.check("domain_sup_finite", sup, math.inf, math.isfinite(sup), "formula")
    if not math.isfinite(sup):
        return res
    tau = sup * (1.0 - 1e-4)
    times = np.linspace(0.0, tau, samples)
    path = MetricPath(times, [metric_space.exp_field(g0, h, t) for t in times])
    speeds = metric_space.path_speeds(path)
    length = metric_space.path_length(path)
    res.tables["path"] = [
        dict(t=float(t), speed=float(v), provenance="quadrature") for t, v in zip(times, speeds)
    ]
    res.tables["bounds"] = [
        dict(quantity="domain_sup", value=sup, provenance="formula"),
        dict(quantity="h_norm", value=norm, provenance="quadrature"),
        dict(quantity="path_length", value=length, provenance="quadrature"),
    ]
    e1 = _rel(length, sup * norm)
    # the exact deficit equals the tolerance, so allow rounding on top
    res.check("length_vs_domain_sup", e1, 1e-4, e1 <= 1e-4 * (1 + 1e-9), "quadrature")
    e2 = _rel(length, tau * norm)
    # exact only when the path is quadratic in t (pure trace, n = 2)
    res.check("length_vs_tau_norm", e2, 1e-8, e2 <= 1e-8, "quadrature",
              gating=beta == 0 and n == 2)
    return res


def _preset_conformal(cfg):
    p = cfg.params
    grid = cfg.grid
    g = MetricField.identity(grid)
    rho0, rho1 = p["rho0"], p["rho1"]
    d = completion.conformal_distance(rho0, rho1, g)
    res = Result()
    rows = [dict(quantity="distance", value=d, provenance="formula")]
    if rho0 > 0 and rho1 > 0:
        q = completion.conformal_path_length(rho0, rho1, g)
        rows.append(dict(quantity="radial_path_length", value=q, provenance="quadrature"))
        res.check("quadrature_residual", abs(q - d), 1e-10, abs(q - d) <= 1e-10, "quadrature")
    if grid.n == 2 and (rho0, rho1) == (1.0, 4.0):
        ref = 2.0 * math.sqrt(2.0)
        res.check("distance_vs_2sqrt2", abs(d - ref), 1e-12, abs(d - ref) <= 1e-12, "formula")
    rng = np.random.default_rng(cfg.seed)
    sym_err, tri_slack = 0.0, math.inf
    for _ in range(p["triples"]):
        a, b, c = (rng.exponential(size=grid.dims) * rng.integers(0, 2, grid.dims) for _ in range(3))
        dab = completion.conformal_distance(a, b, g)
        sym_err = max(sym_err, abs(dab - completion.conformal_distance(b, a, g)))
        slack = dab + completion.conformal_distance(b, c, g) - completion.conformal_distance(a, c, g)
        tri_slack = min(tri_slack, slack)
    if p["triples"]:
        res.check("symmetry_err", sym_err, 1e-10, sym_err <= 1e-10, "formula")
        res.check("triangle_min_slack", tri_slack, -1e-10, tri_slack >= -1e-10, "formula")
    res.tables["bounds"] = rows
    return res


def _preset_custom(cfg):
    p = cfg.params
    if not p.get("field0") or not p.get("field1"):
        raise UsageError("custom needs --field0 and --field1")
    g0 = load_field(p["field0"])
    g1 = load_field(p["field1"])
    if g0.grid != g1.grid:
        raise UsageError("the two fields live on different grids")
    E = CellMask(g0.grid, np.any(g0.values != g1.values, axis=(-1, -2)))
    res = Result()
    lo, up = metric_space.theta_Y(g0, g1)
    rows = [
        dict(quantity="vol_g0", value=metric_space.volume(g0), provenance="formula"),
        dict(quantity="vol_g1", value=metric_space.volume(g1), provenance="formula"),
        dict(quantity="theta_lower", value=lo, provenance="formula"),
        dict(quantity="theta_upper", value=up, provenance="quadrature"),
        dict(quantity="dist_upper", value=metric_space.dist_upper(g0, g1), provenance="quadrature"),
    ]
    res.tables["bounds"] = rows
    res.check("theta_interval", lo - up, 0.0, lo <= up, "formula")
    if E.any():
        _sweep_result(g0, g1, E, p, res)
    return res


_RUNNERS = {
    "eg2": _preset_eg2,
    "eg3": _preset_eg3,
    "tori": _preset_tori,
    "incompleteness": _preset_incompleteness,
    "conformal": _preset_conformal,
    "custom": _preset_custom,
}


# ---------------------------------------------------------------------------
# Output


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _clean(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def render(cfg, result):
    """Serialise a result; identical inputs give identical text."""
    if cfg.fmt == "json":
        doc = {
            "preset": cfg.preset,
            "grid": {"n": cfg.grid.n, "dims": list(cfg.grid.dims)},
            "params": cfg.params,
            "seed": cfg.seed,
            "tables": result.tables,
            "checks": [c.as_row() for c in result.checks],
            "pass": result.ok,
        }
        return json.dumps(_clean(doc), sort_keys=True, indent=1, allow_nan=False) + "\n"
    records = []
    for name, rows in result.tables.items():
        for row in rows:
            records.append(dict(record="row", table=name, **row))
    for c in result.checks:
        records.append(dict(record="check", table="checks", **c.as_row()))
    keys = ["record", "table"]
    for rec in records:
        keys.extend(k for k in rec if k not in keys)
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: _fmt(v) for k, v in rec.items()})
    return buf.getvalue()


def run(cfg, stream=None):
    """Execute a preset and write its output; returns the exit code."""
    stream = sys.stderr if stream is None else stream
    try:
        result = _RUNNERS[cfg.preset](cfg)
        text = render(cfg, result)
    except UsageError as exc:
        print(f"error: {exc}", file=stream)
        return 2
    except (GeometryError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stream)
        return 2
    try:
        if cfg.out:
            tmp = Path(str(cfg.out) + ".part")
            tmp.write_text(text)
            os.replace(tmp, cfg.out)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        if cfg.out:
            Path(str(cfg.out) + ".part").unlink(missing_ok=True)
        print(f"error: cannot write output: {exc}", file=stream)
        return 2
    for c in result.checks:
        if not c.passed:
            tag = "check failed" if c.gating else "note"
            print(f"{tag}: {c.name} = {c.value!r} (threshold {c.threshold!r})", file=stream)
    return 0 if result.ok else 1


# ---------------------------------------------------------------------------
# Argument parsing


def _grid_arg(text):
    try:
        dims = tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use e.g. 64x64")
    if not dims or len(dims) > 4 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return dims


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ebin-geometry", description="L2 geometry of metrics on a flat torus."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a preset experiment")
    r.add_argument("--preset", required=True, choices=PRESETS)
    r.add_argument("--grid", type=_grid_arg, default=None, help="cells per axis, e.g. 64x64")
    r.add_argument("--out", default=None, help="output file (stdout if omitted)")
    r.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None,
                   help="defaults to the --out suffix, else json")
    r.add_argument("--seed", type=int, default=0, help="seed of randomised sweeps")
    r.add_argument("--r", type=float, help="eg2: growth rate of the first diagonal entry")
    r.add_argument("--s", type=float, help="eg2: decay rate of the second diagonal entry")
    r.add_argument("--t-max", type=float, help="eg2: final time (path starts at t = 1)")
    r.add_argument("--samples", type=int, help="eg2, incompleteness: number of time samples")
    r.add_argument("--k-max", type=int, help="eg3: length of the sequence prefix")
    r.add_argument("--alpha", type=float, help="incompleteness: pure-trace coefficient (negative)")
    r.add_argument("--beta", type=float, help="incompleteness: spatial modulation of the coefficient")
    r.add_argument("--s-param", type=float, help="tori, custom: single scaling parameter in (0, 1]")
    r.add_argument("--smooth-width", type=float, help="tori, custom: mask smoothing width")
    r.add_argument("--eps-det", type=float, help="eg2, eg3: deflation threshold on det")
    r.add_argument("--c-big", type=float, help="eg2, eg3: entry bound for the unbounded set")
    r.add_argument("--rho0", type=float, help="conformal: first factor (>= 0)")
    r.add_argument("--rho1", type=float, help="conformal: second factor (>= 0)")
    r.add_argument("--triples", type=int, help="conformal: random triples for the metric axioms")
    r.add_argument("--field0", help="custom: .mfield file for g0")
    r.add_argument("--field1", help="custom: .mfield file for g1")
    return parser


_DEFAULTS = {
    "eg2": dict(r=1.0, s=2.0, t_max=40.0, samples=400, eps_det=1e-8, c_big=1e6),
    "eg3": dict(k_max=200, eps_det=1e-3, c_big=1e6),
    "tori": dict(s_param=None, smooth_width=0.0),
    "incompleteness": dict(alpha=-2.0, beta=0.0, samples=201),
    "conformal": dict(rho0=1.0, rho1=4.0, triples=200),
    "custom": dict(field0=None, field1=None, s_param=None, smooth_width=0.0),
}


def config_from_args(args):
    preset = args.preset
    allowed = _PRESET_FLAGS[preset]
    given = {
        k: v for k, v in vars(args).items()
        if k not in {"command", "preset", "grid", "out", "fmt", "seed"} and v is not None
    }
    stray = sorted(set(given) - allowed)
    if stray:
        flags = ", ".join("--" + s.replace("_", "-") for s in stray)
        raise UsageError(f"preset {preset} does not accept {flags}")
    params = dict(_DEFAULTS[preset])
    params.update(given)
    _validate(preset, params)
    dims = args.grid or (64, 64)
    grid = GridSpec(len(dims), dims)
    fmt = args.fmt
    if fmt is None:
        fmt = "csv" if args.out and str(args.out).endswith(".csv") else "json"
    return ExperimentConfig(preset, grid, params, args.out, fmt, args.seed)


def _validate(preset, p):
    def need(cond, msg):
        if not cond:
            raise UsageError(msg)

    for key in ("r", "s", "t_max", "rho0", "rho1", "eps_det", "c_big", "smooth_width", "s_param",
                "alpha", "beta"):
        if p.get(key) is not None:
            need(math.isfinite(p[key]), f"--{key.replace('_', '-')} must be finite")
    if preset == "eg2":
        need(p["r"] > 0 and p["s"] > 0, "--r and --s must be positive")
        need(p["t_max"] > 1, "--t-max must exceed 1")
        need(p["samples"] >= 3, "--samples must be at least 3")
    if preset == "eg3":
        need(p["k_max"] >= 4, "--k-max must be at least 4")
    if preset in ("eg2", "eg3"):
        need(p["eps_det"] > 0 and p["c_big"] > 0, "--eps-det and --c-big must be positive")
    if preset in ("tori", "custom"):
        need(p["smooth_width"] >= 0, "--smooth-width must be nonnegative")
        if p["s_param"] is not None:
            need(0 < p["s_param"] <= 1, "--s-param must lie in (0, 1]")
    if preset == "incompleteness":
        need(p["samples"] >= 3, "--samples must be at least 3")
    if preset == "conformal":
        need(p["rho0"] >= 0 and p["rho1"] >= 0, "conformal factors must be nonnegative")
        need(p["triples"] >= 0, "--triples must be nonnegative")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (UsageError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
