"""Command line front end: run, scan, oracle, validate.

Flags mirror flat INI config keys one to one; explicit flags override
config-file values. Every run/scan output embeds the fully resolved
configuration and master seed, and feeding that config back in
reproduces the identical results. Exit codes: 0 success, 1 validation
failure, 2 argument or config error.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import sys
from typing import Optional

from . import oracles
from .engine import SCHEMA, Status, Variant, WalkMode, lazy
from .harness import (
    AggregateStats,
    ExperimentSpec,
    ScanAxis,
    ScanPoint,
    ScanSpec,
    run_replicas,
    scan,
    validate_suite,
)
from .topology import Family, TopologySpec

__all__ = ["main", "parse_and_dispatch", "build_parser"]

_FORMATS = ("csv", "ndjson", "json", "svg-summary")

_TOPOLOGY_KEYS = ("family", "n", "k", "dim", "leaf_depth", "with_loops", "moduli", "generators")


def _fmt(v) -> str:
    """One formatting rule for CSV cells and SVG labels, so the two
    outputs agree textually."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


# -- config plumbing ---------------------------------------------------------


def experiment_to_config(exp: ExperimentSpec) -> dict[str, str]:
    cfg = exp.topology.to_config()
    cfg["particles"] = str(exp.M)
    if exp.variant.kind == "lazy":
        cfg["lazy_p"] = repr(exp.variant.p)
    cfg["budget"] = str(exp.budget)
    cfg["replicas"] = str(exp.replicas)
    cfg["seed"] = str(exp.master_seed)
    cfg["walk_mode"] = exp.walk_mode.value
    cfg["record_trajectories"] = "true" if exp.record_trajectories else "false"
    if exp.omega is not None:
        cfg["omega"] = _fmt(exp.omega)
    return cfg


def config_to_experiment(cfg: dict[str, str]) -> ExperimentSpec:
    topo_cfg = {k: v for k, v in cfg.items() if k in _TOPOLOGY_KEYS}
    topology = TopologySpec.from_config(topo_cfg)
    if "particles" not in cfg:
        raise ValueError("config needs a particles count")
    variant = lazy(float(cfg["lazy_p"])) if "lazy_p" in cfg else Variant()
    return ExperimentSpec(
        topology=topology,
        M=int(cfg["particles"]),
        variant=variant,
        budget=int(cfg.get("budget", 10**7)),
        replicas=int(cfg.get("replicas", 1)),
        master_seed=int(cfg.get("seed", 0)),
        record_trajectories=cfg.get("record_trajectories", "false") == "true",
        walk_mode=WalkMode(cfg.get("walk_mode", "on-demand")),
        omega=float(cfg["omega"]) if "omega" in cfg else None,
    )


def read_config_file(path: str) -> dict[str, str]:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    if "disperse" in cp:
        section = cp["disperse"]
    else:
        section = cp[cp.default_section]
    return dict(section)


def write_config_ini(cfg: dict[str, str]) -> str:
    cp = configparser.ConfigParser()
    cp["disperse"] = dict(cfg)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- argument parsing --------------------------------------------------------


def _add_topology_flags(p: argparse.ArgumentParser):
    p.add_argument("--family", choices=[f.value for f in Family])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--leaf-depth", type=int)
    p.add_argument("--with-loops", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--moduli", help="comma list, e.g. 8,8")
    p.add_argument("--generators", help="tuple list, e.g. (1,0),(-1,0)")


def _add_experiment_flags(p: argparse.ArgumentParser):
    _add_topology_flags(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--lazy-p", type=float, dest="lazy_p")
    p.add_argument("--budget", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--walk-mode", choices=[m.value for m in WalkMode])
    p.add_argument(
        "--record-trajectories", action=argparse.BooleanOptionalAction, default=None
    )
    p.add_argument("--omega", type=float)
    p.add_argument("--config", help="INI file; explicit flags override it")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--format", choices=_FORMATS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="disperse",
        description="Synchronous dispersion processes on graphs: simulate, scan, and cross-check against closed forms.",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)

    runp = sub.add_parser("run", help="replicated runs of one experiment")
    _add_experiment_flags(runp)

    scanp = sub.add_parser("scan", help="sweep one axis over a grid of values")
    _add_experiment_flags(scanp)
    scanp.add_argument("--axis", choices=[a.value for a in ScanAxis])
    scanp.add_argument("--grid", help="comma list of grid values")

    orap = sub.add_parser("oracle", help="evaluate one closed form")
    orap.add_argument("name", choices=sorted(oracles.ORACLES) + ["mixing-step"])
    _add_topology_flags(orap)
    for flag, typ in (
        ("--H", int),
        ("--U", int),
        ("--delta", float),
        ("--p", float),
        ("--alpha", float),
        ("--occupancies", str),
        ("--E-empty", int),
        ("--M", int),
        ("--eps", float),
        ("--d", int),
        ("--T", int),
        ("--r", int),
        ("--t", int),
        ("--s", int),
    ):
        orap.add_argument(flag, type=typ)
    orap.add_argument("--out")

    valp = sub.add_parser("validate", help="oracle cross-checks and invariant audits")
    valp.add_argument("--quick", action="store_true")
    valp.add_argument("--out")
    valp.add_argument("--format", choices=("json", "text"), default="text")
    return ap


def _resolve_experiment(args) -> ExperimentSpec:
    cfg: dict[str, str] = {}
    if args.config:
        cfg = read_config_file(args.config)

    def take(key, flag_value):
        if flag_value is not None:
            cfg[key] = flag_value if isinstance(flag_value, str) else _fmt(flag_value)

    take("family", args.family)
    take("n", args.n)
    take("k", args.k)
    take("dim", args.dim)
    take("leaf_depth", args.leaf_depth)
    take("with_loops", args.with_loops)
    take("moduli", args.moduli)
    take("generators", args.generators)
    take("particles", args.particles)
    take("lazy_p", args.lazy_p)
    take("budget", args.budget)
    take("replicas", args.replicas)
    take("seed", args.seed)
    take("walk_mode", args.walk_mode)
    take("record_trajectories", args.record_trajectories)
    take("omega", args.omega)
    if "family" not in cfg:
        raise ValueError("a topology family is required (--family or config)")
    exp = config_to_experiment(cfg)
    return exp.resolve()


# -- output writers ----------------------------------------------------------


def _infer_format(fmt: Optional[str], out: Optional[str], default: str) -> str:
    if fmt:
        return fmt
    if out:
        if out.endswith(".csv"):
            return "csv"
        if out.endswith(".json"):
            return "json"
        if out.endswith(".svg"):
            return "svg-summary"
        if out.endswith(".ndjson"):
            return "ndjson"
    return default


def _write(out: Optional[str], text: str):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_records(results, stats, cfg) -> str:
    lines = [json.dumps({"schema": SCHEMA, "record": "header", "config": cfg}, sort_keys=True)]
    for i, r in enumerate(results):
        rec = r.to_record()
        rec["record"] = "replica"
        rec["replica"] = i
        lines.append(json.dumps(rec, sort_keys=True))
    agg = {"schema": SCHEMA, "record": "aggregate"}
    agg.update(stats.to_row())
    lines.append(json.dumps(agg, sort_keys=True))
    return "\n".join(lines) + "\n"


def _csv_text(cfg: dict, header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    for key in sorted(cfg):
        buf.write(f"# {key}={cfg[key]}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row.get(h)) for h in header) + "\n")
    return buf.getvalue()


def _svg_header(width, height) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def _svg_run_summary(results, stats: AggregateStats, cfg: dict) -> str:
    dispersed = [r for r in results if r.status is Status.DISPERSED]
    d_values = [r.d_disp for r in dispersed]
    W, H = 920, 360
    parts = _svg_header(W, H)
    parts.append(
        f'<text x="10" y="18">dispersal {_fmt(stats.dispersal_fraction)} '
        f"[{_fmt(stats.ci_lo)}, {_fmt(stats.ci_hi)}] over {stats.replicas} replicas, "
        f"{stats.boundary_hits} boundary</text>"
    )
    # Left panel: d_disp histogram.
    parts.append('<text x="10" y="44">d_disp histogram</text>')
    if d_values:
        lo, hi = min(d_values), max(d_values)
        span = max(1, hi - lo + 1)
        nbins = span if span <= 24 else 12
        countsb = [0] * nbins
        for v in d_values:
            b = (v - lo) * nbins // span
            countsb[b] += 1
        peak = max(countsb)
        x0, y0, wpanel, hpanel = 10, 60, 420, 240
        bw = wpanel / nbins
        for b, c in enumerate(countsb):
            bh = 0 if peak == 0 else c * (hpanel - 30) / peak
            x = x0 + b * bw
            parts.append(
                f'<rect x="{x:.1f}" y="{y0 + (hpanel - 30) - bh:.1f}" width="{max(bw - 2, 1):.1f}" '
                f'height="{bh:.1f}" fill="#4477aa"/>'
            )
            if c:
                parts.append(
                    f'<text x="{x + bw / 2:.1f}" y="{y0 + (hpanel - 30) - bh - 4:.1f}" '
                    f'text-anchor="middle">{c}</text>'
                )
            lo_edge = lo + b * span // nbins
            parts.append(
                f'<text x="{x + bw / 2:.1f}" y="{y0 + hpanel - 10}" text-anchor="middle">{lo_edge}</text>'
            )
    else:
        parts.append('<text x="10" y="80">no dispersed runs</text>')
    # Right panel: t_disp quantiles.
    parts.append('<text x="470" y="44">t_disp quantiles</text>')
    q = stats.t_disp
    keys = ("min", "p25", "p50", "p75", "p95", "max")
    if q["min"] is not None:
        x0, y0 = 470, 70
        for i, key in enumerate(keys):
            y = y0 + i * 38
            parts.append(f'<text x="{x0}" y="{y}">{key}</text>')
            parts.append(f'<text x="{x0 + 60}" y="{y}">{_fmt(q[key])}</text>')
            lo_v, hi_v = q["min"], max(q["max"], 1)
            frac = 0 if hi_v == 0 else q[key] / hi_v
            parts.append(
                f'<rect x="{x0 + 160}" y="{y - 10}" width="{8 + 240 * frac:.1f}" height="12" fill="#aa7744"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _svg_scan_summary(points: list[ScanPoint], axis: str, cfg: dict) -> str:
    W, H = 920, 360
    parts = _svg_header(W, H)
    parts.append(f'<text x="10" y="18">dispersal fraction by {axis}</text>')
    n = len(points)
    x0, y0, wpanel, hpanel = 60, 40, W - 100, 250
    bw = wpanel / max(n, 1)
    for i, pt in enumerate(points):
        f = pt.stats.dispersal_fraction
        bh = f * hpanel
        x = x0 + i * bw
        parts.append(
            f'<rect x="{x:.1f}" y="{y0 + hpanel - bh:.1f}" width="{max(bw - 4, 1):.1f}" '
            f'height="{bh:.1f}" fill="#447744"/>'
        )
        parts.append(
            f'<text x="{x + bw / 2:.1f}" y="{y0 + hpanel - bh - 6:.1f}" '
            f'text-anchor="middle">{_fmt(f)}</text>'
        )
        parts.append(
            f'<text x="{x + bw / 2:.1f}" y="{y0 + hpanel + 16}" text-anchor="middle">{_fmt(pt.value)}</text>'
        )
        p50 = pt.stats.t_disp["p50"]
        parts.append(
            f'<text x="{x + bw / 2:.1f}" y="{y0 + hpanel + 34}" text-anchor="middle">t50={_fmt(p50)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- subcommands -------------------------------------------------------------


def _cmd_run(args) -> int:
    exp = _resolve_experiment(args)
    fmt = _infer_format(args.format, args.out, "ndjson")
    progress = sys.stderr.isatty()
    results, stats = run_replicas(exp, parallelism=args.parallelism, progress=progress)
    cfg = experiment_to_config(exp)
    if fmt == "ndjson":
        _write(args.out, _run_records(results, stats, cfg))
    elif fmt == "csv":
        _write(args.out, _csv_text(cfg, list(AggregateStats.COLUMNS), [stats.to_row()]))
    elif fmt == "json":
        doc = {
            "schema": SCHEMA,
            "config": cfg,
            "replicas": [r.to_record() for r in results],
            "aggregate": stats.to_row(),
        }
        _write(args.out, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        _write(args.out, _svg_run_summary(results, stats, cfg))
    return 0


def _cmd_scan(args) -> int:
    base = _resolve_experiment(args)
    if not args.axis or not args.grid:
        raise ValueError("scan needs --axis and --grid")
    grid = tuple(float(x) for x in args.grid.split(","))
    spec = ScanSpec(base=base, axis=ScanAxis(args.axis), grid=grid)
    fmt = _infer_format(args.format, args.out, "ndjson")
    progress = sys.stderr.isatty()
    points = scan(spec, parallelism=args.parallelism, progress=progress)
    cfg = experiment_to_config(base)
    cfg["axis"] = args.axis
    cfg["grid"] = args.grid
    header = [args.axis] + list(AggregateStats.COLUMNS)
    rows = []
    for pt in points:
        row = {args.axis: pt.value}
        row.update(pt.stats.to_row())
        rows.append(row)
    if fmt == "csv":
        _write(args.out, _csv_text(cfg, header, rows))
    elif fmt == "ndjson":
        lines = [
            json.dumps(
                {"schema": SCHEMA, "record": "header", "config": cfg}, sort_keys=True
            )
        ]
        for pt, row in zip(points, rows):
            rec = {"schema": SCHEMA, "record": "scan-point"}
            rec.update(row)
            lines.append(json.dumps(rec, sort_keys=True))
        _write(args.out, "\n".join(lines) + "\n")
    elif fmt == "json":
        doc = {"schema": SCHEMA, "config": cfg, "points": rows}
        _write(args.out, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        _write(args.out, _svg_scan_summary(points, args.axis, cfg))
    return 0


def _cmd_oracle(args) -> int:
    name = args.name
    if name == "mixing-step":
        cfg = {}
        for key in _TOPOLOGY_KEYS:
            v = getattr(args, key, None)
            if v is not None:
                cfg[key] = v if isinstance(v, str) else _fmt(v)
        if "family" not in cfg:
            raise ValueError("mixing-step needs --family and its parameters")
        ov = oracles.evaluate(name, cfg)
    else:
        d = oracles.ORACLES[name]
        inputs = {}
        for pname, typ in d.params:
            v = getattr(args, pname)
            if v is None:
                raise ValueError(f"oracle {name} requires --{pname.replace('_', '-')}")
            if typ is list:
                v = [int(x) for x in str(v).split(",")]
            inputs[pname] = v
        # Loopless walks shift the complete-graph change formulas.
        if name == "kn-changes" and args.with_loops is not None:
            inputs["with_loops"] = args.with_loops
        ov = oracles.evaluate(name, inputs)
    payload = {
        "name": ov.name,
        "inputs": ov.inputs,
        "value": ov.value,
        "equation_tag": ov.equation_tag,
    }
    text = json.dumps(payload, sort_keys=True) + "\n"
    _write(args.out, text)
    return 0


def _cmd_validate(args) -> int:
    report = validate_suite(quick=args.quick)
    if args.format == "json":
        text = json.dumps(report.to_json(), sort_keys=True, indent=1) + "\n"
    else:
        text = str(report) + "\n"
    _write(args.out, text)
    return 0 if report.passed else 1


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.subcommand == "run":
            return _cmd_run(args)
        if args.subcommand == "scan":
            return _cmd_scan(args)
        if args.subcommand == "oracle":
            return _cmd_oracle(args)
        return _cmd_validate(args)
    except (ValueError, KeyError, OSError, configparser.Error) as e:
        print(f"disperse: error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
