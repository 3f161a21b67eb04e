"""``routexplain`` command line: explain, scenario, eval, gen-grid."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path as FsPath
from typing import Any, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .evaluation import (
    METHODS,
    SVE,
    export_geojson,
    run_closure_eval,
    run_incident_eval,
    scenario_context,
    write_csv,
)
from .exceptions import (
    CertificateError,
    GraphFormatError,
    PreconditionError,
    RoutexplainError,
    SamplingExhausted,
    Unreachable,
)
from .flow import solve_sve
from .graph import Path, load_graph, load_weights, make_grid, shortest_path, write_graph
from .model import ExplanationInstance, TauOption
from .oracle import verify_certificate
from .pbe import compute_pbe
from .scenarios import (
    CLOSURE,
    INCIDENT,
    dump_scenario,
    gen_closure_scenario,
    gen_incident_scenario,
    load_scenario,
    sample_query_pairs,
)

CONFIG_ENV = "ROUTEXPLAIN_CONFIG"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_VERIFY = 4

DEFAULTS: dict[str, dict[str, Any]] = {
    "explain": {
        "method": SVE,
        "tau": TauOption.SCALE_INVARIANT.value,
        "c0": 10,
        "scale": 1000,
        "beta": None,
    },
    "scenario": {
        "kind": CLOSURE,
        "n": 10,
        "seed": 1,
        "k": 9,
        "min_dist_m": 1000.0,
        "max_dist_m": 5000.0,
        "pliability": "few",
        "hop_radius": 5,
        "multiplier": 10000,
        "off_factor": 2,
        "gamma": "11/10",
    },
    "eval": {
        "methods": "sve,pbe",
        "tau": TauOption.SCALE_INVARIANT.value,
        "c0": 10,
        "scale": 1000,
        "workers": os.cpu_count() or 1,
    },
    "gen-grid": {
        "width": 10,
        "height": 10,
        "spacing_m": 100.0,
        "arterial_rows": "",
        "arterial_cols": "",
        "seed": 0,
        "jitter": 0.1,
    },
}


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> tuple[dict[str, Any], str | None]:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}, None
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh), path
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"config {path}: {exc}") from None


def resolve(command: str, args: argparse.Namespace, config: dict[str, Any]) -> dict[str, Any]:
    """Flags override the config file, which overrides built-in defaults.

    The config may set keys at top level or in a table named after the
    subcommand; the table wins.
    """
    resolved = dict(DEFAULTS[command])
    for source in (config, config.get(command, {})):
        for key, value in source.items():
            key = key.replace("-", "_")
            if key in resolved and not isinstance(value, dict):
                resolved[key] = value
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _read_graph(path: str):
    with open(path, encoding="utf-8") as fh:
        return load_graph(fh)


def _read_weights(g, path: str):
    with open(path, encoding="utf-8") as fh:
        return load_weights(g, fh)


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        FsPath(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _int_list(text: str) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _fraction(text: str) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        num, den = text
        return int(num), int(den)
    num, _, den = str(text).partition("/")
    try:
        return int(num), int(den or 1)
    except ValueError:
        raise UsageError(f"gamma {text!r} is not a fraction like 11/10") from None


# --------------------------------------------------------------------------
# Subcommands


def cmd_explain(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    g = _read_graph(args.graph)
    scenario = None
    if args.scenario:
        with open(args.scenario, encoding="utf-8") as fh:
            scenario = load_scenario(fh.read(), g)
        lower, upper = scenario.lower, scenario.upper
    else:
        if not args.upper:
            raise UsageError("give --upper (and optionally --lower) or --scenario")
        lower = _read_weights(g, args.lower) if args.lower else g.free_flow()
        upper = _read_weights(g, args.upper)

    if args.path:
        with open(args.path, encoding="utf-8") as fh:
            arc_ids = fh.read().split()
        route = Path.from_arc_ids(g, arc_ids)
    elif args.source and args.target:
        route, _ = shortest_path(g, upper, g.vertex(args.source), g.vertex(args.target))
    elif scenario is not None:
        if not scenario.valid:
            raise PreconditionError(f"scenario is invalid: {scenario.reason}")
        route = scenario.path
    else:
        raise UsageError("give --path, --source/--target, or a scenario")

    inst = ExplanationInstance.build(g, lower, upper, route, cfg["tau"], cfg["c0"], cfg["scale"])
    output: dict[str, Any] = {"config": cfg, "method": cfg["method"]}
    if cfg["method"] == SVE:
        trace = open(args.trace, "w", encoding="utf-8") if args.trace else None
        try:
            result = solve_sve(inst, trace=trace, subgraph_beta=cfg["beta"])
        finally:
            if trace is not None:
                trace.close()
        expl = result.explanation
        report = verify_certificate(inst, expl, result.certificate, result.flow)
        output["iterations"] = result.iterations
        output["report"] = report.to_list()
        output["verified"] = report.passed
    else:
        expl = compute_pbe(inst)
        output["iterations"] = expl.meta["iterations"]
        report = None
    output["explanation"] = expl.to_dict(g, inst.tau)
    output["route"] = g.arc_ids(route.arcs)
    _write_text(args.output, _dumps(output))
    if args.geojson:
        context = scenario_context(scenario) if scenario is not None else ()
        _write_text(args.geojson, _dumps(export_geojson(inst, expl, context)))
    if report is not None and not report.passed:
        names = ", ".join(c["check"] for c in report.failures())
        print(f"verification failed: {names}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_scenario(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    g = _read_graph(args.graph)
    ell = g.free_flow()
    kind = cfg["kind"]
    if kind not in (CLOSURE, INCIDENT):
        raise UsageError(f"kind must be {CLOSURE} or {INCIDENT}")
    pairs = sample_query_pairs(g, cfg["min_dist_m"], cfg["max_dist_m"], cfg["n"], cfg["seed"])
    out = FsPath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    valid = 0
    reasons: dict[str, int] = {}
    for i, (s, t) in enumerate(pairs):
        sid = f"{kind}-{cfg['seed']}-{i:04d}"
        if kind == CLOSURE:
            sc = gen_closure_scenario(
                g, ell, s, t, cfg["k"],
                hop_radius=cfg["hop_radius"], multiplier=cfg["multiplier"],
                off_factor=cfg["off_factor"], pliability=cfg["pliability"], scenario_id=sid,
            )
        else:
            sc = gen_incident_scenario(
                g, ell, s, t, cfg["k"], gamma=_fraction(cfg["gamma"]),
                off_factor=cfg["off_factor"], scenario_id=sid,
            )
        valid += sc.valid
        if not sc.valid:
            reasons[sc.reason] = reasons.get(sc.reason, 0) + 1
        _write_text(str(out / f"{sid}.json"), dump_scenario(sc, g, seed=cfg["seed"], config=cfg))
    detail = ", ".join(f"{r}: {c}" for r, c in sorted(reasons.items()))
    print(f"{valid}/{len(pairs)} valid" + (f" ({detail})" if detail else ""))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    g = _read_graph(args.graph)
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    by_kind: dict[str, list] = {CLOSURE: [], INCIDENT: []}
    for file in sorted(FsPath(args.scenarios).glob("*.json")):
        sc = load_scenario(file.read_text(encoding="utf-8"), g)
        by_kind[sc.kind].append(sc)
    out = FsPath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict[str, Any] = {"config": cfg}
    all_rows = []
    runners = {CLOSURE: run_closure_eval, INCIDENT: run_incident_eval}
    for kind, scenarios in by_kind.items():
        if not scenarios:
            continue
        summary[kind] = {}
        for m in methods:
            rows, summ = runners[kind](
                g, scenarios, m, option=cfg["tau"], c0=cfg["c0"], scale=cfg["scale"],
                workers=cfg["workers"],
            )
            summary[kind][m] = summ
            all_rows.extend(rows)
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        write_csv(all_rows, fh)
    _write_text(str(out / "summary.json"), _dumps(summary))
    failed = [r for r in all_rows if r["status"] == "verification_failed"]
    for kind in (CLOSURE, INCIDENT):
        for m, summ in summary.get(kind, {}).items():
            if kind == CLOSURE:
                print(f"{kind} {m}: contained {summ['pct_contained']} % of {summ['valid']} valid")
            else:
                print(
                    f"{kind} {m}: min precision {summ['precision_min']}, "
                    f"ratio p50 {summ['ratio']['p50']} of {summ['valid']} valid"
                )
    if failed:
        print(f"{len(failed)} scenarios failed verification", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_gen_grid(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    g = make_grid(
        cfg["width"], cfg["height"], spacing_m=cfg["spacing_m"],
        arterial_rows=_int_list(cfg["arterial_rows"]), arterial_cols=_int_list(cfg["arterial_cols"]),
        seed=cfg["seed"], jitter=cfg["jitter"],
    )
    if args.output in (None, "-"):
        write_graph(g, sys.stdout)
    else:
        FsPath(args.output).parent.mkdir(parents=True, exist_ok=True)
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            write_graph(g, fh)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routexplain", description="Explain traffic-aware shortest routes."
    )
    parser.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    taus = [o.value for o in TauOption]

    p = sub.add_parser("explain", help="explain one route")
    p.add_argument("--graph", required=True)
    p.add_argument("--lower", help="free-flow weight file (default: graph free_flow_ms)")
    p.add_argument("--upper", help="traffic weight file")
    p.add_argument("--scenario", help="scenario JSON supplying both weight vectors")
    p.add_argument("--path", help="file of route arc ids")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--tau", choices=taus)
    p.add_argument("--c0", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--beta", type=float, help="restrict to arcs within beta times the route length")
    p.add_argument("-o", "--output", help="explanation JSON (default: stdout)")
    p.add_argument("--geojson", help="write a GeoJSON map document here")
    p.add_argument("--trace", help="write per-iteration residual graphs here")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("scenario", help="generate scenario files")
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", choices=(CLOSURE, INCIDENT))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--min-dist-m", type=float)
    p.add_argument("--max-dist-m", type=float)
    p.add_argument("--pliability", choices=("few", "all"))
    p.add_argument("--hop-radius", type=int)
    p.add_argument("--multiplier", type=int)
    p.add_argument("--off-factor", type=int)
    p.add_argument("--gamma", help="slowdown factor as num/den")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("eval", help="evaluate SVE and PBE on a scenario directory")
    p.add_argument("--graph", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--methods", help=f"comma list of {', '.join(METHODS)}")
    p.add_argument("--tau", choices=taus)
    p.add_argument("--c0", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-grid", help="write a synthetic grid graph")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--spacing-m", type=float)
    p.add_argument("--arterial-rows", help="comma list of row indices")
    p.add_argument("--arterial-cols", help="comma list of column indices")
    p.add_argument("--seed", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_grid)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config, config_path = _load_config(args.config)
        cfg = resolve(args.command, args, config)
        if config_path:
            cfg["config_file"] = config_path
        return args.func(args, cfg)
    except (GraphFormatError, UsageError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (PreconditionError, Unreachable, SamplingExhausted) as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except CertificateError as exc:
        print(f"verification: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (RoutexplainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
