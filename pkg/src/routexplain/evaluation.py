"""Batch evaluation of SVE and PBE on closure and incident scenarios, and map export."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from typing import IO, Any, Iterable, Sequence

from .exceptions import RoutexplainError
from .flow import solve_sve
from .graph import INF, RoadGraph
from .model import DEFAULT_C0, DEFAULT_SCALE, Explanation, ExplanationInstance, TauOption
from .oracle import VerifierReport, verify_certificate
from .pbe import compute_pbe
from .scenarios import CLOSURE, INCIDENT, Scenario

SVE = "sve"
PBE = "pbe"
METHODS = (SVE, PBE)

CSV_COLUMNS = (
    "scenario_id",
    "kind",
    "method",
    "valid",
    "reason",
    "status",
    "support_size",
    "valuation",
    "iterations",
    "contained",
    "precision",
    "ratio",
    "verified",
)


def explain(
    inst: ExplanationInstance, method: str = SVE, *, verify: bool = True
) -> tuple[Explanation, VerifierReport | None]:
    """Run one method; SVE results come with a verifier report."""
    if method == SVE:
        result = solve_sve(inst)
        report = None
        if verify:
            report = verify_certificate(inst, result.explanation, result.certificate, result.flow)
        return result.explanation, report
    if method == PBE:
        return compute_pbe(inst), None
    raise ValueError(f"unknown method {method!r}")


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Smallest value with at least ``pct`` percent of the data at or below it."""
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100 * len(ordered)))
    return ordered[rank - 1]


_GRAPH: RoadGraph | None = None


def _set_graph(g: RoadGraph) -> None:
    global _GRAPH
    _GRAPH = g


def _evaluate(job: tuple[Scenario, str, str, int, int]) -> dict[str, Any]:
    sc, method, option, c0, scale = job
    g = _GRAPH
    row: dict[str, Any] = {c: "" for c in CSV_COLUMNS}
    row.update(scenario_id=sc.scenario_id, kind=sc.kind, method=method, valid=sc.valid)
    row["reason"] = sc.reason or ""
    if not sc.valid:
        row["status"] = "skipped"
        return row
    try:
        inst = sc.instance(g, option, c0, scale)
        expl, report = explain(inst, method)
    except RoutexplainError as exc:
        row["status"] = type(exc).__name__
        return row
    row["status"] = "ok"
    sup = expl.support
    row["support_size"] = len(sup)
    row["valuation"] = "inf" if expl.valuation == INF else expl.valuation
    row["iterations"] = expl.meta.get("iterations", "")
    if report is not None:
        row["verified"] = report.passed
        if not report.passed:
            row["status"] = "verification_failed"
    if sc.kind == CLOSURE:
        row["contained"] = sup <= sc.closed
    else:
        x = sc.penalized
        row["precision"] = len(sup & x) / len(sup) if sup else 1.0
        row["ratio"] = len(sup) / len(x) if x else (0.0 if not sup else math.inf)
    return row


def _run(
    g: RoadGraph,
    scenarios: Iterable[Scenario],
    method: str,
    option: TauOption | str,
    c0: int,
    scale: int,
    workers: int,
) -> list[dict[str, Any]]:
    option = TauOption(option).value
    jobs = [(sc, method, option, c0, scale) for sc in scenarios]
    if workers <= 1 or len(jobs) <= 1:
        _set_graph(g)
        rows = [_evaluate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_set_graph, initargs=(g,)) as pool:
            rows = list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return sorted(rows, key=lambda r: r["scenario_id"])


def _validity(rows: list[dict[str, Any]]) -> dict[str, Any]:
    return {
        "scenarios": len(rows),
        "valid": sum(1 for r in rows if r["valid"]),
        "pct_valid": 100 * sum(1 for r in rows if r["valid"]) / len(rows) if rows else "N/A",
        "invalid": [
            {"scenario_id": r["scenario_id"], "reason": r["reason"]} for r in rows if not r["valid"]
        ],
        "failures": [
            {"scenario_id": r["scenario_id"], "status": r["status"]}
            for r in rows
            if r["valid"] and r["status"] != "ok"
        ],
    }


def run_closure_eval(
    g: RoadGraph,
    scenarios: Iterable[Scenario],
    method: str = SVE,
    *,
    option: TauOption | str = TauOption.SCALE_INVARIANT,
    c0: int = DEFAULT_C0,
    scale: int = DEFAULT_SCALE,
    workers: int = 1,
) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Containment of each explanation in its closed set, and the percentage over valid scenarios."""
    scenarios = list(scenarios)
    if any(sc.kind != CLOSURE for sc in scenarios):
        raise ValueError("closure evaluation needs closure scenarios")
    rows = _run(g, scenarios, method, option, c0, scale, workers)
    summary = _validity(rows)
    done = [r for r in rows if r["valid"] and r["status"] == "ok"]
    summary["method"] = method
    summary["pct_contained"] = (
        100 * sum(1 for r in done if r["contained"]) / len(done) if done else "N/A"
    )
    return rows, summary


def run_incident_eval(
    g: RoadGraph,
    scenarios: Iterable[Scenario],
    method: str = SVE,
    *,
    option: TauOption | str = TauOption.SCALE_INVARIANT,
    c0: int = DEFAULT_C0,
    scale: int = DEFAULT_SCALE,
    workers: int = 1,
) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Precision against the penalized set and support-size ratio per scenario.

    The summary holds the minimum precision and nearest-rank 50/90/100
    percentiles of the ratio.
    """
    scenarios = list(scenarios)
    if any(sc.kind != INCIDENT for sc in scenarios):
        raise ValueError("incident evaluation needs incident scenarios")
    rows = _run(g, scenarios, method, option, c0, scale, workers)
    summary = _validity(rows)
    done = [r for r in rows if r["valid"] and r["status"] == "ok"]
    summary["method"] = method
    if done:
        ratios = [r["ratio"] for r in done]
        summary["precision_min"] = min(r["precision"] for r in done)
        summary["ratio"] = {
            "p50": nearest_rank(ratios, 50),
            "p90": nearest_rank(ratios, 90),
            "max": max(ratios),
        }
    else:
        summary["precision_min"] = "N/A"
        summary["ratio"] = {"p50": "N/A", "p90": "N/A", "max": "N/A"}
    return rows, summary


def write_csv(rows: Iterable[dict[str, Any]], stream: IO[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


# --------------------------------------------------------------------------
# GeoJSON


def _feature(g: RoadGraph, j: int, role: str, props: dict[str, Any]) -> dict[str, Any]:
    coords = g.arc_coordinates(j)
    feature: dict[str, Any] = {
        "type": "Feature",
        "properties": {"role": role, "arc_id": g.arcs[j].arc_id, **props},
        "geometry": None,
    }
    if coords is None:
        feature["properties"]["missing_geometry"] = True
    else:
        feature["geometry"] = {"type": "LineString", "coordinates": [list(c) for c in coords]}
    return feature


def _num(x) -> int | str:
    return "inf" if x == INF else x


def export_geojson(
    inst: ExplanationInstance,
    expl: Explanation,
    context: Iterable[int] = (),
) -> dict[str, Any]:
    """FeatureCollection with the route, each explanation arc, and context arcs.

    The route is one LineString with ``role="path"``. Arcs without
    coordinates are emitted with a null geometry and ``missing_geometry``.
    """
    g = inst.graph
    features: list[dict[str, Any]] = []
    route_coords: list[list[float]] = []
    missing = False
    for j in inst.path.arcs:
        coords = g.arc_coordinates(j)
        if coords is None:
            missing = True
            continue
        pts = [list(c) for c in coords]
        if route_coords and route_coords[-1] == pts[0]:
            pts = pts[1:]
        route_coords.extend(pts)
    path_props: dict[str, Any] = {
        "role": "path",
        "arcs": g.arc_ids(inst.path.arcs),
        "source": g.node_ids[inst.source],
        "target": g.node_ids[inst.target],
    }
    path_feature: dict[str, Any] = {"type": "Feature", "properties": path_props, "geometry": None}
    if missing:
        path_props["missing_geometry"] = True
    if route_coords and not missing:
        path_feature["geometry"] = {"type": "LineString", "coordinates": route_coords}
    features.append(path_feature)

    def props(j: int) -> dict[str, Any]:
        return {"w": _num(expl.weights[j]), "lower": inst.lower[j], "upper": _num(inst.upper[j])}

    for j in sorted(expl.support):
        features.append(_feature(g, j, "explanation", props(j)))
    for j in sorted(set(context) - expl.support):
        features.append(_feature(g, j, "context", props(j)))
    return {
        "type": "FeatureCollection",
        "properties": {"valuation": _num(expl.valuation), "support_size": len(expl.support)},
        "features": features,
    }


def scenario_context(sc: Scenario) -> frozenset[int]:
    """Arcs drawn as context: closed windows or penalized arcs."""
    return sc.closed if sc.kind == CLOSURE else sc.penalized
