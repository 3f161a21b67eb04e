"""Independent checks for small instances.

Nothing here reuses the solver's shortest-path or residual code: distances
come from a plain Bellman-Ford, and certificate checks evaluate each
constraint of both linear programs directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

from .flow import Certificate, FlowSolution
from .graph import INF, Path, RoadGraph, Weight
from .model import Explanation, ExplanationInstance

MAX_PLIABLE = 20


def bellman_ford(
    g: RoadGraph, w: Sequence[Weight], source: int
) -> tuple[list[Weight], list[int]]:
    """Distances and predecessor arcs from ``source`` (nonnegative weights)."""
    dist: list[Weight] = [INF] * g.n_vertices
    pred = [-1] * g.n_vertices
    dist[source] = 0
    for _ in range(g.n_vertices - 1):
        changed = False
        for j in range(g.n_arcs):
            du = dist[g.src[j]]
            if du == INF or w[j] == INF:
                continue
            if du + w[j] < dist[g.dst[j]]:
                dist[g.dst[j]] = du + w[j]
                pred[g.dst[j]] = j
                changed = True
        if not changed:
            break
    return dist, pred


def _route_weight(arcs: Sequence[int], w: Sequence[Weight]) -> Weight:
    total: Weight = 0
    for j in arcs:
        total += w[j]
    return total


def _raise_cost(inst: ExplanationInstance, j: int) -> Weight:
    ta = inst.tau[j]
    if ta == 0:
        return 0
    return INF if inst.upper[j] == INF else ta * (inst.upper[j] - inst.lower[j])


def brute_force_mip(
    inst: ExplanationInstance, max_support: int | None = None
) -> tuple[frozenset[int], Weight] | None:
    """Cheapest set of pliable arcs whose raise to ``upper`` makes the route shortest.

    Exhaustive over subsets: a branch-and-bound that, whenever the current
    set is insufficient, branches on the pliable arcs of one beating path
    (every sufficient superset must raise one of them). Returns ``(arcs,
    cost)`` or ``None`` if no set of at most ``max_support`` arcs suffices.
    """
    pliable = inst.pliable_arcs()
    if len(pliable) > MAX_PLIABLE:
        raise ValueError(f"{len(pliable)} pliable arcs exceed the oracle limit of {MAX_PLIABLE}")
    g = inst.graph
    s, t = inst.source, inst.target
    route = inst.path.arcs
    on_route = set(route)
    is_pliable = set(pliable)
    limit = len(pliable) if max_support is None else max_support
    best: list[Any] = [INF, None]
    seen: set[frozenset[int]] = set()

    def visit(chosen: frozenset[int], cost: Weight) -> None:
        if chosen in seen or (best[1] is not None and not cost < best[0]):
            return
        seen.add(chosen)
        w = [inst.upper[j] if j in chosen else inst.lower[j] for j in range(g.n_arcs)]
        dist, pred = bellman_ford(g, w, s)
        if dist[t] == _route_weight(route, w):
            best[0], best[1] = cost, chosen
            return
        if len(chosen) >= limit:
            return
        v = t
        beating = []
        while v != s:
            j = pred[v]
            beating.append(j)
            v = g.src[j]
        for j in beating:
            if j in is_pliable and j not in chosen and j not in on_route:
                visit(chosen | {j}, cost + _raise_cost(inst, j))

    visit(frozenset(), 0)
    if best[1] is None:
        return None
    return best[1], best[0]


def enumerate_paths(
    g: RoadGraph, w: Sequence[Weight], s: int, t: int, limit: int = 100000
) -> list[tuple[Path, Weight]]:
    """All simple ``s``-``t`` paths with their weights, lightest first.

    Small graphs only; ties are ordered by arc indices.
    """
    if g.n_vertices > 12:
        raise ValueError("path enumeration is limited to 12 vertices")
    found: list[tuple[Weight, tuple[int, ...]]] = []
    stack: list[int] = []
    visited = {s}

    def walk(v: int) -> None:
        if v == t:
            if len(found) >= limit:
                raise ValueError(f"more than {limit} simple paths")
            found.append((_route_weight(stack, w), tuple(stack)))
            return
        for j in g.out_arcs[v]:
            u = g.dst[j]
            if u in visited:
                continue
            visited.add(u)
            stack.append(j)
            walk(u)
            stack.pop()
            visited.discard(u)

    walk(s)
    found.sort()
    return [(Path(arcs, s, t), weight) for weight, arcs in found]


@dataclass
class VerifierReport:
    checks: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def failures(self) -> list[dict[str, Any]]:
        return [c for c in self.checks if not c["passed"]]

    def add(self, name: str, offenders: list[str], **detail) -> None:
        self.checks.append({"check": name, "passed": not offenders, "offenders": offenders, **detail})

    def to_list(self) -> list[dict[str, Any]]:
        return list(self.checks)

    def to_json(self) -> str:
        return json.dumps(self.checks, indent=2, sort_keys=True)


def verify_certificate(
    inst: ExplanationInstance,
    expl: Explanation | None,
    cert: Certificate,
    sol: FlowSolution,
) -> VerifierReport:
    """Re-check a cut solution and a flow solution constraint by constraint.

    Passes iff both are feasible, the two objectives agree, the duality gap
    recomputed term by term is zero, the route is shortest under ``w`` and
    the explanation carries the certificate's weights.
    """
    w, d = cert.w, cert.d
    f, a, b = sol
    g = inst.graph
    m = g.n_arcs
    lo, up, tau = inst.lower, inst.upper, inst.tau
    on_route = inst.path.arc_set
    aid = [arc.arc_id for arc in g.arcs]
    report = VerifierReport()

    # cut formulation
    report.add("w_bounds", [aid[j] for j in range(m) if not lo[j] <= w[j] <= up[j]])
    report.add(
        "potential_constraints",
        [aid[j] for j in range(m) if w[j] != INF and d[g.dst[j]] - d[g.src[j]] > w[j]],
    )
    report.add(
        "route_tight",
        [aid[j] for j in on_route if d[g.dst[j]] - d[g.src[j]] != w[j]],
    )
    # flow formulation
    report.add(
        "flow_sign",
        [aid[j] for j in range(m) if a[j] < 0 or b[j] < 0 or (j not in on_route and f[j] < 0)],
    )
    report.add("flow_split", [aid[j] for j in range(m) if a[j] - b[j] + f[j] != tau[j]])
    report.add("infinite_upper_unused", [aid[j] for j in range(m) if up[j] == INF and b[j]])
    report.add("slack_complementarity", [aid[j] for j in range(m) if a[j] and b[j]])
    balance = [0] * g.n_vertices
    for j in range(m):
        balance[g.src[j]] -= f[j]
        balance[g.dst[j]] += f[j]
    report.add("conservation", [g.node_ids[v] for v in range(g.n_vertices) if balance[v]])

    # objectives and the five gap terms, each over its own support
    primal: Weight = sum(tau[j] * (w[j] - lo[j]) for j in range(m) if tau[j])
    dual = sum(lo[j] * (a[j] - tau[j]) for j in range(m)) - sum(
        up[j] * b[j] for j in range(m) if b[j]
    )
    terms = [
        sum(w[j] * (tau[j] - a[j] + b[j] - f[j]) for j in range(m) if tau[j] - a[j] + b[j] - f[j]),
        sum((w[j] - lo[j]) * a[j] for j in range(m) if a[j]),
        sum((up[j] - w[j]) * b[j] for j in range(m) if b[j]),
        sum((w[j] - d[g.dst[j]] + d[g.src[j]]) * f[j] for j in range(m) if f[j]),
        sum(d[v] * balance[v] for v in range(g.n_vertices) if balance[v]),
    ]
    gap = sum(terms)
    report.add(
        "objectives_agree",
        [] if primal == dual else [f"primal={primal}", f"dual={dual}"],
        primal=_enc(primal),
        dual=dual,
    )
    report.add(
        "zero_gap",
        [] if gap == 0 and all(x == 0 for x in terms) else [f"gap={gap}"],
        terms=[_enc(x) for x in terms],
    )
    report.add(
        "complementary_slackness",
        [
            aid[j]
            for j in range(m)
            if (a[j] and w[j] != lo[j])
            or (b[j] and w[j] != up[j])
            or (f[j] and w[j] != d[g.dst[j]] - d[g.src[j]])
        ],
    )

    dist, _ = bellman_ford(g, w, inst.source)
    route = _route_weight(inst.path.arcs, w)
    report.add(
        "sufficiency",
        [] if dist[inst.target] == route else [f"route={route}", f"best={dist[inst.target]}"],
    )
    if expl is not None:
        mismatch = [aid[j] for j in range(m) if expl.weights[j] != w[j]]
        if expl.valuation != primal:
            mismatch.append(f"valuation={expl.valuation}")
        report.add("explanation_matches", mismatch)
    return report


def _enc(x: Weight) -> int | str:
    return "inf" if x == INF else x
