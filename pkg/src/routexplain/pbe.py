"""Penalty-based explanation baseline.

Start from free-flow weights, take the current shortest path, charge every
arc of it that is off the route its traffic weight, and repeat until the
route is no longer beaten.
"""

from __future__ import annotations

from .exceptions import PreconditionError, Unreachable
from .flow import check_route
from .graph import Path, path_weight, shortest_path
from .model import Explanation, ExplanationInstance


def compute_pbe(inst: ExplanationInstance, *, record_paths: bool = False) -> Explanation:
    """Return the penalty-based explanation of ``inst.path``.

    ``meta["iterations"]`` counts penalty rounds (each raises at least one
    new arc, so it never exceeds the arc count); with ``record_paths`` the
    sequence of competing paths is stored under ``meta["paths"]``.
    """
    check_route(inst)
    g = inst.graph
    route = inst.path
    on_route = route.arc_set
    w = list(inst.lower)
    q, _ = shortest_path(g, w, inst.source, inst.target)
    seen: list[Path] = [q]
    iterations = 0
    while path_weight(q, w) < path_weight(route, w):
        changed = False
        for j in q.arcs:
            if j not in on_route and w[j] != inst.upper[j]:
                w[j] = inst.upper[j]
                changed = True
        if not changed:
            raise PreconditionError("penalty loop stalled: no valid explanation exists")
        iterations += 1
        try:
            q, _ = shortest_path(g, w, inst.source, inst.target)
        except Unreachable:  # pragma: no cover - the route itself stays finite
            raise PreconditionError("route became unreachable") from None
        seen.append(q)
    meta = {"method": "pbe", "iterations": iterations}
    if record_paths:
        meta["paths"] = seen
    return Explanation.from_weights(w, inst, **meta)
