"""Closure and incident scenarios, query sampling, and random instances."""

from __future__ import annotations

import hashlib
import io
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .exceptions import EmptyWindowError, SamplingExhausted, Unreachable
from .graph import (
    INF,
    Arc,
    Path,
    RoadGraph,
    Weight,
    distances,
    haversine_m,
    hop_window,
    make_grid,
    path_weight,
    shortest_path,
    write_graph,
)
from .model import DEFAULT_C0, DEFAULT_SCALE, ExplanationInstance, TauOption

CLOSURE = "closure"
INCIDENT = "incident"

FEW = "few"
ALL = "all"

# validity reasons
UNREACHABLE = "UNREACHABLE"
DISJOINTNESS = "DISJOINTNESS"
EMPTY_WINDOW = "EMPTY_WINDOW"
NOT_TRAFFIC_SHORTEST = "NOT_TRAFFIC_SHORTEST"


def default_hop_filter(length: int) -> int:
    return max(5, length // 10)


@dataclass
class Scenario:
    kind: str
    source: int
    target: int
    k: int
    lower: tuple[int, ...]
    upper: tuple[Weight, ...]
    paths: list[Path]
    closed_sets: list[tuple[int, ...]] = field(default_factory=list)
    closure_arcs: list[int] = field(default_factory=list)
    penalized: frozenset[int] = frozenset()
    valid: bool = True
    reason: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    scenario_id: str = ""

    @property
    def path(self) -> Path:
        return self.paths[-1]

    @property
    def closed(self) -> frozenset[int]:
        """Union of the first ``k`` closed windows."""
        return frozenset(j for c in self.closed_sets[: self.k] for j in c)

    def path_union(self, upto: int | None = None) -> frozenset[int]:
        return frozenset(j for p in self.paths[:upto] for j in p.arcs)

    def instance(
        self,
        graph: RoadGraph,
        option: TauOption | str = TauOption.SCALE_INVARIANT,
        c0: int = DEFAULT_C0,
        scale: int = DEFAULT_SCALE,
    ) -> ExplanationInstance:
        if not self.valid:
            raise ValueError(f"scenario {self.scenario_id!r} is invalid ({self.reason})")
        return ExplanationInstance.build(graph, self.lower, self.upper, self.path, option, c0, scale)


def _invalid(kind, s, t, k, lower, paths, reason, params, **extra) -> Scenario:
    factor = params.get("off_factor", 2)
    return Scenario(
        kind, s, t, k, tuple(lower), tuple(factor * x for x in lower), paths,
        valid=False, reason=reason, params=params, **extra,
    )


def select_closure_arc(
    p: Path, g: RoadGraph, hop_filter: Callable[[int], int] = default_hop_filter
) -> int:
    """Position on ``p`` of the arc to close.

    Only arcs at least ``hop_filter(len(p))`` hops from both ends qualify;
    among them the most arterial road type wins, then the longest arc, then
    the one with more lanes, then the smallest arc position.
    """
    length = len(p)
    margin = hop_filter(length)
    window = [i for i in range(length) if i >= margin and length - 1 - i >= margin]
    if not window:
        raise EmptyWindowError(f"no arc of a {length}-arc path is {margin} hops from both ends")
    best_type = min(g.arcs[p.arcs[i]].road_type for i in window)
    candidates = [i for i in window if g.arcs[p.arcs[i]].road_type == best_type]
    return min(
        candidates,
        key=lambda i: (-g.arcs[p.arcs[i]].length_m, -g.arcs[p.arcs[i]].lanes, p.arcs[i]),
    )


def gen_closure_scenario(
    g: RoadGraph,
    ell: Sequence[int],
    s: int,
    t: int,
    k: int,
    *,
    hop_radius: int = 5,
    multiplier: int = 10000,
    off_factor: int = 2,
    pliability: str = FEW,
    hop_filter: Callable[[int], int] = default_hop_filter,
    scenario_id: str = "",
) -> Scenario:
    """Multi-closure scenario: close a window of the current shortest path,
    reroute, and repeat ``k`` times. Closed arcs get ``multiplier`` times
    their weight; one extra window is computed to test disjointness.
    """
    if s == t:
        raise ValueError("closure scenarios need distinct endpoints")
    if pliability not in (FEW, ALL):
        raise ValueError(f"pliability must be {FEW!r} or {ALL!r}")
    params = dict(
        hop_radius=hop_radius, multiplier=multiplier, off_factor=off_factor, pliability=pliability
    )
    common = dict(scenario_id=scenario_id)
    cur = list(ell)
    try:
        p, _ = shortest_path(g, cur, s, t)
    except Unreachable:
        return _invalid(CLOSURE, s, t, k, ell, [], UNREACHABLE, params, **common)
    paths = [p]
    closed: list[tuple[int, ...]] = []
    chosen: list[int] = []
    rounds = k + 1 if k > 0 else 0
    for i in range(1, rounds + 1):
        prev = paths[-1]
        try:
            pos = select_closure_arc(prev, g, hop_filter)
        except EmptyWindowError:
            return _invalid(
                CLOSURE, s, t, k, ell, paths, EMPTY_WINDOW, params,
                closed_sets=closed, closure_arcs=chosen, **common,
            )
        window = hop_window(prev, pos, hop_radius)
        chosen.append(prev.arcs[pos])
        closed.append(window)
        if i == k + 1:
            break
        for j in window:
            cur[j] *= multiplier
        try:
            p, _ = shortest_path(g, cur, s, t)
        except Unreachable:  # pragma: no cover - finite penalties never disconnect
            return _invalid(
                CLOSURE, s, t, k, ell, paths, UNREACHABLE, params,
                closed_sets=closed, closure_arcs=chosen, **common,
            )
        paths.append(p)

    on_paths = {j for q in paths for j in q.arcs}
    if pliability == FEW:
        upper = [cur[j] if j in on_paths else off_factor * ell[j] for j in range(g.n_arcs)]
    else:
        upper = [off_factor * ell[j] if cur[j] == ell[j] else cur[j] for j in range(g.n_arcs)]

    reason = None
    seen: set[int] = set()
    for c in closed:
        if seen.intersection(c):
            reason = DISJOINTNESS
            break
        seen.update(c)
    if reason is None:
        route = path_weight(paths[-1], upper)
        if route != distances(g, upper, s)[t]:
            reason = NOT_TRAFFIC_SHORTEST
    return Scenario(
        CLOSURE, s, t, k, tuple(ell), tuple(upper), paths,
        closed_sets=closed, closure_arcs=chosen, valid=reason is None, reason=reason,
        params=params, **common,
    )


def gen_deletion_scenario(
    g: RoadGraph,
    ell: Sequence[int],
    s: int,
    t: int,
    k: int,
    *,
    rng: random.Random | None = None,
    off_factor: int = 2,
    pliable_route_arcs: bool = False,
    scenario_id: str = "",
) -> Scenario:
    """Closure scenario with single-arc deletions and infinite closure weights.

    Each round deletes one arc of the current shortest path (chosen at random
    with ``rng``, else by :func:`select_closure_arc` with no hop margin). Upper
    weights: infinite on deleted arcs, free-flow on the final route, and on
    the other arcs of earlier paths either free-flow (rigid) or, with
    ``pliable_route_arcs``, a random value up to ``off_factor`` times
    free-flow; every remaining arc gets ``off_factor`` times free-flow.
    """
    if s == t:
        raise ValueError("deletion scenarios need distinct endpoints")
    params = dict(off_factor=off_factor, deletion=True, pliable_route_arcs=pliable_route_arcs)
    y: list[Weight] = list(ell)
    try:
        p, _ = shortest_path(g, y, s, t)
    except Unreachable:
        return _invalid(CLOSURE, s, t, k, ell, [], UNREACHABLE, params, scenario_id=scenario_id)
    paths = [p]
    chosen: list[int] = []
    for _ in range(k):
        prev = paths[-1]
        if not prev.arcs:
            return _invalid(CLOSURE, s, t, k, ell, paths, EMPTY_WINDOW, params, scenario_id=scenario_id)
        if rng is not None:
            e = prev.arcs[rng.randrange(len(prev))]
        else:
            e = prev.arcs[select_closure_arc(prev, g, lambda _: 0)]
        chosen.append(e)
        y[e] = INF
        try:
            p, _ = shortest_path(g, y, s, t)
        except Unreachable:
            return _invalid(
                CLOSURE, s, t, k, ell, paths, UNREACHABLE, params,
                closed_sets=[(e,) for e in chosen], closure_arcs=chosen, scenario_id=scenario_id,
            )
        paths.append(p)
    final = paths[-1].arc_set
    earlier = {j for q in paths[:-1] for j in q.arcs}
    upper: list[Weight] = []
    for j in range(g.n_arcs):
        if y[j] == INF:
            upper.append(INF)
        elif j in final:
            upper.append(ell[j])
        elif j in earlier:
            if pliable_route_arcs and rng is not None:
                upper.append(ell[j] + rng.randint(0, (off_factor - 1) * ell[j]))
            elif pliable_route_arcs:
                upper.append(off_factor * ell[j])
            else:
                upper.append(ell[j])
        else:
            upper.append(off_factor * ell[j])
    return Scenario(
        CLOSURE, s, t, k, tuple(ell), tuple(upper), paths,
        closed_sets=[(e,) for e in chosen], closure_arcs=chosen, params=params,
        scenario_id=scenario_id,
    )


def gen_incident_scenario(
    g: RoadGraph,
    ell: Sequence[int],
    s: int,
    t: int,
    k: int,
    *,
    gamma: tuple[int, int] = (11, 10),
    off_factor: int = 2,
    scenario_id: str = "",
) -> Scenario:
    """Incident scenario: slow the current shortest path by ``gamma`` and
    reroute, ``k`` times. Weights are rounded up after every slowdown.
    """
    num, den = gamma
    if s == t:
        raise ValueError("incident scenarios need distinct endpoints")
    if not num > den >= 1:
        raise ValueError("gamma must be a fraction num/den with num > den >= 1")
    params = dict(gamma=[num, den], off_factor=off_factor)
    y = list(ell)
    try:
        p, _ = shortest_path(g, y, s, t)
    except Unreachable:
        return _invalid(INCIDENT, s, t, k, ell, [], UNREACHABLE, params, scenario_id=scenario_id)
    paths = [p]
    for _ in range(k):
        for j in paths[-1].arcs:
            y[j] = -(-y[j] * num // den)
        p, _ = shortest_path(g, y, s, t)
        paths.append(p)
    on_paths = {j for q in paths for j in q.arcs}
    upper = tuple(y[j] if j in on_paths else off_factor * ell[j] for j in range(g.n_arcs))
    penalized = frozenset(j for q in paths[:-1] for j in q.arcs)
    return Scenario(
        INCIDENT, s, t, k, tuple(ell), upper, paths, penalized=penalized, params=params,
        scenario_id=scenario_id,
    )


def sample_query_pairs(
    g: RoadGraph,
    min_dist_m: float,
    max_dist_m: float,
    n: int,
    seed: int,
    max_attempts: int | None = None,
) -> list[tuple[int, int]]:
    """Seeded rejection sampling of origin/destination pairs by crow-flight distance."""
    if g.coords is None:
        raise ValueError("query sampling needs vertex coordinates")
    if min_dist_m > max_dist_m:
        raise ValueError("min_dist_m must not exceed max_dist_m")
    if g.n_vertices < 2:
        raise SamplingExhausted("need at least two vertices")
    rng = random.Random(seed)
    budget = max_attempts if max_attempts is not None else 1000 * max(n, 1)
    pairs: list[tuple[int, int]] = []
    attempts = 0
    while len(pairs) < n:
        if attempts >= budget:
            raise SamplingExhausted(
                f"found {len(pairs)} of {n} pairs in [{min_dist_m}, {max_dist_m}] m "
                f"after {attempts} draws"
            )
        attempts += 1
        s = rng.randrange(g.n_vertices)
        t = rng.randrange(g.n_vertices)
        if s == t:
            continue
        if min_dist_m <= haversine_m(g.coords[s], g.coords[t]) <= max_dist_m:
            pairs.append((s, t))
    return pairs


# --------------------------------------------------------------------------
# Serialization


def graph_fingerprint(g: RoadGraph) -> str:
    buf = io.StringIO()
    write_graph(g, buf)
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def _enc(x: Weight) -> int | str:
    return "inf" if x == INF else x


def _dec(x: int | str) -> Weight:
    if x == "inf":
        return INF
    if not isinstance(x, int):
        raise ValueError(f"bad weight {x!r}")
    return x


def scenario_to_dict(sc: Scenario, g: RoadGraph, **extra) -> dict[str, Any]:
    base = g.free_flow()
    factor = sc.params.get("off_factor", 2)
    ids = [a.arc_id for a in g.arcs]
    doc = {
        "scenario_id": sc.scenario_id,
        "kind": sc.kind,
        "k": sc.k,
        "source": g.node_ids[sc.source],
        "target": g.node_ids[sc.target],
        "params": sc.params,
        "lower": {ids[j]: x for j, x in enumerate(sc.lower) if x != base[j]},
        "upper": {
            "factor": factor,
            "overrides": {
                ids[j]: _enc(x) for j, x in enumerate(sc.upper) if x != factor * sc.lower[j]
            },
        },
        "paths": [g.arc_ids(p.arcs) for p in sc.paths],
        "closed_sets": [g.arc_ids(c) for c in sc.closed_sets],
        "closure_arcs": g.arc_ids(sc.closure_arcs),
        "penalized": g.arc_ids(sorted(sc.penalized)),
        "valid": sc.valid,
        "reason": sc.reason,
        "graph_sha256": graph_fingerprint(g),
    }
    doc.update(extra)
    return doc


def scenario_from_dict(doc: dict[str, Any], g: RoadGraph) -> Scenario:
    base = g.free_flow()
    lower = list(base)
    for arc_id, x in doc["lower"].items():
        lower[g.arc_index(arc_id)] = _dec(x)
    factor = doc["upper"]["factor"]
    upper: list[Weight] = [factor * x for x in lower]
    for arc_id, x in doc["upper"]["overrides"].items():
        upper[g.arc_index(arc_id)] = _dec(x)
    s, t = g.vertex(doc["source"]), g.vertex(doc["target"])
    paths = [Path.from_arc_ids(g, p, source=s) if p else Path((), s, s) for p in doc["paths"]]
    return Scenario(
        kind=doc["kind"],
        source=s,
        target=t,
        k=doc["k"],
        lower=tuple(lower),
        upper=tuple(upper),
        paths=paths,
        closed_sets=[tuple(g.arc_index(a) for a in c) for c in doc["closed_sets"]],
        closure_arcs=[g.arc_index(a) for a in doc["closure_arcs"]],
        penalized=frozenset(g.arc_index(a) for a in doc["penalized"]),
        valid=doc["valid"],
        reason=doc["reason"],
        params=doc["params"],
        scenario_id=doc["scenario_id"],
    )


def dump_scenario(sc: Scenario, g: RoadGraph, **extra) -> str:
    return json.dumps(scenario_to_dict(sc, g, **extra), indent=1, sort_keys=True) + "\n"


def load_scenario(text: str, g: RoadGraph) -> Scenario:
    doc = json.loads(text)
    sha = doc.get("graph_sha256")
    if sha is not None and sha != graph_fingerprint(g):
        raise ValueError(f"scenario {doc.get('scenario_id')!r} was generated on a different graph")
    return scenario_from_dict(doc, g)


# --------------------------------------------------------------------------
# Random instances for property tests and certification sweeps


def random_digraph(rng: random.Random, n: int, arcs_per_vertex: float = 3.0) -> RoadGraph:
    """Strongly connected random multigraph with free-flow weights in [0, 100]."""
    order = list(range(n))
    rng.shuffle(order)
    pairs = [(order[i], order[(i + 1) % n]) for i in range(n)]
    extra = int(arcs_per_vertex * n) - n
    for _ in range(max(extra, 0)):
        u = rng.randrange(n)
        v = rng.randrange(n)
        if u != v:
            pairs.append((u, v))
    arcs = [
        Arc(f"a{j}", u, v, rng.choice((0, rng.randint(1, 100), rng.randint(1, 100))))
        for j, (u, v) in enumerate(pairs)
    ]
    coords = [(rng.random() / 100, rng.random() / 100) for _ in range(n)]
    return RoadGraph([f"v{i}" for i in range(n)], arcs, coords)


def random_instance(
    rng: random.Random,
    n: int,
    *,
    kind: str = "random",
    option: TauOption | str = TauOption.ONE,
    rigid: float = 0.3,
    closed: float = 0.05,
    c0: int = DEFAULT_C0,
    scale: int = DEFAULT_SCALE,
    graph: RoadGraph | None = None,
) -> ExplanationInstance:
    """Random instance whose route is the traffic-shortest path.

    ``rigid`` is the share of arcs with ``upper == lower``; ``closed`` the
    share with infinite upper weight. ``kind`` is ``"random"`` or ``"grid"``.
    """
    if graph is None:
        if kind == "grid":
            width = max(2, int(round(n**0.5)))
            height = max(2, n // width)
            graph = make_grid(width, height, seed=rng.randrange(2**31))
        else:
            graph = random_digraph(rng, n)
    g = graph
    lower = g.free_flow() if kind == "grid" else [a.free_flow_ms for a in g.arcs]
    while True:
        upper: list[Weight] = []
        for lo in lower:
            r = rng.random()
            if r < rigid:
                upper.append(lo)
            elif r < rigid + closed:
                upper.append(INF)
            else:
                upper.append(lo + rng.randint(1, max(100, lo)))
        s, t = rng.sample(range(g.n_vertices), 2)
        try:
            route, total = shortest_path(g, upper, s, t)
        except Unreachable:
            continue
        return ExplanationInstance.build(g, lower, upper, route, option, c0, scale)
