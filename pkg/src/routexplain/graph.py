"""Directed road multigraph, integer weight vectors and shortest paths.

Weights are plain sequences indexed by arc position. Every finite entry is a
Python ``int`` (milliseconds); the sentinel :data:`INF` marks an arc that is
closed. ``INF`` is absorbing under addition and compares above every integer,
so sums stay exact as long as they are finite.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence, Union

from .exceptions import GraphFormatError, Unreachable

INF = math.inf

Weight = Union[int, float]
Weights = Sequence[Weight]

EARTH_RADIUS_M = 6_371_000.0


def is_inf(x: Weight) -> bool:
    return x == INF


@dataclass(frozen=True)
class Arc:
    arc_id: str
    src: int
    dst: int
    free_flow_ms: int
    road_type: int = 0
    lanes: int = 1
    length_m: int = 0
    geometry: tuple[tuple[float, float], ...] | None = None


class RoadGraph:
    """Immutable directed multigraph with per-arc road metadata.

    Vertices and arcs are addressed by their position; ``node_ids`` and
    ``Arc.arc_id`` carry the external identifiers used in files.
    """

    def __init__(
        self,
        node_ids: Sequence[str],
        arcs: Sequence[Arc],
        coords: Sequence[tuple[float, float]] | None = None,
    ):
        self.node_ids: tuple[str, ...] = tuple(node_ids)
        self.arcs: tuple[Arc, ...] = tuple(arcs)
        self.coords = tuple(coords) if coords is not None else None
        n = len(self.node_ids)

        self._node_index: dict[str, int] = {}
        for i, node in enumerate(self.node_ids):
            if node in self._node_index:
                raise ValueError(f"duplicate node id {node!r}")
            self._node_index[node] = i
        if self.coords is not None and len(self.coords) != n:
            raise ValueError("coords must have one entry per vertex")

        self._arc_index: dict[str, int] = {}
        out: list[list[int]] = [[] for _ in range(n)]
        inc: list[list[int]] = [[] for _ in range(n)]
        for j, arc in enumerate(self.arcs):
            if arc.arc_id in self._arc_index:
                raise ValueError(f"duplicate arc id {arc.arc_id!r}")
            if not (0 <= arc.src < n and 0 <= arc.dst < n):
                raise ValueError(f"arc {arc.arc_id!r} references a missing vertex")
            if arc.free_flow_ms < 0:
                raise ValueError(f"arc {arc.arc_id!r} has negative free-flow time")
            self._arc_index[arc.arc_id] = j
            out[arc.src].append(j)
            inc[arc.dst].append(j)
        self.out_arcs: tuple[tuple[int, ...], ...] = tuple(map(tuple, out))
        self.in_arcs: tuple[tuple[int, ...], ...] = tuple(map(tuple, inc))
        self.src: tuple[int, ...] = tuple(a.src for a in self.arcs)
        self.dst: tuple[int, ...] = tuple(a.dst for a in self.arcs)

    @property
    def n_vertices(self) -> int:
        return len(self.node_ids)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def vertex(self, node_id: str) -> int:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id!r}") from None

    def arc_index(self, arc_id: str) -> int:
        try:
            return self._arc_index[arc_id]
        except KeyError:
            raise KeyError(f"unknown arc {arc_id!r}") from None

    def arc_ids(self, arcs: Iterable[int]) -> list[str]:
        return [self.arcs[j].arc_id for j in arcs]

    def free_flow(self) -> list[int]:
        return [a.free_flow_ms for a in self.arcs]

    def check_adjacency(self) -> bool:
        """Round-trip the adjacency indices against the arc list."""
        seen_out = sorted(j for v in range(self.n_vertices) for j in self.out_arcs[v])
        seen_in = sorted(j for v in range(self.n_vertices) for j in self.in_arcs[v])
        every = list(range(self.n_arcs))
        if seen_out != every or seen_in != every:
            return False
        return all(
            self.arcs[j].src == v for v in range(self.n_vertices) for j in self.out_arcs[v]
        ) and all(
            self.arcs[j].dst == v for v in range(self.n_vertices) for j in self.in_arcs[v]
        )

    def arc_coordinates(self, j: int) -> list[tuple[float, float]] | None:
        arc = self.arcs[j]
        if arc.geometry:
            return list(arc.geometry)
        if self.coords is None:
            return None
        a, b = self.coords[arc.src], self.coords[arc.dst]
        if any(math.isnan(x) for x in (*a, *b)):
            return None
        return [a, b]

    def __repr__(self) -> str:
        return f"RoadGraph(|V|={self.n_vertices}, |E|={self.n_arcs})"


@dataclass(frozen=True)
class Path:
    """A simple directed path, stored as arc positions."""

    arcs: tuple[int, ...]
    source: int
    target: int

    def __len__(self) -> int:
        return len(self.arcs)

    def __iter__(self) -> Iterator[int]:
        return iter(self.arcs)

    def __contains__(self, arc: object) -> bool:
        return arc in self.arc_set

    @property
    def arc_set(self) -> frozenset[int]:
        # cached lazily; frozen dataclass so go through object.__setattr__
        cached = self.__dict__.get("_arc_set")
        if cached is None:
            cached = frozenset(self.arcs)
            object.__setattr__(self, "_arc_set", cached)
        return cached

    def vertices(self, g: RoadGraph) -> list[int]:
        return [self.source] + [g.dst[j] for j in self.arcs]

    @classmethod
    def from_arcs(
        cls,
        g: RoadGraph,
        arcs: Iterable[int],
        source: int | None = None,
        target: int | None = None,
    ) -> "Path":
        arcs = tuple(arcs)
        if not arcs:
            if source is None:
                raise ValueError("an empty path needs an explicit source")
            target = source if target is None else target
            if source != target:
                raise ValueError("an empty path must have source == target")
            return cls((), source, target)
        for j in arcs:
            if not 0 <= j < g.n_arcs:
                raise ValueError(f"arc position {j} out of range")
        first, last = g.src[arcs[0]], g.dst[arcs[-1]]
        if source is not None and source != first:
            raise ValueError("path does not start at its source")
        if target is not None and target != last:
            raise ValueError("path does not end at its target")
        for a, b in zip(arcs, arcs[1:]):
            if g.dst[a] != g.src[b]:
                raise ValueError(
                    f"arcs {g.arcs[a].arc_id!r} and {g.arcs[b].arc_id!r} are not incident"
                )
        visited = [first] + [g.dst[j] for j in arcs]
        if len(set(visited)) != len(visited):
            raise ValueError("path repeats a vertex")
        return cls(arcs, first, last)

    @classmethod
    def from_arc_ids(cls, g: RoadGraph, arc_ids: Iterable[str], source=None, target=None):
        return cls.from_arcs(g, [g.arc_index(a) for a in arc_ids], source, target)


def check_weights(g: RoadGraph, w: Weights, name: str = "weights") -> None:
    if len(w) != g.n_arcs:
        raise ValueError(f"{name} has {len(w)} entries for {g.n_arcs} arcs")
    for j, x in enumerate(w):
        if x == INF:
            continue
        if not isinstance(x, int) or isinstance(x, bool) or x < 0:
            raise ValueError(f"{name}[{g.arcs[j].arc_id}] = {x!r} is not a nonnegative integer")


def path_weight(p: Path | Iterable[int], w: Weights) -> Weight:
    total: Weight = 0
    for j in p:
        total += w[j]
    return total


def hop_window(p: Path, center: int, radius: int) -> tuple[int, ...]:
    """Arcs of ``p`` within ``radius`` hops of the arc at position ``center``."""
    if not 0 <= center < len(p):
        raise IndexError(f"position {center} outside a path of {len(p)} arcs")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    lo = max(0, center - radius)
    hi = min(len(p) - 1, center + radius)
    return p.arcs[lo : hi + 1]


def distances(g: RoadGraph, w: Weights, source: int, reverse: bool = False) -> list[Weight]:
    """Single-source (or single-target with ``reverse``) Dijkstra distances."""
    dist: list[Weight] = [INF] * g.n_vertices
    dist[source] = 0
    adj, ends = (g.in_arcs, g.src) if reverse else (g.out_arcs, g.dst)
    heap = [(0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for j in adj[v]:
            nd = d + w[j]
            x = ends[j]
            if nd < dist[x]:
                dist[x] = nd
                heapq.heappush(heap, (nd, x))
    return dist


def shortest_path(g: RoadGraph, w: Weights, s: int, t: int) -> tuple[Path, int]:
    """Minimum-weight ``s``-``t`` path.

    Ties are broken by fewest arcs, then by the lexicographically smallest
    sequence of arc positions. INF arcs are never used.

    Raises :class:`Unreachable` when ``t`` cannot be reached with finite weight.
    """
    if s == t:
        return Path((), s, s), 0
    # Labels (weight, hops) towards t; settled labels are exact.
    label: list[tuple[Weight, int] | None] = [None] * g.n_vertices
    settled = [False] * g.n_vertices
    label[t] = (0, 0)
    heap = [(0, 0, t)]
    in_arcs, src = g.in_arcs, g.src
    while heap:
        d, h, v = heapq.heappop(heap)
        if settled[v]:
            continue
        settled[v] = True
        if v == s:
            break
        for j in in_arcs[v]:
            wj = w[j]
            if wj == INF:
                continue
            x = src[j]
            if settled[x]:
                continue
            cand = (d + wj, h + 1)
            cur = label[x]
            if cur is None or cand < cur:
                label[x] = cand
                heapq.heappush(heap, (cand[0], cand[1], x))
    if not settled[s]:
        raise Unreachable(f"{g.node_ids[t]!r} is unreachable from {g.node_ids[s]!r}")

    arcs: list[int] = []
    v = s
    while v != t:
        dv, hv = label[v]
        best = None
        for j in g.out_arcs[v]:
            wj = w[j]
            y = g.dst[j]
            if wj == INF or not settled[y]:
                continue
            dy, hy = label[y]
            if dy + wj == dv and hy + 1 == hv:
                if best is None or j < best:
                    best = j
        arcs.append(best)
        v = g.dst[best]
    total = label[s][0]
    return Path(tuple(arcs), s, t), total


def haversine_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lon, lat) points."""
    lon1, lat1 = map(math.radians, a)
    lon2, lat2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(
        (lon2 - lon1) / 2
    ) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


# --------------------------------------------------------------------------
# TSV persistence

_ARC_COLUMNS = ("arc_id", "src", "dst", "free_flow_ms", "road_type", "lanes", "length_m")


def _parse_int(text: str, line: int, column: int, name: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise GraphFormatError(f"{name} {text!r} is not an integer", line, column) from None
    return value


def _parse_float(text: str, line: int, column: int, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise GraphFormatError(f"{name} {text!r} is not a number", line, column) from None


def load_graph(stream: IO[str] | Iterable[str]) -> RoadGraph:
    """Parse the graph TSV format (``#nodes``, ``#arcs``, optional ``#geometry``)."""
    section = None
    seen_sections: set[str] = set()
    node_ids: list[str] = []
    coords: list[tuple[float, float]] = []
    node_index: dict[str, int] = {}
    arcs: list[Arc] = []
    arc_index: dict[str, int] = {}
    geometry: dict[int, tuple[tuple[float, float], ...]] = {}

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            name = line[1:].strip()
            if name not in ("nodes", "arcs", "geometry"):
                raise GraphFormatError(f"unknown section {line!r}", lineno, 1)
            if name in seen_sections:
                raise GraphFormatError(f"section {line!r} repeated", lineno, 1)
            if name == "arcs" and "nodes" not in seen_sections:
                raise GraphFormatError("#arcs before #nodes", lineno, 1)
            if name == "geometry" and "arcs" not in seen_sections:
                raise GraphFormatError("#geometry before #arcs", lineno, 1)
            seen_sections.add(name)
            section = name
            continue
        cols = line.split("\t")
        if section is None:
            raise GraphFormatError("data row outside of any section", lineno, 1)
        if section == "nodes":
            if len(cols) != 3:
                raise GraphFormatError(f"expected 3 columns, got {len(cols)}", lineno, len(cols))
            node = cols[0]
            if not node:
                raise GraphFormatError("empty node id", lineno, 1)
            if node in node_index:
                raise GraphFormatError(f"duplicate node id {node!r}", lineno, 1)
            lon = _parse_float(cols[1], lineno, 2, "lon")
            lat = _parse_float(cols[2], lineno, 3, "lat")
            node_index[node] = len(node_ids)
            node_ids.append(node)
            coords.append((lon, lat))
        elif section == "arcs":
            if len(cols) != len(_ARC_COLUMNS):
                raise GraphFormatError(
                    f"expected {len(_ARC_COLUMNS)} columns, got {len(cols)}", lineno, len(cols)
                )
            arc_id = cols[0]
            if not arc_id:
                raise GraphFormatError("empty arc id", lineno, 1)
            if arc_id in arc_index:
                raise GraphFormatError(f"duplicate arc id {arc_id!r}", lineno, 1)
            ends = []
            for c in (1, 2):
                if cols[c] not in node_index:
                    raise GraphFormatError(f"unknown vertex {cols[c]!r}", lineno, c + 1)
                ends.append(node_index[cols[c]])
            values = [
                _parse_int(cols[c], lineno, c + 1, _ARC_COLUMNS[c]) for c in range(3, 7)
            ]
            for c, v in zip(range(3, 7), values):
                if v < 0:
                    raise GraphFormatError(f"{_ARC_COLUMNS[c]} must be nonnegative", lineno, c + 1)
            arc_index[arc_id] = len(arcs)
            arcs.append(Arc(arc_id, ends[0], ends[1], *values))
        else:
            if len(cols) != 2:
                raise GraphFormatError(f"expected 2 columns, got {len(cols)}", lineno, len(cols))
            if cols[0] not in arc_index:
                raise GraphFormatError(f"unknown arc {cols[0]!r}", lineno, 1)
            points = []
            for chunk in cols[1].split(";"):
                parts = chunk.split(",")
                if len(parts) != 2:
                    raise GraphFormatError(f"bad coordinate pair {chunk!r}", lineno, 2)
                points.append(
                    (_parse_float(parts[0], lineno, 2, "lon"), _parse_float(parts[1], lineno, 2, "lat"))
                )
            geometry[arc_index[cols[0]]] = tuple(points)

    if "nodes" not in seen_sections:
        raise GraphFormatError("missing #nodes section")
    if geometry:
        arcs = [
            Arc(a.arc_id, a.src, a.dst, a.free_flow_ms, a.road_type, a.lanes, a.length_m, geometry[j])
            if j in geometry
            else a
            for j, a in enumerate(arcs)
        ]
    return RoadGraph(node_ids, arcs, coords)


def write_graph(g: RoadGraph, stream: IO[str]) -> None:
    stream.write("#nodes\n")
    coords = g.coords or [(math.nan, math.nan)] * g.n_vertices
    for node, (lon, lat) in zip(g.node_ids, coords):
        stream.write(f"{node}\t{lon!r}\t{lat!r}\n")
    stream.write("#arcs\n")
    for a in g.arcs:
        stream.write(
            f"{a.arc_id}\t{g.node_ids[a.src]}\t{g.node_ids[a.dst]}\t"
            f"{a.free_flow_ms}\t{a.road_type}\t{a.lanes}\t{a.length_m}\n"
        )
    with_geometry = [a for a in g.arcs if a.geometry]
    if with_geometry:
        stream.write("#geometry\n")
        for a in with_geometry:
            pts = ";".join(f"{lon!r},{lat!r}" for lon, lat in a.geometry)
            stream.write(f"{a.arc_id}\t{pts}\n")


def load_weights(g: RoadGraph, stream: IO[str] | Iterable[str]) -> list[Weight]:
    """Parse ``arc_id<TAB>value_ms`` rows (``inf`` allowed); every arc exactly once."""
    values: list[Weight | None] = [None] * g.n_arcs
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise GraphFormatError(f"expected 2 columns, got {len(cols)}", lineno, len(cols))
        try:
            j = g.arc_index(cols[0])
        except KeyError:
            raise GraphFormatError(f"unknown arc {cols[0]!r}", lineno, 1) from None
        if values[j] is not None:
            raise GraphFormatError(f"arc {cols[0]!r} listed twice", lineno, 1)
        if cols[1].strip().lower() == "inf":
            values[j] = INF
        else:
            x = _parse_int(cols[1], lineno, 2, "weight")
            if x < 0:
                raise GraphFormatError("weight must be nonnegative", lineno, 2)
            values[j] = x
    missing = [g.arcs[j].arc_id for j, x in enumerate(values) if x is None]
    if missing:
        raise GraphFormatError(f"{len(missing)} arcs without a weight, first {missing[0]!r}")
    return values  # type: ignore[return-value]


def write_weights(g: RoadGraph, w: Weights, stream: IO[str]) -> None:
    for a, x in zip(g.arcs, w):
        stream.write(f"{a.arc_id}\t{'inf' if x == INF else x}\n")


# --------------------------------------------------------------------------
# Synthetic fixtures

_METERS_PER_DEGREE = 111_320.0


def make_grid(
    width: int,
    height: int,
    spacing_m: int = 100,
    arterial_rows: Iterable[int] = (),
    arterial_cols: Iterable[int] = (),
    seed: int = 0,
    jitter: float = 0.1,
) -> RoadGraph:
    """4-neighbour grid with arcs in both directions.

    Residential arcs get road type 5, one lane and ~30 km/h; arcs running along
    an arterial row or column get road type 0, three lanes and ~60 km/h.
    ``jitter`` perturbs lengths and speeds multiplicatively (seeded) so that
    shortest paths are mostly unique.
    """
    if width < 1 or height < 1:
        raise ValueError("grid needs at least one row and column")
    rng = random.Random(seed)
    rows, cols = set(arterial_rows), set(arterial_cols)
    node_ids = [f"{r}_{c}" for r in range(height) for c in range(width)]
    step = spacing_m / _METERS_PER_DEGREE
    coords = [(c * step, r * step) for r in range(height) for c in range(width)]
    arcs: list[Arc] = []

    def add(u: int, v: int, arterial: bool) -> None:
        length = max(1, round(spacing_m * (1 + rng.uniform(-jitter, jitter) / 2)))
        speed_kmh = (60.0 if arterial else 30.0) * (1 + rng.uniform(-jitter, jitter))
        ms = max(1, round(length / (speed_kmh / 3.6) * 1000))
        arcs.append(
            Arc(f"a{len(arcs)}", u, v, ms, 0 if arterial else 5, 3 if arterial else 1, length)
        )

    for r in range(height):
        for c in range(width):
            v = r * width + c
            if c + 1 < width:
                add(v, v + 1, r in rows)
                add(v + 1, v, r in rows)
            if r + 1 < height:
                add(v, v + width, c in cols)
                add(v + width, v, c in cols)
    return RoadGraph(node_ids, arcs, coords)
