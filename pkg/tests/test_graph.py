import io
import itertools
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA, arc, parallel_graph
from routexplain.exceptions import GraphFormatError, Unreachable
from routexplain.graph import (
    INF,
    Arc,
    Path,
    RoadGraph,
    distances,
    haversine_m,
    hop_window,
    load_graph,
    load_weights,
    make_grid,
    path_weight,
    shortest_path,
    write_graph,
    write_weights,
)
from routexplain.oracle import bellman_ford, enumerate_paths


def test_load_parallel_fixture():
    g = parallel_graph()
    assert g.n_vertices == 3
    assert g.n_arcs == 5
    assert list(g.node_ids) == ["s", "v", "t"]
    assert [a.arc_id for a in g.arcs] == ["e", "e1", "e2", "e3", "f"]
    assert g.check_adjacency()
    # parallel arcs stay distinct
    assert len(g.out_arcs[g.vertex("s")]) == 4


def test_empty_arc_section_is_unreachable():
    g = load_graph(io.StringIO("#nodes\na\t0\t0\nb\t1\t1\n#arcs\n"))
    assert g.n_arcs == 0
    with pytest.raises(Unreachable):
        shortest_path(g, [], 0, 1)


def test_grid_arc_count():
    g = make_grid(10, 10)
    expected = sum(
        1
        for r, c in itertools.product(range(10), range(10))
        for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0))
        if 0 <= r + dr < 10 and 0 <= c + dc < 10
    )
    assert g.n_vertices == 100
    assert g.n_arcs == expected == 360
    assert g.check_adjacency()


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("#nodes\na\t0\n", 2, 2),
        ("#nodes\na\t0\tx\n", 2, 3),
        ("#nodes\na\t0\t0\n#arcs\nq\ta\tb\t1\t0\t1\t1\n", 4, 3),
        ("#nodes\na\t0\t0\n#arcs\nq\ta\ta\t-1\t0\t1\t1\n", 4, 4),
        ("#nodes\na\t0\t0\n#arcs\nq\ta\ta\t1\t0\t1\t1\nq\ta\ta\t1\t0\t1\t1\n", 5, 1),
        ("#nodes\na\t0\t0\na\t1\t1\n", 3, 1),
        ("#edges\n", 1, 1),
        ("a\t0\t0\n", 1, 1),
    ],
)
def test_malformed_graph_reports_position(text, line, column):
    with pytest.raises(GraphFormatError) as info:
        load_graph(io.StringIO(text))
    assert (info.value.line, info.value.column) == (line, column)


def test_graph_round_trip_with_geometry():
    text = (DATA / "parallel.tsv").read_text() + "#geometry\nf\t0.001,0.001;0.0015,0.0005;0.002,0.0\n"
    g = load_graph(io.StringIO(text))
    buf = io.StringIO()
    write_graph(g, buf)
    again = load_graph(io.StringIO(buf.getvalue()))
    assert again.arcs == g.arcs
    assert again.coords == g.coords
    assert again.arc_coordinates(arc(g, "f"))[1] == (0.0015, 0.0005)


def test_weights_round_trip_and_errors():
    g = parallel_graph()
    w = [100, 51, INF, 51, 51]
    buf = io.StringIO()
    write_weights(g, w, buf)
    assert load_weights(g, io.StringIO(buf.getvalue())) == w
    with pytest.raises(GraphFormatError) as info:
        load_weights(g, io.StringIO("e\t100\ne1\tfast\n"))
    assert (info.value.line, info.value.column) == (2, 2)
    with pytest.raises(GraphFormatError):
        load_weights(g, io.StringIO("e\t100\n"))


def test_shortest_path_free_flow():
    g = parallel_graph()
    p, total = shortest_path(g, [100, 49, 49, 49, 49], g.vertex("s"), g.vertex("t"))
    assert total == 98
    assert g.arc_ids(p.arcs) == ["e1", "f"]


def test_shortest_path_tie_prefers_fewer_arcs():
    g = parallel_graph()
    x = [100, 51, 51, 51, 49]
    p, total = shortest_path(g, x, g.vertex("s"), g.vertex("t"))
    assert total == 100
    assert g.arc_ids(p.arcs) == ["e"]


def test_shortest_path_same_endpoint():
    g = parallel_graph()
    p, total = shortest_path(g, [1] * 5, 0, 0)
    assert p.arcs == () and total == 0


def test_shortest_path_ignores_infinite_arcs():
    g = parallel_graph()
    p, total = shortest_path(g, [100, INF, INF, 49, 49], g.vertex("s"), g.vertex("t"))
    assert g.arc_ids(p.arcs) == ["e3", "f"]
    with pytest.raises(Unreachable):
        shortest_path(g, [INF] * 5, g.vertex("s"), g.vertex("t"))


def test_path_weight_examples():
    g = parallel_graph()
    u = [100, 51, 51, 51, 51]
    p = Path.from_arc_ids(g, ["e1", "f"])
    assert path_weight(p, u) == 102
    assert path_weight(Path((), 0, 0), u) == 0
    assert path_weight(p, [100, INF, 0, 0, 1]) == INF


def test_path_weight_matches_fold_on_grid(rng):
    g = make_grid(8, 8, seed=3)
    w = g.free_flow()
    p, _ = shortest_path(g, w, 0, 63)
    assert len(p) >= 14
    total = 0
    for j in p.arcs:
        total = total + w[j]
    assert path_weight(p, w) == total


def test_path_validation():
    g = parallel_graph()
    with pytest.raises(ValueError):
        Path.from_arc_ids(g, ["f", "e1"])
    with pytest.raises(ValueError):
        Path.from_arcs(g, [arc(g, "e1")], g.vertex("s"), g.vertex("t"))


@pytest.mark.parametrize(
    "center, radius, lo, hi",
    [(10, 0, 10, 10), (10, 5, 5, 15), (1, 5, 0, 6), (19, 3, 16, 19)],
)
def test_hop_window(center, radius, lo, hi):
    g = make_grid(21, 1)
    p, _ = shortest_path(g, g.free_flow(), 0, 20)
    assert len(p) == 20
    assert hop_window(p, center, radius) == p.arcs[lo : hi + 1]


def test_hop_window_bad_position():
    g = make_grid(3, 1)
    p, _ = shortest_path(g, g.free_flow(), 0, 2)
    with pytest.raises(IndexError):
        hop_window(p, 5, 1)


def test_haversine_one_degree_of_latitude():
    assert haversine_m((0.0, 0.0), (0.0, 1.0)) == pytest.approx(111_195, rel=1e-3)


def _graphs(draw_seed):
    rng = random.Random(draw_seed)
    n = rng.randint(2, 7)
    arcs = []
    for j in range(rng.randint(0, 18)):
        u, v = rng.randrange(n), rng.randrange(n)
        if u != v:
            arcs.append(Arc(f"a{j}", u, v, rng.randint(0, 9)))
    g = RoadGraph([f"v{i}" for i in range(n)], arcs)
    w = [rng.choice((a.free_flow_ms, a.free_flow_ms, INF)) for a in arcs]
    return g, w, rng.randrange(n), rng.randrange(n)


@given(st.integers(0, 10**9))
def test_shortest_path_beats_every_enumerated_path(seed):
    g, w, s, t = _graphs(seed)
    paths = enumerate_paths(g, w, s, t)
    finite = [weight for _, weight in paths if weight != INF]
    if s != t and not finite:
        with pytest.raises(Unreachable):
            shortest_path(g, w, s, t)
        return
    p, total = shortest_path(g, w, s, t)
    assert total == path_weight(p, w)
    assert all(total <= weight for weight in finite) or s == t
    # fewest arcs among the optimal paths, then smallest arc indices
    if s != t:
        best = min((weight, len(q.arcs), q.arcs) for q, weight in paths if weight == total)
        assert (total, len(p.arcs), p.arcs) == best


@given(st.integers(0, 10**9))
def test_shortest_path_is_deterministic_and_monotone(seed):
    g, w, s, t = _graphs(seed)
    if g.n_arcs == 0:
        return
    try:
        first = shortest_path(g, w, s, t)
    except Unreachable:
        return
    assert shortest_path(g, list(w), s, t) == first
    j = random.Random(seed).randrange(g.n_arcs)
    raised = list(w)
    raised[j] = INF if raised[j] == INF else raised[j] + 5
    try:
        _, total = shortest_path(g, raised, s, t)
    except Unreachable:
        total = INF
    assert total >= first[1]


@given(st.integers(0, 10**9))
def test_distances_match_bellman_ford(seed):
    g, w, s, _ = _graphs(seed)
    assert distances(g, w, s) == bellman_ford(g, w, s)[0]


def test_inf_is_absorbing():
    assert INF + 5 == INF
    assert INF > 10**30
    assert math.isinf(INF)
