import random
from itertools import combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import arc, parallel_graph
from routexplain.flow import Certificate, FlowSolution, solve_sve
from routexplain.graph import INF, Path, make_grid
from routexplain.model import Explanation, ExplanationInstance, TauOption
from routexplain.oracle import bellman_ford, brute_force_mip, enumerate_paths, verify_certificate
from routexplain.scenarios import random_instance


def test_enumerate_parallel_paths():
    g = parallel_graph()
    found = enumerate_paths(g, [100, 49, 49, 49, 49], g.vertex("s"), g.vertex("t"))
    assert [(g.arc_ids(p.arcs), w) for p, w in found] == [
        (["e1", "f"], 98),
        (["e2", "f"], 98),
        (["e3", "f"], 98),
        (["e"], 100),
    ]


def _count_grid_paths(width, height, start, goal):
    # independent count of self-avoiding corner-to-corner walks
    def walk(cell, seen):
        if cell == goal:
            return 1
        r, c = cell
        total = 0
        for nxt in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nxt[0] < height and 0 <= nxt[1] < width and nxt not in seen:
                total += walk(nxt, seen | {nxt})
        return total

    return walk(start, {start})


@pytest.mark.parametrize("width, height", [(3, 3), (3, 2), (4, 3)])
def test_enumerated_grid_path_count(width, height):
    g = make_grid(width, height)
    found = enumerate_paths(g, g.free_flow(), 0, width * height - 1)
    assert len(found) == _count_grid_paths(width, height, (0, 0), (height - 1, width - 1))


def test_grid_counter_knows_the_3x3_answer():
    assert _count_grid_paths(3, 3, (0, 0), (2, 2)) == 12


def test_enumerate_limits():
    with pytest.raises(ValueError):
        enumerate_paths(make_grid(4, 4), make_grid(4, 4).free_flow(), 0, 15)
    g = make_grid(4, 3)
    with pytest.raises(ValueError):
        enumerate_paths(g, g.free_flow(), 0, 11, limit=5)


def test_bellman_ford_skips_infinite_arcs():
    g = parallel_graph()
    dist, pred = bellman_ford(g, [INF, 49, 49, 49, 49], g.vertex("s"))
    assert dist == [0, 49, 98]
    assert pred[g.vertex("t")] == arc(g, "f")


def test_mip_parallel(parallel):
    g = parallel.graph
    arcs, cost = brute_force_mip(parallel)
    assert g.arc_ids(sorted(arcs)) == ["f"] and cost == 2


def test_mip_when_shared_arc_is_rigid():
    g = parallel_graph()
    route = Path.from_arc_ids(g, ["e"])
    inst = ExplanationInstance.build(
        g, [100, 49, 49, 49, 49], [100, 51, 51, 51, 49], route, TauOption.ONE
    )
    arcs, cost = brute_force_mip(inst)
    assert g.arc_ids(sorted(arcs)) == ["e1", "e2", "e3"] and cost == 6
    assert brute_force_mip(inst, max_support=2) is None


def test_mip_refuses_large_instances():
    g = make_grid(5, 5)
    inst = ExplanationInstance.build(
        g, g.free_flow(), [2 * x for x in g.free_flow()], Path((), 0, 0), TauOption.ONE
    )
    with pytest.raises(ValueError):
        brute_force_mip(inst)


@given(st.integers(0, 10**9))
def test_mip_matches_exhaustive_subsets(seed):
    inst = random_instance(random.Random(seed), 6, option=TauOption.ONE, rigid=0.6)
    pliable = [j for j in inst.pliable_arcs() if j not in inst.path.arc_set]
    if len(pliable) > 10:
        return
    g = inst.graph
    best = None
    for size in range(len(pliable) + 1):
        for chosen in combinations(pliable, size):
            w = [inst.upper[j] if j in chosen else inst.lower[j] for j in range(g.n_arcs)]
            dist, _ = bellman_ford(g, w, inst.source)
            route = sum(w[j] for j in inst.path.arcs)
            if dist[inst.target] == route:
                cost = sum(inst.tau[j] * (inst.upper[j] - inst.lower[j]) for j in chosen)
                if best is None or cost < best:
                    best = cost
    found = brute_force_mip(inst)
    assert (found[1] if found else None) == best


def test_verifier_accepts_solver_output(parallel):
    expl, sol, cert = solve_sve(parallel)
    report = verify_certificate(parallel, expl, cert, sol)
    assert report.passed and report.failures() == []
    names = [c["check"] for c in report.to_list()]
    assert "zero_gap" in names and "sufficiency" in names and "conservation" in names


def test_verifier_flags_tampered_weight(parallel):
    g = parallel.graph
    expl, sol, cert = solve_sve(parallel)
    w = list(cert.w)
    w[arc(g, "f")] = 50
    report = verify_certificate(parallel, None, Certificate(tuple(w), cert.d, 0), sol)
    failed = {c["check"] for c in report.failures()}
    assert {"potential_constraints", "sufficiency", "zero_gap"} <= failed


def test_verifier_flags_tampered_flow(parallel):
    g = parallel.graph
    expl, sol, cert = solve_sve(parallel)
    f = list(sol.f)
    f[arc(g, "e")] += 1
    report = verify_certificate(parallel, expl, cert, FlowSolution(tuple(f), sol.a, sol.b))
    failed = {c["check"] for c in report.failures()}
    assert {"flow_split", "conservation"} <= failed
    assert '"passed": false' in report.to_json()


def test_verifier_flags_mismatched_explanation(parallel):
    expl, sol, cert = solve_sve(parallel)
    other = Explanation.from_weights([100, 51, 51, 51, 49], parallel)
    failed = {c["check"] for c in verify_certificate(parallel, other, cert, sol).failures()}
    assert failed == {"explanation_matches"}
