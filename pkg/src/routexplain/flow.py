"""Primal-dual cycle canceling for the cut formulation.

The dual of the cut LP is a circulation ``f`` (allowed to run backwards only
along the route) with per-arc slacks ``a`` and ``b`` satisfying
``a - b + f = tau``. Starting from ``f = 0``, the solver repeatedly finds a
cycle of positive ``kappa`` weight in the residual graph, pushes its
bottleneck around it, and stops when no such cycle is left. Vertex
potentials of the final residual graph then give a cut solution whose
duality gap against the flow is exactly zero.

Residual arcs are kept per original arc: slot ``j`` is the forward copy of
arc ``j`` and slot ``m + j`` its reversal (present only while ``f[j] > 0`` or
while ``j`` lies on the route).
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

from .exceptions import (
    CertificateError,
    ComplementarityViolation,
    DegenerateFlowError,
    InfeasibleFlowError,
    IterationLimitError,
    NegativeCycleError,
    PreconditionError,
    UnboundedError,
)
from .graph import INF, Path, RoadGraph, Weight, distances, path_weight
from .model import (
    Explanation,
    ExplanationInstance,
    TauVector,
    check_validity,
    duality_gap,
    lp2_objective,
)

logger = logging.getLogger(__name__)


class Origin(str, enum.Enum):
    FORWARD = "forward"
    REVERSE_FLOW = "reverse-flow"
    REVERSE_PATH = "reverse-path"


class FlowSolution(NamedTuple):
    f: tuple[int, ...]
    a: tuple[int, ...]
    b: tuple[int, ...]

    def objective(self, inst: ExplanationInstance) -> int:
        return lp2_objective(self, inst)


def _slacks(flow: int, tau: int) -> tuple[int, int]:
    return (tau - flow, 0) if flow <= tau else (0, flow - tau)


def init_flow(inst: ExplanationInstance) -> FlowSolution:
    m = inst.graph.n_arcs
    return FlowSolution((0,) * m, tuple(inst.tau), (0,) * m)


def flow_violations(inst: ExplanationInstance, sol: FlowSolution) -> list[str]:
    """Names of the flow-solution invariants that ``sol`` breaks."""
    g = inst.graph
    f, a, b = sol
    bad = []
    on_path = inst.path.arc_set
    for j in range(g.n_arcs):
        if a[j] - b[j] + f[j] != inst.tau[j]:
            bad.append(f"coupling:{g.arcs[j].arc_id}")
        if f[j] < 0 and j not in on_path:
            bad.append(f"sign:{g.arcs[j].arc_id}")
        if a[j] < 0 or b[j] < 0:
            bad.append(f"slack-sign:{g.arcs[j].arc_id}")
        if a[j] > 0 and b[j] > 0:
            bad.append(f"complementarity:{g.arcs[j].arc_id}")
    for v in range(g.n_vertices):
        if sum(f[j] for j in g.out_arcs[v]) != sum(f[j] for j in g.in_arcs[v]):
            bad.append(f"conservation:{g.node_ids[v]}")
    return bad


# --------------------------------------------------------------------------
# Residual graph


def _entries(flow: int, tau: int, lo: int, up: Weight, on_path: bool):
    """Residual data contributed by one original arc.

    Returns ``(forward, reverse, base)`` where ``forward`` is ``(kappa, cap)``,
    ``reverse`` is ``(origin, kappa, cap)`` or ``None``, and ``base`` is the
    arc's share of the flow objective.
    """
    if flow < tau:
        forward = (-lo, tau - flow)
        base = -lo * flow
    else:
        forward = (-up, 0)
        base = -lo * tau
        if flow > tau:
            if up == INF:
                raise InfeasibleFlowError("flow above tau on an arc with infinite upper weight")
            base -= up * (flow - tau)
    if flow > 0:
        if flow <= tau:
            reverse = (Origin.REVERSE_FLOW, lo, flow)
        else:
            reverse = (Origin.REVERSE_FLOW, up, flow - tau)
    elif on_path:
        reverse = (Origin.REVERSE_PATH, lo, 0)
    else:
        reverse = None
    return forward, reverse, base


@dataclass
class ResidualGraph:
    """Residual flow formulation around a flow solution.

    ``kappa`` and ``cap`` have ``2m`` slots. A cap of 0 marks an uncapped
    (high-flow) arc. Absent reverse slots have ``origin`` ``None``; a forward
    slot with ``kappa == -INF`` can never lie on a positive cycle.
    """

    graph: RoadGraph
    kappa: list[Weight]
    cap: list[int]
    origin: list[Origin | None]
    base: int
    _share: list[int] = field(repr=False, default_factory=list)
    _cost: list[Weight] = field(repr=False, default_factory=list)

    @property
    def m(self) -> int:
        return self.graph.n_arcs

    def tail(self, i: int) -> int:
        m = self.m
        return self.graph.src[i] if i < m else self.graph.dst[i - m]

    def head(self, i: int) -> int:
        m = self.m
        return self.graph.dst[i] if i < m else self.graph.src[i - m]

    def arc(self, i: int) -> int:
        return i if i < self.m else i - self.m

    def present(self, i: int) -> bool:
        return self.origin[i] is not None

    def usable(self, i: int) -> bool:
        return self.origin[i] is not None and self.kappa[i] != -INF

    def capped(self, i: int) -> bool:
        return self.cap[i] > 0

    def arcs(self) -> list[int]:
        return [i for i in range(2 * self.m) if self.origin[i] is not None]

    def partition(self) -> dict[Origin, list[int]]:
        parts: dict[Origin, list[int]] = {o: [] for o in Origin}
        for i in self.arcs():
            parts[self.origin[i]].append(i)
        return parts

    @property
    def high(self) -> list[int]:
        return [i for i in self.arcs() if self.cap[i] == 0]

    @property
    def low(self) -> list[int]:
        return [i for i in self.arcs() if self.cap[i] > 0]

    def _set(self, j: int, inst: ExplanationInstance, flow: int, on_path: bool) -> None:
        m = self.m
        forward, reverse, share = _entries(
            flow, inst.tau[j], inst.lower[j], inst.upper[j], on_path
        )
        self.kappa[j], self.cap[j] = forward
        self.origin[j] = Origin.FORWARD
        self._cost[j] = INF if forward[0] == -INF else -forward[0]
        if reverse is None:
            self.origin[m + j], self.kappa[m + j], self.cap[m + j] = None, -INF, 0
            self._cost[m + j] = INF
        else:
            self.origin[m + j], self.kappa[m + j], self.cap[m + j] = reverse
            self._cost[m + j] = -reverse[1]
        self.base += share - self._share[j]
        self._share[j] = share

    def refresh(self, inst: ExplanationInstance, sol: FlowSolution, arcs: Iterable[int]) -> None:
        """Recompute the slots of the given original arcs after a flow change."""
        on_path = inst.path.arc_set
        for j in arcs:
            self._set(j, inst, sol.f[j], j in on_path)

    def dump(self, stream: IO[str]) -> None:
        """Write the residual arcs as TSV."""
        g = self.graph
        stream.write("slot\tarc_id\torigin\ttail\thead\tkappa\tcap\n")
        for i in self.arcs():
            k = self.kappa[i]
            stream.write(
                f"{i}\t{g.arcs[self.arc(i)].arc_id}\t{self.origin[i].value}\t"
                f"{g.node_ids[self.tail(i)]}\t{g.node_ids[self.head(i)]}\t"
                f"{'-inf' if k == -INF else k}\t{self.cap[i] if self.cap[i] else 'uncapped'}\n"
            )
        stream.write(f"# base\t{self.base}\n")


def build_residual(inst: ExplanationInstance, sol: FlowSolution) -> ResidualGraph:
    g = inst.graph
    m = g.n_arcs
    for j in range(m):
        if sol.a[j] > 0 and sol.b[j] > 0:
            raise ComplementarityViolation(
                f"arc {g.arcs[j].arc_id!r} has a = {sol.a[j]} and b = {sol.b[j]}"
            )
    res = ResidualGraph(
        g,
        kappa=[-INF] * (2 * m),
        cap=[0] * (2 * m),
        origin=[None] * (2 * m),
        base=0,
        _share=[0] * m,
        _cost=[INF] * (2 * m),
    )
    res.refresh(inst, sol, range(m))
    return res


# --------------------------------------------------------------------------
# Label-correcting search


def _adjacency(g: RoadGraph) -> tuple[tuple[tuple[int, ...], ...], list[int], list[int]]:
    cached = getattr(g, "_residual_adjacency", None)
    if cached is None:
        m = g.n_arcs
        out = tuple(
            g.out_arcs[v] + tuple(m + j for j in g.in_arcs[v]) for v in range(g.n_vertices)
        )
        head = list(g.dst) + list(g.src)
        tail = list(g.src) + list(g.dst)
        cached = (out, head, tail)
        g._residual_adjacency = cached
    return cached


def _pred_cycle(pred: list[int], tail: list[int]) -> list[int] | None:
    n = len(pred)
    stamp = [0] * n
    for start in range(n):
        if stamp[start]:
            continue
        v = start
        mark = start + 1
        while v != -1 and not stamp[v]:
            stamp[v] = mark
            i = pred[v]
            v = tail[i] if i >= 0 else -1
        if v != -1 and stamp[v] == mark:
            cycle = []
            x = v
            while True:
                i = pred[x]
                cycle.append(i)
                x = tail[i]
                if x == v:
                    break
            cycle.reverse()
            return cycle
    return None


def _relax(
    res: ResidualGraph, labels: list[Weight], seeds: Iterable[int], pending: list[int] | None = None
) -> list[int] | None:
    """Run label correction on costs ``-kappa`` from the given labels.

    Returns ``None`` once every usable arc satisfies ``labels[head] <=
    labels[tail] + cost``; otherwise the slots of a negative-cost cycle. On
    an early exit the vertices whose out-arcs may still be violated are
    appended to ``pending``.
    """
    out, head, tail = _adjacency(res.graph)
    cost = res._cost
    n = len(labels)
    pred = [-1] * n
    inq = bytearray(n)
    queue: deque[int] = deque()
    for v in seeds:
        if not inq[v]:
            inq[v] = 1
            queue.append(v)
    relaxed = 0
    while queue:
        u = queue.popleft()
        inq[u] = 0
        du = labels[u]
        for i in out[u]:
            nd = du + cost[i]
            v = head[i]
            if nd < labels[v]:
                labels[v] = nd
                pred[v] = i
                relaxed += 1
                if not inq[v]:
                    inq[v] = 1
                    queue.append(v)
        if relaxed >= n:
            relaxed = 0
            cycle = _pred_cycle(pred, tail)
            if cycle is not None:
                if pending is not None:
                    pending.extend(queue)
                return cycle
    return None


class Cycle(NamedTuple):
    slots: tuple[int, ...]
    weight: int
    bottleneck: int | None
    pending: tuple[int, ...] = ()

    @property
    def unbounded(self) -> bool:
        return self.bottleneck is None


def find_positive_cycle(
    res: ResidualGraph,
    labels: list[Weight] | None = None,
    seeds: Iterable[int] | None = None,
) -> Cycle | None:
    """Find a simple residual cycle with positive total ``kappa``.

    ``labels`` and ``seeds`` allow a warm start: ``labels`` must satisfy the
    potential inequality on every arc whose tail is not in ``seeds``; they
    are updated in place. A returned cycle with ``bottleneck is None`` has no
    capped arc, i.e. the flow problem is unbounded.
    """
    n = res.graph.n_vertices
    if labels is None:
        labels = [0] * n
    if seeds is None:
        seeds = range(n)
    pending: list[int] = []
    slots = _relax(res, labels, seeds, pending)
    if slots is None:
        return None
    weight = sum(res.kappa[i] for i in slots)
    if not weight > 0:  # pragma: no cover - predecessor cycles are always negative
        raise AssertionError(f"predecessor cycle with kappa weight {weight}")
    caps = [res.cap[i] for i in slots if res.cap[i] > 0]
    return Cycle(tuple(slots), weight, min(caps) if caps else None, tuple(pending))


def _residual_conservation(res: ResidualGraph, df: dict[int, int]) -> bool:
    balance: dict[int, int] = {}
    for i, x in df.items():
        balance[res.tail(i)] = balance.get(res.tail(i), 0) - x
        balance[res.head(i)] = balance.get(res.head(i), 0) + x
    return not any(balance.values())


def make_nondegenerate(res: ResidualGraph, df: dict[int, int]) -> dict[int, int]:
    """Cancel flow on opposite copies of the same arc.

    ``df`` maps residual slots to nonnegative amounts. The result is feasible
    and has objective at least that of ``df``.
    """
    for i, x in df.items():
        if x < 0 or not res.usable(i):
            raise InfeasibleFlowError(f"slot {i} cannot carry {x}")
        if res.cap[i] > 0 and x > res.cap[i]:
            raise InfeasibleFlowError(f"slot {i} carries {x} over capacity {res.cap[i]}")
    if not _residual_conservation(res, df):
        raise InfeasibleFlowError("residual flow is not a circulation")
    m = res.m
    out = dict(df)
    for j in [i for i in df if i < m]:
        back = m + j
        if out.get(j, 0) > 0 and out.get(back, 0) > 0:
            cut = min(out[j], out[back])
            out[j] -= cut
            out[back] -= cut
    return {i: x for i, x in out.items() if x}


def apply_modify(
    inst: ExplanationInstance,
    sol: FlowSolution,
    res: ResidualGraph,
    df: dict[int, int],
) -> FlowSolution:
    """Fold a nondegenerate residual circulation into the flow solution."""
    m = res.m
    for i, x in df.items():
        if x and i < m and df.get(m + i, 0):
            raise DegenerateFlowError(f"arc {inst.graph.arcs[i].arc_id!r} pushed both ways")
    f, a, b = list(sol.f), list(sol.a), list(sol.b)
    touched = set()
    for i, x in df.items():
        if not x:
            continue
        j = i if i < m else i - m
        f[j] += x if i < m else -x
        touched.add(j)
    for j in touched:
        a[j], b[j] = _slacks(f[j], inst.tau[j])
    return FlowSolution(tuple(f), tuple(a), tuple(b))


# --------------------------------------------------------------------------
# Certificates


@dataclass(frozen=True)
class Certificate:
    w: tuple[Weight, ...]
    d: tuple[int, ...]
    gap: int


def residual_potentials(res: ResidualGraph) -> list[int]:
    """Distances under ``-kappa`` from a virtual source tied to every vertex."""
    n = res.graph.n_vertices
    labels: list[Weight] = [0] * n
    if _relax(res, labels, range(n)) is not None:
        raise NegativeCycleError("residual graph still has a positive kappa cycle")
    return labels


def cut_certificate(
    inst: ExplanationInstance,
    sol: FlowSolution,
    res: ResidualGraph | None = None,
    potentials: Sequence[int] | None = None,
) -> Certificate:
    """Extract the zero-gap cut solution ``(w, d)`` from an optimal flow.

    ``potentials`` may pass labels already known to be feasible for the
    residual graph; they are recomputed otherwise.
    """
    g = inst.graph
    if res is None:
        res = build_residual(inst, sol)
    d = list(potentials) if potentials is not None else residual_potentials(res)
    on_path = inst.path.arc_set
    w: list[Weight] = []
    for j in range(g.n_arcs):
        slack = d[g.dst[j]] - d[g.src[j]]
        if sol.f[j] == 0 and j not in on_path:
            # equals lower[j] whenever tau[j] > 0 or the arc is rigid; arcs with
            # tau = 0 (infinite upper) take whatever the potentials demand
            w.append(max(inst.lower[j], slack))
        else:
            w.append(slack)
    gap = duality_gap((w, d), sol, inst)
    if gap != 0 or not check_validity(w, inst):
        raise CertificateError(f"certificate has duality gap {gap}")
    return Certificate(tuple(w), tuple(d), gap)


# --------------------------------------------------------------------------
# Driver


@dataclass
class SolveResult:
    explanation: Explanation
    flow: FlowSolution
    certificate: Certificate
    iterations: int
    objective: int

    def __iter__(self):
        return iter((self.explanation, self.flow, self.certificate))


def objective_bound(inst: ExplanationInstance) -> int:
    """Valuation of an explicit valid explanation, hence an upper bound on
    the flow objective.

    Route arcs stay at ``lower``; every other arc goes to
    ``min(upper, max(lower, lower(P)))``.
    """
    cap_len = path_weight(inst.path, inst.lower)
    on_path = inst.path.arc_set
    total = 0
    for j, (lo, up, ta) in enumerate(zip(inst.lower, inst.upper, inst.tau)):
        if ta and j not in on_path:
            total += ta * (min(up, max(lo, cap_len)) - lo)
    return total


def check_route(inst: ExplanationInstance) -> None:
    """Raise :class:`PreconditionError` unless the route is shortest under ``upper``."""
    route = path_weight(inst.path, inst.upper)
    best = distances(inst.graph, inst.upper, inst.source)[inst.target]
    if route == INF or route != best:
        raise PreconditionError(
            f"route has traffic weight {route} but the shortest path has {best}"
        )


def solve_sve(
    inst: ExplanationInstance,
    max_iters: int | None = None,
    *,
    trace: IO[str] | None = None,
    check: bool = False,
    subgraph_beta: float | None = None,
) -> SolveResult:
    """Compute a simple valid explanation with its zero-gap certificate.

    ``check`` re-verifies every flow invariant after each augmentation.
    ``trace`` receives a TSV dump of the residual graph per iteration.
    ``subgraph_beta`` (>= 1) first drops arcs that cannot lie on any path of
    free-flow length within ``beta`` times the route's traffic length; the
    result is lifted back to the full graph and re-certified.
    """
    check_route(inst)
    if subgraph_beta is not None:
        return _solve_on_subgraph(inst, subgraph_beta, max_iters, trace=trace, check=check)

    bound = objective_bound(inst)
    if max_iters is None:
        max_iters = 4 * bound + 16
    g = inst.graph
    sol = init_flow(inst)
    res = build_residual(inst, sol)
    labels: list[Weight] = [0] * g.n_vertices
    seeds: Iterable[int] = range(g.n_vertices)
    iterations = 0
    while True:
        if trace is not None:
            trace.write(f"# iteration {iterations}\n")
            res.dump(trace)
        cycle = find_positive_cycle(res, labels, seeds)
        if cycle is None:
            break
        if cycle.unbounded:
            raise UnboundedError("uncapped positive cycle although the route is traffic-shortest")
        if iterations >= max_iters:
            raise IterationLimitError(iterations, res.base, bound)
        df = make_nondegenerate(res, {i: cycle.bottleneck for i in cycle.slots})
        expected = res.base + sum(res.kappa[i] * x for i, x in df.items())
        sol = apply_modify(inst, sol, res, df)
        touched = {res.arc(i) for i in df}
        res.refresh(inst, sol, touched)
        seeds = {g.src[j] for j in touched} | {g.dst[j] for j in touched} | set(cycle.pending)
        iterations += 1
        if res.base != expected:  # pragma: no cover - bookkeeping guard
            raise AssertionError(f"objective {res.base} after modify, expected {expected}")
        if check:
            bad = flow_violations(inst, sol)
            if bad:
                raise AssertionError(f"flow invariants broken: {bad[:5]}")
            if lp2_objective(sol, inst) != res.base:
                raise AssertionError("residual base out of sync with the flow objective")
    logger.debug("optimal flow after %d augmentations, objective %d", iterations, res.base)

    cert = cut_certificate(inst, sol, res, labels)
    expl = Explanation.from_weights(cert.w, inst, method="sve", iterations=iterations)
    if expl.valuation != res.base:
        raise CertificateError(
            f"valuation {expl.valuation} differs from flow objective {res.base}"
        )
    return SolveResult(expl, sol, cert, iterations, res.base)


def ellipse_arcs(inst: ExplanationInstance, beta: float) -> list[int]:
    """Arcs on some path of free-flow length at most ``beta * dist_upper(s, t)``."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    g = inst.graph
    limit = beta * distances(g, inst.upper, inst.source)[inst.target]
    from_s = distances(g, inst.lower, inst.source)
    to_t = distances(g, inst.lower, inst.target, reverse=True)
    on_path = inst.path.arc_set
    return [
        j
        for j in range(g.n_arcs)
        if j in on_path or from_s[g.src[j]] + inst.lower[j] + to_t[g.dst[j]] <= limit
    ]


def _solve_on_subgraph(inst, beta, max_iters, **kwargs) -> SolveResult:
    g = inst.graph
    keep = ellipse_arcs(inst, beta)
    sub_graph = RoadGraph(g.node_ids, [g.arcs[j] for j in keep], g.coords)
    pos = {j: k for k, j in enumerate(keep)}
    sub_path = Path(tuple(pos[j] for j in inst.path.arcs), inst.source, inst.target)
    sub = ExplanationInstance(
        sub_graph,
        tuple(inst.lower[j] for j in keep),
        tuple(inst.upper[j] for j in keep),
        sub_path,
        TauVector(
            tuple(inst.tau[j] for j in keep), inst.tau.option, inst.tau.c0, inst.tau.scale
        ),
    )
    inner = solve_sve(sub, max_iters, **kwargs)

    w: list[Weight] = list(inst.lower)
    f, a, b = [0] * g.n_arcs, list(inst.tau), [0] * g.n_arcs
    for k, j in enumerate(keep):
        w[j] = inner.certificate.w[k]
        f[j], a[j], b[j] = inner.flow.f[k], inner.flow.a[k], inner.flow.b[k]
    sol = FlowSolution(tuple(f), tuple(a), tuple(b))
    # potentials as shortest distances under w; unreachable vertices sit above all of them
    dist = distances(g, w, inst.source)
    top = max(x for x in dist if x != INF)
    d = tuple(x if x != INF else top for x in dist)
    gap = duality_gap((w, d), sol, inst)
    if gap != 0:
        raise CertificateError(f"lifted certificate has duality gap {gap}")
    cert = Certificate(tuple(w), d, gap)
    expl = Explanation.from_weights(
        w, inst, method="sve", iterations=inner.iterations, subgraph_arcs=len(keep)
    )
    return SolveResult(expl, sol, cert, inner.iterations, inner.objective)
