"""Explanation instances, simplicity weights, and the primal/dual objectives.

An explanation of a route ``P`` is a weight vector ``w`` with
``lower <= w <= upper`` under which ``P`` is a shortest path. Its valuation
is ``sum(tau[e] * (w[e] - lower[e]))`` over pliable arcs (``lower < upper``);
a simple valid explanation minimises that valuation.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Sequence

from .exceptions import Unreachable
from .graph import INF, Path, RoadGraph, Weight, Weights, check_weights, distances, path_weight


class TauOption(str, enum.Enum):
    ONE = "one"
    INVERSE_GAP = "inverse-gap"
    SCALE_INVARIANT = "scale-invariant"


DEFAULT_C0 = 10
DEFAULT_SCALE = 1000


@dataclass(frozen=True)
class TauVector:
    values: tuple[int, ...]
    option: TauOption
    c0: int | None = None
    scale: int | None = None

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> int:
        return self.values[j]

    def __iter__(self):
        return iter(self.values)

    def metadata(self) -> dict[str, Any]:
        meta: dict[str, Any] = {"option": self.option.value}
        if self.c0 is not None:
            meta["c0"] = self.c0
        if self.scale is not None:
            meta["scale"] = self.scale
        return meta


def make_tau(
    lower: Weights,
    upper: Weights,
    option: TauOption | str = TauOption.SCALE_INVARIANT,
    c0: int = DEFAULT_C0,
    scale: int = DEFAULT_SCALE,
) -> TauVector:
    """Integer simplicity weights; zero on every non-pliable arc.

    ``ONE``: 1 per pliable arc. ``INVERSE_GAP``: ``max(1, round(scale / gap))``
    (half rounds up), and 0 when ``upper`` is infinite. ``SCALE_INVARIANT``:
    ``1 + floor(c0 * lower / upper)``, which tends to 1 as ``upper`` grows.
    """
    option = TauOption(option)
    if option is TauOption.SCALE_INVARIANT and c0 < 1:
        raise ValueError("c0 must be >= 1")
    if option is TauOption.INVERSE_GAP and scale < 1:
        raise ValueError("scale must be >= 1")
    values = []
    for lo, up in zip(lower, upper):
        if up == lo:
            values.append(0)
        elif option is TauOption.ONE:
            values.append(1)
        elif option is TauOption.INVERSE_GAP:
            if up == INF:
                values.append(0)
            else:
                gap = up - lo
                values.append(max(1, (2 * scale + gap) // (2 * gap)))
        else:
            values.append(1 if up == INF else 1 + (c0 * lo) // up)
    return TauVector(
        tuple(values),
        option,
        c0 if option is TauOption.SCALE_INVARIANT else None,
        scale if option is TauOption.INVERSE_GAP else None,
    )


@dataclass(frozen=True)
class ExplanationInstance:
    graph: RoadGraph
    lower: tuple[int, ...]
    upper: tuple[Weight, ...]
    path: Path
    tau: TauVector

    def __post_init__(self):
        g = self.graph
        object.__setattr__(self, "lower", tuple(self.lower))
        object.__setattr__(self, "upper", tuple(self.upper))
        check_weights(g, self.lower, "lower")
        check_weights(g, self.upper, "upper")
        if len(self.tau) != g.n_arcs:
            raise ValueError("tau must have one entry per arc")
        for j, (lo, up, ta) in enumerate(zip(self.lower, self.upper, self.tau)):
            name = g.arcs[j].arc_id
            if lo == INF:
                raise ValueError(f"lower[{name}] must be finite")
            if lo > up:
                raise ValueError(f"lower[{name}] = {lo} exceeds upper[{name}] = {up}")
            if not isinstance(ta, int) or ta < 0:
                raise ValueError(f"tau[{name}] must be a nonnegative integer")
            if lo == up and ta != 0:
                raise ValueError(f"tau[{name}] must be 0 on a non-pliable arc")
        # re-validate the path against this graph
        Path.from_arcs(g, self.path.arcs, self.path.source, self.path.target)

    @classmethod
    def build(
        cls,
        graph: RoadGraph,
        lower: Weights,
        upper: Weights,
        path: Path,
        option: TauOption | str = TauOption.SCALE_INVARIANT,
        c0: int = DEFAULT_C0,
        scale: int = DEFAULT_SCALE,
    ) -> "ExplanationInstance":
        return cls(graph, tuple(lower), tuple(upper), path, make_tau(lower, upper, option, c0, scale))

    def with_tau(self, tau: TauVector) -> "ExplanationInstance":
        return ExplanationInstance(self.graph, self.lower, self.upper, self.path, tau)

    @property
    def source(self) -> int:
        return self.path.source

    @property
    def target(self) -> int:
        return self.path.target

    def pliable(self, j: int) -> bool:
        return self.lower[j] < self.upper[j]

    def pliable_arcs(self) -> list[int]:
        return [j for j in range(self.graph.n_arcs) if self.lower[j] < self.upper[j]]


def check_validity(w: Weights, inst: ExplanationInstance) -> bool:
    return len(w) == inst.graph.n_arcs and all(
        lo <= x <= up for x, lo, up in zip(w, inst.lower, inst.upper)
    )


def check_sufficiency(w: Weights, inst: ExplanationInstance) -> bool:
    """True iff the instance path is a shortest path under ``w``.

    Raises :class:`~routexplain.exceptions.Unreachable` if the target cannot be
    reached under ``w``.
    """
    dist = distances(inst.graph, w, inst.source)[inst.target]
    if dist == INF:
        raise Unreachable("target unreachable under the given weights")
    return path_weight(inst.path, w) == dist


def valuation(w: Weights, inst: ExplanationInstance) -> Weight:
    total: Weight = 0
    for x, lo, ta in zip(w, inst.lower, inst.tau):
        if ta:
            total += ta * (x - lo)
    return total


def support(w: Weights, inst: ExplanationInstance) -> frozenset[int]:
    return frozenset(j for j, (x, lo) in enumerate(zip(w, inst.lower)) if x > lo)


@dataclass(frozen=True)
class Explanation:
    weights: tuple[Weight, ...]
    valuation: Weight
    support: frozenset[int]
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_weights(cls, w: Weights, inst: ExplanationInstance, **meta) -> "Explanation":
        w = tuple(w)
        return cls(w, valuation(w, inst), support(w, inst), dict(meta))

    def to_dict(self, graph: RoadGraph, tau: TauVector | None = None) -> dict[str, Any]:
        ordered = sorted(self.support)
        doc: dict[str, Any] = {
            "support": graph.arc_ids(ordered),
            "weights": {graph.arcs[j].arc_id: _json_weight(self.weights[j]) for j in ordered},
            "valuation": _json_weight(self.valuation),
        }
        if tau is not None:
            doc["tau"] = tau.metadata()
        return doc

    def to_json(self, graph: RoadGraph, tau: TauVector | None = None) -> str:
        return json.dumps(self.to_dict(graph, tau), indent=2, sort_keys=True)


def _json_weight(x: Weight) -> int | str:
    return "inf" if x == INF else x


def lp2_objective(dual: Sequence[Sequence[int]], inst: ExplanationInstance) -> int:
    """Flow-formulation objective ``sum(lower*(a - tau) - upper*b)``."""
    f, a, b = dual
    total = 0
    for j, (lo, up, ta) in enumerate(zip(inst.lower, inst.upper, inst.tau)):
        total += lo * (a[j] - ta)
        if b[j]:
            total -= up * b[j]
    return total


def duality_gap(primal, dual, inst: ExplanationInstance) -> Weight:
    """Five-term duality gap between a cut solution ``(w, d)`` and a flow
    solution ``(f, a, b)``; no feasibility is assumed.

    Terms whose multiplier is zero are skipped so that infinite upper
    weights never meet a zero slack.
    """
    w, d = primal
    f, a, b = dual
    g = inst.graph
    lower, upper, tau = inst.lower, inst.upper, inst.tau
    gap: Weight = 0
    for j in range(g.n_arcs):
        coupling = tau[j] - (a[j] - b[j] + f[j])
        if coupling:
            gap += w[j] * coupling
        if a[j]:
            gap += (w[j] - lower[j]) * a[j]
        if b[j]:
            gap += (upper[j] - w[j]) * b[j]
        if f[j]:
            gap += (w[j] - d[g.dst[j]] + d[g.src[j]]) * f[j]
    for v in range(g.n_vertices):
        imbalance = sum(f[j] for j in g.in_arcs[v]) - sum(f[j] for j in g.out_arcs[v])
        if imbalance:
            gap += d[v] * imbalance
    return gap
