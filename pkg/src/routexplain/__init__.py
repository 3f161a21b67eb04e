"""Explain why a traffic-aware route is shortest with the fewest traffic conditions."""

from .evaluation import export_geojson, run_closure_eval, run_incident_eval
from .exceptions import (
    CertificateError,
    GraphFormatError,
    IterationLimitError,
    PreconditionError,
    RoutexplainError,
    SamplingExhausted,
    UnboundedError,
    Unreachable,
)
from .flow import FlowSolution, SolveResult, cut_certificate, solve_sve
from .graph import (
    INF,
    Arc,
    Path,
    RoadGraph,
    load_graph,
    load_weights,
    make_grid,
    path_weight,
    shortest_path,
)
from .model import (
    Explanation,
    ExplanationInstance,
    TauOption,
    check_sufficiency,
    check_validity,
    make_tau,
    valuation,
)
from .oracle import brute_force_mip, enumerate_paths, verify_certificate
from .pbe import compute_pbe
from .scenarios import (
    Scenario,
    gen_closure_scenario,
    gen_deletion_scenario,
    gen_incident_scenario,
    sample_query_pairs,
)

__version__ = "0.1.0"

__all__ = [
    "INF",
    "Arc",
    "CertificateError",
    "Explanation",
    "ExplanationInstance",
    "FlowSolution",
    "GraphFormatError",
    "IterationLimitError",
    "Path",
    "PreconditionError",
    "RoadGraph",
    "RoutexplainError",
    "SamplingExhausted",
    "Scenario",
    "SolveResult",
    "TauOption",
    "UnboundedError",
    "Unreachable",
    "brute_force_mip",
    "check_sufficiency",
    "check_validity",
    "compute_pbe",
    "cut_certificate",
    "enumerate_paths",
    "export_geojson",
    "gen_closure_scenario",
    "gen_deletion_scenario",
    "gen_incident_scenario",
    "load_graph",
    "load_weights",
    "make_grid",
    "make_tau",
    "path_weight",
    "run_closure_eval",
    "run_incident_eval",
    "sample_query_pairs",
    "shortest_path",
    "solve_sve",
    "valuation",
    "verify_certificate",
]
