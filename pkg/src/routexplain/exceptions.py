"""Exception hierarchy shared by every module."""

from __future__ import annotations


class RoutexplainError(Exception):
    """Base class for all library errors."""


class GraphFormatError(RoutexplainError, ValueError):
    """A graph or weight file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class Unreachable(RoutexplainError):
    """No finite-weight path exists between the requested endpoints."""


class PreconditionError(RoutexplainError):
    """The route to explain is not a shortest path under the traffic weights."""


class ComplementarityViolation(RoutexplainError):
    """A flow solution has both slack variables positive on one arc."""


class DegenerateFlowError(RoutexplainError):
    """A residual flow pushes on both an arc and its reversal."""


class InfeasibleFlowError(RoutexplainError):
    """A residual flow violates conservation or a capacity."""


class NegativeCycleError(RoutexplainError):
    """Potentials requested on a residual graph that still has a positive cycle."""


class UnboundedError(RoutexplainError):
    """A positive residual cycle made only of uncapped arcs exists."""


class IterationLimitError(RoutexplainError):
    def __init__(self, iterations: int, objective: int, bound: int):
        self.iterations = iterations
        self.objective = objective
        self.bound = bound
        super().__init__(
            f"no optimum after {iterations} augmentations "
            f"(flow objective {objective}, gap to bound at most {bound - objective})"
        )


class CertificateError(RoutexplainError):
    """The extracted certificate does not close the duality gap (an internal bug)."""


class EmptyWindowError(RoutexplainError):
    """The hop filter excluded every arc of the path."""


class SamplingExhausted(RoutexplainError):
    """Rejection sampling ran out of attempts."""
