import random
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from routexplain.graph import Path as Route
from routexplain.graph import load_graph
from routexplain.model import ExplanationInstance, TauOption

DATA = Path(__file__).parent / "data"

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def parallel_graph():
    with open(DATA / "parallel.tsv", encoding="utf-8") as fh:
        return load_graph(fh)


def parallel_instance(option=TauOption.ONE, **kwargs):
    """Three parallel s->v arcs (49/51), v->t arc f (49/51), direct arc e (100/100); route e."""
    g = parallel_graph()
    lower = [100, 49, 49, 49, 49]
    upper = [100, 51, 51, 51, 51]
    route = Route.from_arc_ids(g, ["e"])
    return ExplanationInstance.build(g, lower, upper, route, option, **kwargs)


def arc(g, name):
    return g.arc_index(name)


@pytest.fixture
def parallel():
    return parallel_instance()


@pytest.fixture
def rng():
    return random.Random(20240611)


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number, passed, detail):
    """Remember one acceptance line; all lines are printed after the run."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
