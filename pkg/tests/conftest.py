import numpy as np
import pytest

from linktrace.designs import RDS, run_design
from linktrace.netgraph import PopulationGraph
from linktrace.simharness.experiment import PopulationSpec, build_population, default_synthetic

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def path_graph(n):
    return PopulationGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture(scope="session")
def desk_population():
    """The default synthetic population: 5000 nodes, three component blocks."""
    return build_population(PopulationSpec(synthetic=default_synthetic()))


@pytest.fixture(scope="session")
def rds_sample(desk_population):
    graph, attrs = desk_population
    return run_design(graph, attrs, RDS, np.random.default_rng(11))
