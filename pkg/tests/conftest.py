import pytest

from ecdsim import casestudy
from ecdsim.topology import all_pairs_shortest_paths, distance_table

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def printed_graph():
    return casestudy.printed_graph()


@pytest.fixture
def symmetric_graph():
    return casestudy.symmetric_graph()


@pytest.fixture
def printed_table(printed_graph):
    return distance_table(printed_graph)


@pytest.fixture
def sym_dist(symmetric_graph):
    return all_pairs_shortest_paths(symmetric_graph)


@pytest.fixture
def cs_state():
    """Case-study world after initial delivery, r(v_i) = max(0, 123 - i)."""
    return casestudy.build_state()


@pytest.fixture
def criterion():
    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
