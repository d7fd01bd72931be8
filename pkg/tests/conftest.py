from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from cloudshift.schema import ModelBundle, load_model
from cloudshift.store import LocalStore, SimulatorServer, connect

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def personnel() -> ModelBundle:
    return load_model("personnel")


@pytest.fixture(params=["local", "http"])
def endpoint(request, tmp_path: Path):
    """``(store, root)`` for a fresh endpoint of each kind; ``root`` is the directory behind it."""
    root = tmp_path / request.param
    if request.param == "local":
        yield LocalStore(root), root
        return
    with SimulatorServer(root) as server:
        yield connect(server.url), root


@pytest.fixture
def store(endpoint):
    return endpoint[0]


# -- acceptance summary: one line per criterion -------------------------------------

_criteria: dict[int, tuple[str, str]] = {}
_marked: dict[str, tuple[int, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.nodeid not in _marked:
        return
    number, title = _marked[report.nodeid]
    failed = report.failed
    if report.when == "call" or failed:
        previous = _criteria.get(number, ("PASS", title))[0]
        _criteria[number] = ("FAIL" if failed or previous == "FAIL" else "PASS", title)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _marked[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        verdict, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
