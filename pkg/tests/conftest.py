from __future__ import annotations

import numpy as np
import pytest

from stfgrid.io.matpower import load_case
from stfgrid.io.nodebreaker import bundled_nodebreaker, parse_nodebreaker

_ACCEPTANCE: dict[int, dict] = {}


@pytest.fixture(scope="session")
def cases():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_case(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def nodebreaker():
    def get(name):
        return parse_nodebreaker(bundled_nodebreaker(name))

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "details": []})
    entry["passed"] &= rep.passed
    entry["details"] += [str(v) for k, v in rep.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["passed"] else "FAIL"
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"[{status}] {number}. {e['title']}" + (f"  ({detail})" if detail else ""))
