import pytest

from microdispatch.model import builtin_case_study
from microdispatch.windgen import build_scenarios

_ACCEPTANCE: list[tuple[int, str, str]] = []


@pytest.fixture(scope="session")
def case():
    return builtin_case_study()


@pytest.fixture(scope="session")
def scenarios_1000(case):
    return build_scenarios(case, 1000, seed=1)


@pytest.fixture(scope="session")
def scenarios_50(case):
    return build_scenarios(case, 50, seed=1)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and rep.when == "call":
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, outcome in sorted(_ACCEPTANCE):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {number:2d}: {label}")
