from pathlib import Path

import pytest

from asmforge import bundled_mission, bundled_missions, parse_mission

MISSION_DIR = Path(__file__).resolve().parents[1] / "src" / "asmforge" / "missions"

_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    n, title = marker.args
    _criteria.setdefault(n, (title, []))[1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, outcomes = _criteria[n]
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}")


@pytest.fixture(scope="session")
def screw_tiles():
    return parse_mission(bundled_mission("screw_tiles"))


@pytest.fixture(scope="session")
def fixture_specs():
    return {name: parse_mission(bundled_mission(name)) for name in bundled_missions()}


@pytest.fixture
def mission_path():
    return lambda name: str(MISSION_DIR / f"{name}.mission")
