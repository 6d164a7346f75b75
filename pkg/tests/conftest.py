import warnings
from collections import defaultdict

import pytest

from sramlab.engine import SimConfig

CRITERIA = {
    1: "adiabatic law: RC ramp at T = 100 RC dissipates (RC/T) C V^2 within 5%, < 1 s",
    2: "1/T scaling: log-log slope over T in {50,100,200,400} RC is -1.00 +/- 0.05",
    3: "conventional budget: step charge draws CV^2 +/- 1%, dissipates CV^2/2 +/- 2%",
    4: "crossover: adiabatic loss < CV^2/2 iff T > 2RC (T = RC, 2RC, 4RC)",
    5: "SRAM suite: write/read/hold under both supplies, CR 0.5 read upsets, < 30 s",
    6: "power direction: adiabatic < conventional in write01, write-hold, write-read",
    7: "SNM oracle: rotated max square within 10 mV of grid search on >= 5 butterflies",
    8: "SNM direction: SNM(vdd/2) < SNM(vdd) and read SNM < hold SNM",
    9: "hygiene: trapezoidal order 2, derivatives vs finite differences, energy balance",
    10: "parser: round trip on 50 netlists, named diagnostics with line numbers",
}

_results = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = getattr(report, "_criterion", None)
    if crit is None:
        return
    passed = report.outcome == "passed" and not hasattr(report, "wasxfail")
    _results[crit].append((report.nodeid.split("::")[-1], passed))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report._criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        checks = _results.get(n)
        if not checks:
            continue
        failed = [name for name, ok in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {n:2d}: {status}  {CRITERIA[n]}  ({len(checks) - len(failed)}/{len(checks)} checks)"
        if failed:
            line += "  failing: " + ", ".join(failed)
        tr.write_line(line)


@pytest.fixture
def cfg():
    return SimConfig()


@pytest.fixture
def no_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        yield
