import re

import pytest

CRITERIA = {
    1: "gradient suite: finite differences < 1e-4 on 20 instances per loss, under a minute",
    2: "loss algebra: reductions to 1e-12 and zero-logit hand values to 1e-6",
    3: "metric oracles: AUUC and effect metrics agree to 1e-12",
    4: "generator validity: overlap, randomised test split, confounding witness",
    5: "ordering at desk scale: DESCN and X-network PEHE <= TARNet (soft)",
    6: "entire-space ablation: ESN+TARNet ATE error <= TARNet (soft)",
    7: "determinism: two experiment runs give byte-identical reports",
    8: "ranking sanity: AUUC of the true effect beats its reverse on every seed",
}

_outcomes: dict[int, list[tuple[str, str]]] = {}
# free-form lines (effect sizes, timings) pushed by the acceptance tests
ACCEPTANCE_NOTES: list[str] = []


@pytest.fixture
def acceptance_note():
    return ACCEPTANCE_NOTES.append


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes.setdefault(int(m.group(1)), []).append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, text in CRITERIA.items():
        results = _outcomes.get(num)
        if not results:
            status = "NOT RUN"
        elif all(o == "passed" for _, o in results):
            status = "PASS"
        else:
            status = "FAIL"
        tr.write_line(f"criterion {num}: {status:7s} {text}")
        for name, outcome in results or []:
            if outcome != "passed":
                tr.write_line(f"    {outcome}: {name}")
    if ACCEPTANCE_NOTES:
        tr.write_line("")
        for line in ACCEPTANCE_NOTES:
            tr.write_line(line)
