import re

CRITERIA = {
    1: "double integrator shooting: iterations, control, cost, runtime",
    2: "pmp/newlag/newham traces and quadrature costs agree",
    3: "chart composition identities at 100 points per problem",
    4: "hyperregularity |det| = 1 with the sign recorded",
    5: "energy and Noether momentum conservation",
    6: "alpha/beta/kappa round trips, pullbacks and equivariance",
    7: "scalar regularity verdicts",
    8: "generating-function identities and runtime",
    9: "mechanical momentum negative control",
    10: "higher-order Lagrangian acceleration derivative",
}

_outcomes: dict[int, bool] = {}
_details: dict[int, list[str]] = {}
_NODE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    m = _NODE.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.failed:
        _outcomes[n] = _outcomes.get(n, True) and report.passed
    if report.when == "call":
        _details.setdefault(n, []).extend(f"{k}={v}" for k, v in report.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n not in _outcomes:
            continue
        status = "PASS" if _outcomes[n] else "FAIL"
        extra = f"  [{', '.join(_details[n])}]" if _details.get(n) else ""
        terminalreporter.write_line(f"{status} criterion {n}: {title}{extra}")
