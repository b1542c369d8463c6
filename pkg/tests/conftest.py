import pytest

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None and (rep.when == "call" or rep.failed or rep.skipped):
        n = mark.args[0]
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        _CRITERIA.setdefault(n, []).append((rep.passed, detail or item.name))
    return rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        cases = _CRITERIA[n]
        status = "PASS" if all(ok for ok, _ in cases) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  " + " | ".join(d for _, d in cases))
