import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and (rep.when == "call" or rep.failed):
        n, title = mark.args
        status = "PASS" if rep.passed else "FAIL"
        _criteria[n] = (title, status, getattr(item, "criterion_detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status, detail = _criteria[n]
        line = f"criterion {n} {status}: {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
