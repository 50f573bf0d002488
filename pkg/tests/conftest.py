import pytest

_verdicts = []


@pytest.fixture
def note(request):
    """Attach a measured value to the current acceptance line."""

    def add(text):
        request.node.user_properties.append(("note", text))

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        notes = "; ".join(v for k, v in item.user_properties if k == "note")
        verdict = "PASS" if rep.passed else "FAIL"
        _verdicts.append(f"{verdict}  {marker.args[0]}" + (f"  [{notes}]" if notes else ""))


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)
