import os

import pytest

_RESULTS = {}


class AcceptanceRecorder:
    def __init__(self, number: int):
        self.number = number

    def check(self, ok: bool, detail: str):
        _RESULTS[self.number] = ("PASS" if ok else "FAIL", detail)
        assert ok, f"criterion {self.number}: {detail}"

    def skip(self, detail: str):
        _RESULTS[self.number] = ("SKIP", detail)
        pytest.skip(detail)


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    return AcceptanceRecorder(marker.args[0])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and rep.when == "call" and rep.failed and marker.args[0] not in _RESULTS:
        _RESULTS[marker.args[0]] = ("FAIL", f"raised {call.excinfo.typename}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SFRECOMB_CONFIG", raising=False)
    return tmp_path
