import contextlib

import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the summary table."""

    @contextlib.contextmanager
    def record(number, title):
        detail = {"text": ""}
        try:
            yield detail
        except BaseException:
            _RESULTS[number] = ("FAIL", title, detail["text"])
            raise
        _RESULTS[number] = ("PASS", title, detail["text"])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, text = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  {text}".rstrip())
