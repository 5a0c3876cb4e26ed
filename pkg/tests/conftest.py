import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (passed, detail); filled by the acceptance tests
_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    def record(criterion: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
