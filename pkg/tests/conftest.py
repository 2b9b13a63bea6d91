"""Shared pytest fixtures and the acceptance summary.

Acceptance-level checks register one line each through the ``acceptance``
fixture; the collected lines are printed as a dedicated section at the end
of the run so the pass/fail status of every headline requirement is visible
at a glance.
"""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one acceptance check and assert that it passed."""

    def record(name, passed, detail=""):
        ACCEPTANCE_LINES.append((str(name), bool(passed), str(detail)))
        assert passed, f"acceptance check {name!r} failed: {detail or 'see detail'}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance checks")
    for name, passed, detail in ACCEPTANCE_LINES:
        status = "PASS" if passed else "FAIL"
        line = f"ACCEPTANCE {status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
