from __future__ import annotations

import acceptance_registry


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_registry.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, extra) in acceptance_registry.RESULTS.items():
        verdict = "PASS" if ok else "FAIL"
        suffix = f" ({extra})" if extra else ""
        terminalreporter.write_line(f"{verdict}  {name}{suffix}")
