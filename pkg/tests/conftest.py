import time

from helpers import ACCEPTANCE

SUITE_LIMIT = 600.0
_start = time.perf_counter()


def _criterion(line: str) -> int:
    return int(line.split("criterion ")[1].split(":")[0])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=_criterion):
        terminalreporter.write_line(line)
    elapsed = time.perf_counter() - _start
    status = "PASS" if elapsed < SUITE_LIMIT else "FAIL"
    terminalreporter.write_line(f"{status} full suite wall time {elapsed:.1f} s (limit {SUITE_LIMIT:g} s)")
