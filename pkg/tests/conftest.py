"""Shared test configuration: hypothesis profile, acceptance summary."""

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# (number, name, passed) tuples appended by the acceptance tests and
# echoed one per line at the end of the session
ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


def record_criterion(number: int, name: str, passed: bool) -> None:
    ACCEPTANCE_RESULTS.append((number, name, bool(passed)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, name, passed in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"criterion {number} ({name}): {'PASS' if passed else 'FAIL'}"
        )
