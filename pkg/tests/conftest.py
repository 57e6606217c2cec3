import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# one line per acceptance criterion, printed after the run
_criteria: dict[str, str] = {}


def record_criterion(key: str, ok: bool, detail: str) -> None:
    _criteria[key] = f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}"
    print(_criteria[key])


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_criteria, key=lambda k: (int(k.split(".")[0].rstrip("abc")), k)):
            terminalreporter.write_line(_criteria[key])
