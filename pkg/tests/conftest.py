import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def two_service():
    from nfvslice.instancegen import fig1_instance
    return fig1_instance("two-service")


@pytest.fixture
def rate4():
    from nfvslice.instancegen import fig1_instance
    return fig1_instance("rate4")


# criterion number -> [title, failures, notes]
_CRITERIA: dict[int, list] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.entry = _CRITERIA.setdefault(number, [title, [], []])

    def note(self, text: str):
        self.entry[2].append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.entry[1].append(f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        return False


@pytest.fixture
def criterion():
    """``with criterion(n, title) as c:`` records a pass/fail verdict for the summary."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, failures, notes = _CRITERIA[n]
        verdict = "FAIL" if failures else "PASS"
        detail = "; ".join(failures + notes)
        terminalreporter.write_line(f"criterion {n} {verdict}: {title}" + (f" [{detail}]" if detail else ""))
