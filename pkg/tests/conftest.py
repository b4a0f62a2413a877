import pytest
from hypothesis import settings

# fixed example sequence so every run checks the same cases
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

_CRITERIA = []


class Criterion:
    """Context manager recording one acceptance criterion as PASS or FAIL."""

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, {}

    def __enter__(self):
        return self.detail

    def __exit__(self, exc_type, exc, tb):
        status = "FAIL" if exc_type is not None else "PASS"
        extra = ", ".join(f"{k}={v}" for k, v in self.detail.items())
        line = f"[{status}] criterion {self.number}: {self.title}" + (f" ({extra})" if extra else "")
        print(line)
        _CRITERIA.append((self.number, line))
        return False


@pytest.fixture(scope="session")
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
