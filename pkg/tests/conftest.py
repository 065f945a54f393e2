import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from airprice.synthetic import synthetic_calendar, synthetic_listings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary hook prints them all at the end."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        _CRITERIA[number] = (name, bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name} {detail}".rstrip())
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name} {detail}".rstrip())


@pytest.fixture(scope="session")
def sample_records():
    return synthetic_listings(n_listings=40, n_rows=200, seed=3)


@pytest.fixture(scope="session")
def sample_calendar(sample_records):
    return synthetic_calendar(sample_records, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
