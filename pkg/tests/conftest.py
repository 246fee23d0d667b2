import pytest

from actisleep.pipeline import cohort_records
from actisleep.synth import CohortSpec, generate

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """``record(number, title, passed, detail)`` stores one criterion verdict."""
    results = request.config.stash[_ACCEPTANCE]

    def record(number, title, passed, detail=""):
        results[number] = (title, bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}")


@pytest.fixture(scope="session")
def small_cohort():
    return generate(CohortSpec(n_subjects=10, days=4, seed=21))


@pytest.fixture(scope="session")
def small_records(small_cohort):
    return cohort_records(small_cohort.series)
