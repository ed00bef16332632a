import pytest

from grail import predicates
from grail.pipeline import load_rules


@pytest.fixture(scope="session")
def asterix_rb():
    return load_rules("asterix", "asterix-mini")[0]


@pytest.fixture(scope="session")
def seaquest_rb():
    return load_rules("seaquest", "seaquest-mini")[0]


@pytest.fixture(scope="session")
def asterix_sigs():
    return predicates.signatures("asterix")


@pytest.fixture(scope="session")
def seaquest_sigs():
    return predicates.signatures("seaquest")


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def report(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
