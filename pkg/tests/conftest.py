import pytest

from aquaradar import synth
from aquaradar.pipeline import decompose, synthesize

# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE = []


@pytest.fixture(scope="session")
def default_dataset():
    return synthesize(synth.DatasetManifest())


@pytest.fixture(scope="session")
def default_decomposition(default_dataset):
    return decompose(default_dataset)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
