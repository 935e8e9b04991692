import pytest

from flexgrid.dataset import resolve, synth_dataset, SynthSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_dataset():
    """Resolved 12-consumer, 2-day synthetic dataset shared by harness tests."""
    return resolve(synth_dataset(SynthSpec(consumers=12, days=2, seed=5)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
