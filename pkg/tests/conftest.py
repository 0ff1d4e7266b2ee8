import pytest

from modridge.core import ExperimentSpec
from modridge.simulate import NoiseModel, calibrate_lambda, sample_dataset

ACCEPTANCE_LINES = []

TARGET_P_HIT = 0.1830


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_spec():
    return ExperimentSpec()


@pytest.fixture(scope="session")
def calibrated_lambda(default_spec):
    return calibrate_lambda(TARGET_P_HIT, 0.0, default_spec)


@pytest.fixture(scope="session")
def calibrated_dataset(default_spec, calibrated_lambda):
    return sample_dataset(default_spec, NoiseModel(calibrated_lambda, 0.0), seed=2024)


@pytest.fixture(scope="session")
def null_dataset(default_spec):
    return sample_dataset(default_spec, NoiseModel(0.0, 0.0), seed=77)


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion for the run summary."""

    def record(name, ok, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return record
