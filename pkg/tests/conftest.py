import numpy as np
import pytest

from qcsense.dataio import generate_synthetic_lidar, preprocess, sample_subsets

SEED = 7


@pytest.fixture(scope="session")
def lidar():
    """Preprocessed synthetic dataset shared by the slower tests."""
    return preprocess(generate_synthetic_lidar(10_000, SEED), SEED)


@pytest.fixture(scope="session")
def train256(lidar):
    (subset,), _ = sample_subsets(lidar, 256, 1, seed=3)
    return subset


@pytest.fixture
def small_train():
    return preprocess(generate_synthetic_lidar(200, 1), 1).train


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the end-of-run acceptance summary."""

    def _report(criterion: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion:>2}: {detail}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
