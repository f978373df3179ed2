import numpy as np
import pytest

from modrec.dataset import GenerationConfig, build_dataset


@pytest.fixture(scope="session")
def tiny_dataset():
    """Every class at two SNRs, 4 source signals x 5 windows per cell."""
    cfg = GenerationConfig(snrs=(0, 18), signals_per_cell=4, windows_per_signal=5, seed=3)
    return build_dataset(cfg)


@pytest.fixture
def rs():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one criterion verdict; the lines are echoed in the run summary."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
