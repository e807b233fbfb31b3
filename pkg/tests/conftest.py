import numpy as np
import pytest

from rafm.data_synth import DatasetConfig, generate_dataset


@pytest.fixture(scope="session")
def small_ds():
    """20 subjects x 4 slices: fast enough for harness plumbing tests."""
    return generate_dataset(DatasetConfig(n_subjects=20, slices_per_subject=4), seed=3)


@pytest.fixture(scope="session")
def desk_ds():
    """The default desk-scale dataset used by the acceptance suite."""
    return generate_dataset(DatasetConfig(), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
