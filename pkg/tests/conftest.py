import numpy as np
import pytest

from chlsim.spectral import SpectralDataset
from chlsim.synthetic import SynthConfig, generate


@pytest.fixture(scope="session")
def small_synth() -> SpectralDataset:
    return generate(SynthConfig(n_samples=60, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
