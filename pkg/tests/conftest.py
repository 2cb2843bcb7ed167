import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from noisydiff.preprocess import derive_tuning  # noqa: E402
from noisydiff.presets import paper_1d, paper_2d  # noqa: E402
from noisydiff.simulate import NoiseSpec, simulate_observations  # noqa: E402


@pytest.fixture(scope="session")
def model_1d():
    return paper_1d()


@pytest.fixture(scope="session")
def model_2d():
    return paper_2d()


@pytest.fixture(scope="session")
def obs_1d(model_1d):
    """Short 1-d series under the diffusion null, enough for unit-level checks."""
    scheme = derive_tuning(20_000, 2e-3, 1.9)
    return simulate_observations(
        model_1d, [1.0, 0.0], [-1.0, 1.0], [0.0], NoiseSpec.isotropic(1e-3, 1), scheme, seed=101
    )


@pytest.fixture(scope="session")
def obs_1d_h1(model_1d):
    scheme = derive_tuning(100_000, 1e-3, 1.9)
    return simulate_observations(
        model_1d, [1.0, 1.0], [-1.0, 1.0], [0.0], NoiseSpec.isotropic(1e-3, 1), scheme, seed=102
    )


@pytest.fixture(scope="session")
def obs_2d(model_2d):
    scheme = derive_tuning(20_000, 2e-3, 1.9)
    return simulate_observations(
        model_2d,
        [4, 1, 1, 4, 1, 1, -0.2],
        [-1, -0.1, 1, -0.1, -1, 1],
        [0.0, 0.0],
        NoiseSpec.isotropic(1e-3, 2),
        scheme,
        seed=103,
    )


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
