import numpy as np
import pytest

from salbm.model import ModelParams, structure_mask


def random_model(n_v, n_h, structure="SRBM", seed=0, std=1.0, bias_std=0.5):
    rng = np.random.default_rng(seed)
    N = n_v + n_h
    J = np.triu(rng.normal(0.0, std, size=(N, N)), 1)
    J = np.where(structure_mask(n_v, n_h, structure), J + J.T, 0.0)
    return ModelParams(n_v, n_h, J, rng.normal(0.0, bias_std, size=N), structure)


@pytest.fixture
def srbm43():
    return random_model(4, 3, seed=11)


# acceptance criteria report one verdict line each; the summary collects them
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
