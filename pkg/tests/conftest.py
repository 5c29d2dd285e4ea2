import numpy as np
import pytest

from lcmdiar.synth import random_chain, synthesize_sessions
from lcmdiar.pipeline import train_models


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_chain():
    """A low-dimensional chain that trains in well under a second."""
    return random_chain(dim=4, n_components=4, rank=6, speaker_rank=2, seed=7, tv_scale=1.0)


@pytest.fixture(scope="session")
def small_models(small_chain):
    sess = synthesize_sessions(small_chain, n_speakers=8, n_sessions=4, session_duration=4.0, seed=8)
    return train_models([f for f, _ in sess], [s for _, s in sess], n_components=4, rank=6,
                        plda_rank=2, seed=9)


@pytest.fixture(scope="session")
def desk_chain():
    return random_chain(seed=1, tv_scale=0.3)


@pytest.fixture(scope="session")
def desk_models(desk_chain):
    sess = synthesize_sessions(desk_chain, n_speakers=20, n_sessions=10, session_duration=8.0, seed=2)
    return train_models([f for f, _ in sess], [s for _, s in sess], n_components=32, rank=50,
                        plda_rank=10, seed=3)


ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returned callable also prints it immediately."""

    def report(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
