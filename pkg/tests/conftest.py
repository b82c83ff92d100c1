import numpy as np
import pytest

from mmnet.rng import Rng
from mmnet.synth import SynthSpec, synth_dataset

# (number, title, passed, detail) filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE: list = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_synth():
    """4 subjects x 2 classes x 2 samples."""
    return synth_dataset(SynthSpec(4, 2, 2), Rng(7))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}")
