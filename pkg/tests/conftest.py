import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from unravel.core import LindbladModel, random_hermitian
from unravel.models import cavity_model, decay_model

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_model(dim: int, n_ops: int, rng: np.random.Generator) -> LindbladModel:
    h = random_hermitian(dim, rng)
    ops = [(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(dim) for _ in range(n_ops)]
    return LindbladModel(h, tuple(ops), name=f"random{dim}x{n_ops}")


@pytest.fixture(scope="session")
def decay():
    return decay_model()


@pytest.fixture(scope="session")
def decay_l1(decay):
    return decay.channel(0)


@pytest.fixture(scope="session")
def cavity():
    return cavity_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance verdicts, printed in the terminal summary (one line per criterion).
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
