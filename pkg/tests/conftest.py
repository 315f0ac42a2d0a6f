import math

import numpy as np
import pytest
from hypothesis import settings

from rcwa2d import IncidentWave, LayerStack
from rcwa2d import devices

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def incident():
    return devices.paper_incident()


@pytest.fixture
def oblique():
    return IncidentWave(600.0, math.radians(17.0))


@pytest.fixture(scope="session")
def nonsymmetric():
    return devices.nonsymmetric_grating()


@pytest.fixture(scope="session")
def symmetric():
    return devices.symmetric_grating()


def random_eps(rng, kind=None):
    """Draw a permittivity from the lossless, lossy or metallic class."""
    kind = rng.integers(3) if kind is None else kind
    if kind == 0:
        return complex(rng.uniform(1.0, 6.0))
    if kind == 1:
        return complex(rng.uniform(1.0, 6.0), rng.uniform(0.01, 3.0))
    return complex(rng.uniform(-20.0, -0.5), rng.uniform(0.1, 5.0))


def random_stack(rng, max_layers=5):
    n = int(rng.integers(1, max_layers + 1))
    layers = tuple((random_eps(rng), float(rng.uniform(10.0, 200.0))) for _ in range(n))
    eps_plus = complex(rng.uniform(1.0, 2.5))
    eps_minus = random_eps(rng) if rng.random() < 0.5 else 1.0
    return LayerStack(layers, eps_plus, eps_minus)


def relative(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(b), 1e-300)))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Print and remember a one-line acceptance verdict."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
