import numpy as np
import pytest

from ganprint.imaging import make_rng, synth_texture_dataset
from ganprint.toynet import TrainConfig, default_generator, hue_shift, train


@pytest.fixture(scope="session")
def trained_net():
    """Default toy generator trained once on 32x32 hue-shift pairs."""
    data = synth_texture_dataset(64, 32, make_rng(1))
    net, trace = train(default_generator(1), data.images, hue_shift(data.images), TrainConfig(seed=1))
    return net


@pytest.fixture
def rng():
    return make_rng(1234)


def random_image(rng, h=8, w=8, c=3):
    return rng.uniform(0.0, 1.0, size=(h, w, c))


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
