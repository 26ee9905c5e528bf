import numpy as np
import pytest

from txt2img_mhn.generator import Generator, JointSequence, MhnConfig

# smallest generator used by the exact-oracle and finite-difference checks
TINY = dict(text_vocab=12, n=2, m=4, k=8, d_emb=8, n_blocks=2, n_pro=4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def tiny_config():
    return MhnConfig(**TINY)


@pytest.fixture
def tiny_model(tiny_config, rng):
    """Tiny generator in float64 with O(1) weights so every path carries signal."""
    model = Generator.init(tiny_config, rng)
    for p in model.parameters():
        p.data = rng.normal(0.0, 0.5, size=p.shape)
    return model


@pytest.fixture
def tiny_batch(tiny_config, rng):
    c = tiny_config
    return JointSequence(rng.integers(1, c.text_vocab, size=(3, c.n)), rng.integers(0, c.k, size=(3, c.m)))


# one "criterion N: PASS|FAIL ..." line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
