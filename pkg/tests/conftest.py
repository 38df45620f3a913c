import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def noisy_constant(seed, size=32, T=1, sigma=0.1, level=0.5):
    """Constant complex image plus i.i.d. complex noise of variance ``sigma**2``."""
    rng = np.random.default_rng(seed)
    return level + sigma / np.sqrt(2) * crandn(rng, size, size, T)


# synthetic self-supervision task: 4 noisy constants, n = 2, default TrainConfig (Adam 1e-3, 50 epochs)
SYNTHETIC_SUBJECTS = (0, 1, 2, 3)
SYNTHETIC_EPOCH1_LOSS = 0.04093423041368805
SYNTHETIC_EPOCH50_LOSS = 0.0053296276998909785


@pytest.fixture(scope="session")
def synthetic_run():
    from msmri.denoiser import Architecture, init_model
    from msmri.trainer import TrainConfig, build_training_set, train

    pairs = build_training_set([noisy_constant(s) for s in SYNTHETIC_SUBJECTS], 2)
    model0 = init_model(Architecture(2, 16, 1), seed=0)
    model, report = train(model0, pairs, TrainConfig(epochs=50))
    return model0, model, report


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
