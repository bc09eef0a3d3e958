import numpy as np
import pytest

from specdiff.core import ZplTrace
from specdiff.forecast import Hyperparams, train
from specdiff.simulator import sinusoid_ou_trace

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def constant_model():
    """Small forecaster trained on a constant trace with tiny noise."""
    n = 400
    noise = 1e-3
    x = 539.55 + noise * np.random.default_rng(3).standard_normal(n)
    trace = ZplTrace.uniform(x, 5e-4)
    hp = Hyperparams(hidden_size=8, seq_len=8, num_layers=1, dropout=0.0, learning_rate=3e-3)
    model = train(trace, hp, (8, 1, 1), seed=0, max_epochs=60, patience=10)
    return model, trace, noise


@pytest.fixture(scope="session")
def benchmark_fixture():
    """The seeded sinusoid + OU trace and its four-scheme benchmark."""
    from specdiff.evaluation import partition_benchmark

    trace = sinusoid_ou_trace(1200, 0)
    return trace, partition_benchmark(trace, seed=0)
