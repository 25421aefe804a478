import sys

import numpy as np
import pytest

from fedmade.config import DataConfig, ExperimentConfig, FedMadeSettings, SyntheticConfig
from fedmade.data import ClassSpec, Dataset, SyntheticSpec


def tiny_spec(seed=0, num_clients=4, n=60, noise=0.05):
    """Three well-separated classes in 5 dimensions; class 2 lives on two clients."""
    centers = [[0, 0, 0, 0, 0], [1, 1, 0, 0, 1], [0, 1, 1, 1, 0]]
    return SyntheticSpec(5, num_clients, [
        ClassSpec("benign", n, list(range(num_clients)), [centers[0]], noise),
        ClassSpec("flood", n, list(range(num_clients)), [centers[1]], noise),
        ClassSpec("rare", n // 2, [0, 1], [centers[2]], noise),
    ], seed)


def tiny_config(algorithm="fedavg", seed=0, **kw) -> ExperimentConfig:
    syn = SyntheticConfig(spec=tiny_spec().to_dict())
    data = DataConfig(synthetic=syn, validation_per_class=10)
    base = dict(algorithm=algorithm, seed=seed, rounds=3, batch_size=16, client_lr=5e-3,
                data=data, fedmade=FedMadeSettings(eps=0.1, aux_per_class=4))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def blobs():
    """Separable 3-class blobs, 40 rows per class."""
    r = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])
    X = np.concatenate([c + 0.2 * r.standard_normal((40, 2)) for c in centers])
    y = np.repeat(np.arange(3), 40)
    return Dataset(X, y, ("a", "b", "c"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
