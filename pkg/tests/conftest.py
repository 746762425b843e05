import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from argnn.graph import Graph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_graph(n, edges, features=None, labels=None, num_classes=2, splits=None):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if features is None:
        features = np.zeros((n, 1))
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    return Graph(n, edges, np.asarray(features, dtype=float), np.asarray(labels), num_classes,
                 splits or {})


@pytest.fixture
def path3():
    """Path 0-1-2."""
    return make_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
