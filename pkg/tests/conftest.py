import time

import numpy as np
import pytest

from cryptonet.demo import demo_circuit, demo_network, demo_test_set
from cryptonet.she import deep_params, demo_params, keygen, training_params


@pytest.fixture(scope="session")
def demo_keys():
    return keygen(demo_params(), np.random.default_rng(20240))


@pytest.fixture(scope="session")
def deep_keys():
    return keygen(deep_params(), np.random.default_rng(20241))


@pytest.fixture(scope="session")
def training_keys():
    return keygen(training_params(), np.random.default_rng(20242))


@pytest.fixture(scope="session")
def demo_net():
    net, _ = demo_network()
    return net


@pytest.fixture(scope="session")
def demo_compiled():
    return demo_circuit()


@pytest.fixture(scope="session")
def demo_tests():
    return demo_test_set()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._session_started = time.time()


def pytest_collection_modifyitems(items):
    """Run the whole-suite runtime check last."""
    last = [i for i in items if i.name == "test_suite_runtime"]
    items[:] = [i for i in items if i.name != "test_suite_runtime"] + last
