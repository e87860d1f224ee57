"""The fixed demo task: two Gaussian blobs, a 2-4-2 square-activation MLP.

Everything here is deterministic under the fixed seeds, so the trained
network, the compiled circuit and the test set are reproducible fixtures.
"""

from __future__ import annotations

import numpy as np

from .polynet import CompileConfig, CompiledCircuit, PolyNetwork, compile_network
from .she import SchemeParams, demo_params
from .train import TrainingConfig, init_network, make_blobs, one_hot, train

__all__ = [
    "DEMO_ARCH",
    "DEMO_COMPILE",
    "DEMO_INTERVAL",
    "demo_data",
    "demo_test_set",
    "demo_network",
    "demo_circuit",
]

DEMO_INTERVAL = (-1.5, 1.5)

DEMO_ARCH = {
    "input_dim": 2,
    "input_intervals": [list(DEMO_INTERVAL), list(DEMO_INTERVAL)],
    "layers": [
        {"units": 4, "activation": "square"},
        {"units": 2, "activation": None},
    ],
}

DEMO_COMPILE = CompileConfig(input_scale=3, weight_scale=2)

TRAIN_SEED, TEST_SEED, INIT_SEED = 1, 2, 0
EPOCHS, LEARNING_RATE = 200, 0.1


def demo_data(n: int = 200, seed: int = TRAIN_SEED) -> tuple[np.ndarray, np.ndarray]:
    x, labels = make_blobs(n, seed=seed)
    return np.clip(x, *DEMO_INTERVAL), labels


def demo_test_set() -> tuple[np.ndarray, np.ndarray]:
    return demo_data(100, TEST_SEED)


def demo_network() -> tuple[PolyNetwork, list[float]]:
    x, labels = demo_data()
    cfg = TrainingConfig(x, one_hot(labels), learning_rate=LEARNING_RATE, epochs=EPOCHS, seed=INIT_SEED)
    return train(init_network(DEMO_ARCH, seed=INIT_SEED), cfg)


def demo_circuit(params: SchemeParams | None = None) -> CompiledCircuit:
    net, _ = demo_network()
    return compile_network(net, params or demo_params(), DEMO_COMPILE)
