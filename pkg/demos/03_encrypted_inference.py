"""Train the demo MLP, compile it, and classify encrypted points."""

import time

import numpy as np

from cryptonet.demo import demo_circuit, demo_network, demo_test_set
from cryptonet.infer import decrypt_outputs, encrypt_inputs, encrypted_forward, plain_forward, quantized_forward
from cryptonet.she import keygen

net, curve = demo_network()
circuit = demo_circuit()
print(f"training loss {curve[0]:.3f} -> {curve[-1]:.4f}")
print(f"circuit: degree {circuit.total_degree}, depth {circuit.mul_depth}, ops {circuit.counts()}")

rng = np.random.default_rng(3)
keys = keygen(circuit.params, rng)
x_test, labels = demo_test_set()
for x, label in list(zip(x_test, labels))[:5]:
    t0 = time.perf_counter()
    out = encrypted_forward(circuit, encrypt_inputs(circuit, x, keys, rng), keys.public())
    mant, values = decrypt_outputs(circuit, out, keys)
    assert mant == quantized_forward(circuit, x)[0]
    print(f"x={np.round(x, 2)}  label={label}  encrypted={np.round(values, 3)}  "
          f"real={np.round(plain_forward(net, x), 3)}  [{time.perf_counter() - t0:.2f}s]")
