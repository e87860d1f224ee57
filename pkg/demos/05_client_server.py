"""Serve the demo circuit over loopback TCP; the server only ever holds evaluation keys."""

import numpy as np

from cryptonet import wire
from cryptonet.demo import demo_circuit
from cryptonet.infer import decrypt_outputs, encrypt_inputs, quantized_forward
from cryptonet.she import keygen

circuit = demo_circuit()
rng = np.random.default_rng(5)
keys = keygen(circuit.params, rng)

server = wire.serve(wire.Registry({"demo": wire.Model(circuit, keys.public())}))
server.start()
try:
    x = [0.6, -0.4]
    cts = encrypt_inputs(circuit, x, keys, rng)
    out, raw = wire.request(server.server_address, "demo", cts, circuit.params)
    mant, values = decrypt_outputs(circuit, out, keys)
    print(f"sent {len(wire.encode_request('demo', cts))} bytes, got {len(raw)} bytes back")
    print(f"prediction {values}, matches local quantized path: {mant == quantized_forward(circuit, x)[0]}")
    try:
        wire.request(server.server_address, "missing", cts, circuit.params)
    except wire.RemoteError as exc:
        print(f"unknown model -> error code {exc.code}")
finally:
    server.shutdown()
    server.server_close()
