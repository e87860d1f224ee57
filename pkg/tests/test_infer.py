"""Real, quantized and encrypted forward passes agree as promised."""

import threading

import numpy as np
import pytest

from cryptonet.approx import exact_poly
from cryptonet.infer import (
    InputRangeWarning,
    decode_outputs,
    decrypt_outputs,
    encrypt_inputs,
    encrypted_forward,
    plain_forward,
    quantized_forward,
)
from cryptonet.polynet import CompileConfig, Layer, PolyNetwork, compile_network
from cryptonet.she import ParamsMismatchError, decrypt, demo_params


def straight_line(net, x):
    """Loop-by-loop evaluator, independent of the vectorized path."""
    h = list(x)
    for layer in net.layers:
        z = []
        for j in range(layer.units):
            acc = float(layer.bias[j])
            for i, v in enumerate(h):
                acc += float(layer.weights[j, i]) * v
            z.append(acc)
        act = layer.activation
        if act is not None:
            coeffs = act.coeffs if hasattr(act, "coeffs") else exact_poly(act.kind).coeffs
            z = [sum(c * v**k for k, c in enumerate(coeffs)) for v in z]
        if layer.pool == "avg":
            k = layer.pool_size
            z = [sum(z[g * k:(g + 1) * k]) / k for g in range(len(z) // k)]
        h = z
    return np.array(h)


def identity_net(d=2, interval=(-4.0, 4.0)):
    return PolyNetwork([Layer(np.eye(d), np.zeros(d))], d, [interval] * d)


class TestPlain:
    def test_identity(self):
        np.testing.assert_array_equal(plain_forward(identity_net(), [0.25, -3.0]), [0.25, -3.0])

    def test_single_neuron(self):
        net = PolyNetwork([Layer([[1.0, 1.0]], [0.0], exact_poly("square"))], 2)
        assert plain_forward(net, [1.0, 2.0])[0] == 9.0

    def test_against_straight_line(self, rng):
        for _ in range(20):
            act = exact_poly("square") if rng.random() < 0.5 else None
            pool = "avg" if rng.random() < 0.5 else "none"
            net = PolyNetwork(
                [
                    Layer(rng.normal(size=(4, 3)), rng.normal(size=4), act, pool=pool, pool_size=2),
                    Layer(rng.normal(size=(1, 2 if pool == "avg" else 4)), rng.normal(size=1)),
                ],
                3,
            )
            x = rng.uniform(-1, 1, 3)
            np.testing.assert_allclose(plain_forward(net, x), straight_line(net, x), rtol=1e-10, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            plain_forward(identity_net(), [1.0, 2.0, 3.0])


class TestQuantized:
    def test_identity_mantissa(self):
        c = compile_network(identity_net(1), demo_params(), CompileConfig(input_scale=4, weight_scale=0))
        mant, scales = quantized_forward(c, [1.5])
        assert mant == [24] and scales == (4,)

    def test_zero_input_gives_bias(self):
        net = PolyNetwork([Layer([[0.5, -0.25]], [0.75])], 2)
        c = compile_network(net, demo_params(), CompileConfig(input_scale=3, weight_scale=3))
        assert decode_outputs(c, quantized_forward(c, [0.0, 0.0])[0])[0] == 0.75

    def test_error_within_bound(self, demo_net, demo_compiled, rng):
        lo, hi = np.array(demo_net.input_intervals).T
        for x in rng.uniform(lo, hi, (100, 2)):
            got = decode_outputs(demo_compiled, quantized_forward(demo_compiled, x)[0])
            assert np.all(np.abs(got - plain_forward(demo_net, x)) <= np.array(demo_compiled.quant_bound))

    def test_clipping_warns(self, demo_compiled):
        with pytest.warns(InputRangeWarning):
            a = quantized_forward(demo_compiled, [9.0, 0.0])
        assert a == quantized_forward(demo_compiled, [1.5, 0.0])


class TestEncrypted:
    def test_identity(self, demo_keys, rng):
        c = compile_network(identity_net(), demo_params(), CompileConfig(input_scale=4, weight_scale=0))
        cts = encrypt_inputs(c, [1.25, -2.0], demo_keys, rng)
        out = encrypted_forward(c, cts, demo_keys.public())
        assert [decrypt(o, demo_keys).value for o in out] == [decrypt(i, demo_keys).value for i in cts]

    def test_demo_exact(self, demo_compiled, demo_keys, rng):
        for x in rng.uniform(-1.5, 1.5, (5, 2)):
            out = encrypted_forward(demo_compiled, encrypt_inputs(demo_compiled, x, demo_keys, rng), demo_keys.public())
            mant, _ = decrypt_outputs(demo_compiled, out, demo_keys)
            assert mant == quantized_forward(demo_compiled, x)[0]

    def test_epsilon_decomposition(self, demo_net, demo_compiled, demo_keys, rng):
        # square activations are exact, so the whole gap is quantization
        x = rng.uniform(-1.5, 1.5, 2)
        out = encrypted_forward(demo_compiled, encrypt_inputs(demo_compiled, x, demo_keys, rng), demo_keys.public())
        _, values = decrypt_outputs(demo_compiled, out, demo_keys)
        assert np.all(np.abs(values - plain_forward(demo_net, x)) <= np.array(demo_compiled.quant_bound))

    def test_requires_public_keys(self, demo_compiled, demo_keys, rng):
        cts = encrypt_inputs(demo_compiled, [0.1, 0.2], demo_keys, rng)
        with pytest.raises(TypeError):
            encrypted_forward(demo_compiled, cts, demo_keys)

    def test_params_mismatch(self, demo_compiled, deep_keys, rng):
        from cryptonet.she import encrypt

        cts = [encrypt(1, deep_keys, rng), encrypt(2, deep_keys, rng)]
        with pytest.raises(ParamsMismatchError):
            encrypted_forward(demo_compiled, cts, deep_keys.public())

    def test_concurrent_calls(self, demo_compiled, demo_keys, rng):
        xs = rng.uniform(-1, 1, (3, 2))
        cts = [encrypt_inputs(demo_compiled, x, demo_keys, rng) for x in xs]
        results = [None] * 3

        def run(i):
            results[i] = encrypted_forward(demo_compiled, cts[i], demo_keys.public())

        threads = [threading.Thread(target=run, args=(i,)) for i in range(3)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        for x, out in zip(xs, results):
            assert decrypt_outputs(demo_compiled, out, demo_keys)[0] == quantized_forward(demo_compiled, x)[0]
