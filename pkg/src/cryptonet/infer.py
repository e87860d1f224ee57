"""Forward evaluation: real-valued, quantized integer, and encrypted."""

from __future__ import annotations

import warnings

import numpy as np

from .approx import ActivationSpec, PolyApprox
from .encode import FixedPointValue, decode_real, encode_real
from .polynet import CompiledCircuit, NotPolynomialError, PolyNetwork
from .she import (
    Ciphertext,
    EvaluationKeys,
    ParamsMismatchError,
    SecretKeyBundle,
    decrypt,
    encrypt,
    he_add,
    he_add_plain,
    he_mul,
    he_mul_plain,
    trivial_encrypt,
)

__all__ = [
    "InputRangeWarning",
    "plain_forward",
    "clip_inputs",
    "encode_inputs",
    "quantized_forward",
    "decode_outputs",
    "encrypted_forward",
    "encrypt_inputs",
    "decrypt_outputs",
]


class InputRangeWarning(UserWarning):
    pass


def _activate(act, z: np.ndarray) -> np.ndarray:
    if act is None:
        return z
    if isinstance(act, PolyApprox):
        return act(z)
    if isinstance(act, ActivationSpec) and act.is_polynomial:
        return act(z)
    raise NotPolynomialError(f"activation {getattr(act, 'kind', act)!r} is not a polynomial")


def plain_forward(net: PolyNetwork, x) -> np.ndarray:
    """Real-arithmetic evaluation with the network's polynomial activations."""
    h = np.asarray(x, dtype=float)
    if h.shape[-1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} features, got {h.shape[-1]}")
    for layer in net.layers:
        h = _activate(layer.activation, h @ layer.weights.T + layer.bias)
        if layer.pool != "none":
            groups = h.reshape(*h.shape[:-1], layer.out_dim, layer.pool_size)
            h = groups.mean(axis=-1) if layer.pool == "avg" else groups.max(axis=-1)
    return h


def clip_inputs(circuit: CompiledCircuit, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (circuit.input_dim,):
        raise ValueError(f"expected {circuit.input_dim} features, got shape {x.shape}")
    lo = np.array([a for a, _ in circuit.input_intervals])
    hi = np.array([b for _, b in circuit.input_intervals])
    if np.any(x < lo) or np.any(x > hi):
        warnings.warn("input outside the declared intervals; clipping", InputRangeWarning, stacklevel=3)
        x = np.clip(x, lo, hi)
    return x


def encode_inputs(circuit: CompiledCircuit, x) -> list[int]:
    x = clip_inputs(circuit, x)
    return [encode_real(float(v), circuit.input_scale, circuit.params.t).mantissa for v in x]


def quantized_forward(circuit: CompiledCircuit, x) -> tuple[list[int], tuple[int, ...]]:
    """Integer evaluation mod t; returns (output mantissas, output scales)."""
    return circuit.evaluate_integers(encode_inputs(circuit, x)), circuit.output_scales


def decode_outputs(circuit: CompiledCircuit, mantissas) -> np.ndarray:
    t = circuit.params.t
    return np.array([decode_real(FixedPointValue(int(m) % t, s), t)
                     for m, s in zip(mantissas, circuit.output_scales)])


class _EncryptedOps:
    def __init__(self, circuit: CompiledCircuit, keys: EvaluationKeys):
        self.params = circuit.params
        self.keys = keys

    def input(self, ct: Ciphertext):
        if ct.params_id != self.params.params_id:
            raise ParamsMismatchError("params mismatch: ciphertext was not made for this circuit")
        return ct

    def const(self, c):
        return trivial_encrypt(c, self.params)

    def add(self, a, b):
        return he_add(a, b)

    def mul(self, a, b):
        return he_mul(a, b, self.keys)

    def add_plain(self, a, c):
        return he_add_plain(a, c)

    def mul_plain(self, a, c):
        return he_mul_plain(a, c)


def encrypted_forward(circuit: CompiledCircuit, cts, keys: EvaluationKeys) -> list[Ciphertext]:
    """Evaluate the circuit on ciphertexts using public evaluation keys only."""
    if not isinstance(keys, EvaluationKeys):
        raise TypeError("encrypted_forward takes public EvaluationKeys")
    if not keys.matches(circuit.params):
        raise ParamsMismatchError("params mismatch between circuit and evaluation keys")
    cts = list(cts)
    if len(cts) != circuit.input_dim:
        raise ValueError(f"expected {circuit.input_dim} ciphertexts, got {len(cts)}")
    return circuit.evaluate(cts, _EncryptedOps(circuit, keys))


def encrypt_inputs(circuit: CompiledCircuit, x, sk: SecretKeyBundle, rng: np.random.Generator) -> list[Ciphertext]:
    return [encrypt(m, sk, rng, circuit.params) for m in encode_inputs(circuit, x)]


def decrypt_outputs(circuit: CompiledCircuit, cts, sk: SecretKeyBundle) -> tuple[list[int], np.ndarray]:
    mant = [decrypt(ct, sk).value for ct in cts]
    return mant, decode_outputs(circuit, mant)
