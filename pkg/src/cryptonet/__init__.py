"""Encrypted inference for shallow polynomial neural networks.

A leveled RLWE scheme (:mod:`cryptonet.she`) over the ring in
:mod:`cryptonet.ring`, fixed-point encoding, polynomial activation fitting,
a compiler from networks to budget-checked arithmetic circuits, plaintext and
encrypted training steps, and a small client/server protocol.
"""

from .approx import ActivationSpec, PolyApprox, chebyshev_fit, minimax_fit, min_degree_for
from .encode import FixedPointValue, decode_real, encode_real
from .infer import decrypt_outputs, encrypt_inputs, encrypted_forward, plain_forward, quantized_forward
from .polynet import (
    CompileConfig,
    CompiledCircuit,
    CompileError,
    Layer,
    PolyNetwork,
    compile_network,
    total_degree,
    validate_budget,
)
from .ring import RingElement, RingParams
from .she import (
    Ciphertext,
    EvaluationKeys,
    SchemeParams,
    SecretKeyBundle,
    decrypt,
    deep_params,
    demo_params,
    encrypt,
    eval_poly,
    he_add,
    he_mul,
    keygen,
    noise_budget,
    training_params,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec",
    "PolyApprox",
    "chebyshev_fit",
    "minimax_fit",
    "min_degree_for",
    "FixedPointValue",
    "decode_real",
    "encode_real",
    "decrypt_outputs",
    "encrypt_inputs",
    "encrypted_forward",
    "plain_forward",
    "quantized_forward",
    "CompileConfig",
    "CompiledCircuit",
    "CompileError",
    "Layer",
    "PolyNetwork",
    "compile_network",
    "total_degree",
    "validate_budget",
    "RingElement",
    "RingParams",
    "Ciphertext",
    "EvaluationKeys",
    "SchemeParams",
    "SecretKeyBundle",
    "decrypt",
    "deep_params",
    "demo_params",
    "encrypt",
    "eval_poly",
    "he_add",
    "he_mul",
    "keygen",
    "noise_budget",
    "training_params",
]
