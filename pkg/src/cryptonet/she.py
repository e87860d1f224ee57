"""Leveled RLWE somewhat-homomorphic encryption over scalar plaintexts.

A ciphertext ``(c0, c1)`` under secret ``s`` satisfies
``c0 + c1*s = round(q*m/t) + v (mod q)`` with small noise ``v``.  Addition is
component-wise; multiplication tensors the components, scales by ``t/q`` and
relinearizes the ``s^2`` term with base-``decomp_base`` evaluation keys.  None
of the evaluation routines accept the secret key.

Parameters here are DEMONSTRATION-GRADE: they are sized for correctness of
the circuits in this package, not for a vetted security level.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ring import (
    RingElement,
    RingParams,
    binomial_k,
    plan,
    primes_for,
    sample_noise,
    sample_ternary,
    sample_uniform,
)

__all__ = [
    "SchemeParams",
    "ParameterError",
    "DepthExhaustedError",
    "ParamsMismatchError",
    "Plaintext",
    "Ciphertext",
    "EvaluationKeys",
    "SecretKeyBundle",
    "keygen",
    "encrypt",
    "decrypt",
    "he_add",
    "he_sub",
    "he_neg",
    "he_mul",
    "he_add_plain",
    "he_mul_plain",
    "noise_budget",
    "eval_poly",
    "eval_multivariate",
    "trivial_encrypt",
    "ladder_depth",
    "NoiseEstimate",
    "supported_depth",
    "demo_params",
    "deep_params",
    "training_params",
    "modulus_for",
    "DEMO_Q",
    "DEEP_Q",
]

# largest primes below 2^54 (resp. 2^124) congruent to 1 mod 2n
DEMO_Q = 18014398509404161
DEEP_Q = 21267647932558653966460912964485189633

# tail factor turning a noise standard deviation into an infinity-norm bound
TAIL = 6.0


class ParameterError(ValueError):
    pass


class DepthExhaustedError(RuntimeError):
    pass


class ParamsMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    ring: RingParams
    t: int
    noise_stddev: float = 3.2
    max_mul_depth: int = 1
    decomp_base: int = 1 << 8

    def __post_init__(self):
        if self.t < 2 or self.t >= self.ring.q:
            raise ParameterError(f"plaintext modulus t={self.t} must satisfy 2 <= t < q")
        if self.noise_stddev <= 0:
            raise ParameterError("noise_stddev must be positive")
        if self.max_mul_depth < 0:
            raise ParameterError("max_mul_depth must be non-negative")
        b = self.decomp_base
        if b < 2 or b & (b - 1):
            raise ParameterError(f"decomp_base must be a power of two >= 2, got {b}")
        depth = supported_depth(self)
        if self.max_mul_depth > depth:
            raise ParameterError(
                f"max_mul_depth={self.max_mul_depth} exceeds the {depth} levels the noise "
                f"model supports for n={self.ring.n}, log2 q={math.log2(self.ring.q):.1f}, "
                f"t={self.t}, stddev={self.noise_stddev}"
            )

    @property
    def n(self) -> int:
        return self.ring.n

    @property
    def q(self) -> int:
        return self.ring.q

    @property
    def digits(self) -> int:
        b = self.decomp_base.bit_length() - 1
        return -(-(self.q - 1).bit_length() // b)

    def to_dict(self) -> dict:
        return {
            "n": self.ring.n,
            "q": str(self.ring.q),
            "t": self.t,
            "noise_stddev": self.noise_stddev,
            "max_mul_depth": self.max_mul_depth,
            "decomp_base": self.decomp_base,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SchemeParams:
        return cls(
            ring=RingParams(int(d["n"]), int(d["q"])),
            t=int(d["t"]),
            noise_stddev=float(d["noise_stddev"]),
            max_mul_depth=int(d["max_mul_depth"]),
            decomp_base=int(d["decomp_base"]),
        )

    @cached_property
    def params_id(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(b"cryptonet/params\0" + blob).digest()

    @cached_property
    def key_id(self) -> bytes:
        """Identifies the key material; keys do not depend on t or the depth."""
        d = self.to_dict()
        blob = json.dumps([d["n"], d["q"], d["noise_stddev"], d["decomp_base"]]).encode()
        return hashlib.sha256(b"cryptonet/keys\0" + blob).digest()


def modulus_for(n: int, logq: int) -> int:
    """Largest prime q < 2^logq with q = 1 (mod 2n)."""
    from sympy import isprime

    step = 2 * n
    q = (1 << logq) - step + 1
    while q > step:
        if isprime(q):
            return q
        q -= step
    raise ParameterError(f"no prime q < 2^{logq} congruent to 1 mod {step}")


def demo_params() -> SchemeParams:
    """n=2048, 54-bit q, t=2^16: one multiplicative level."""
    return SchemeParams(RingParams(2048, DEMO_Q), t=1 << 16, max_mul_depth=1)


def deep_params() -> SchemeParams:
    """n=1024, 124-bit q, t=2^16: three multiplicative levels."""
    return SchemeParams(RingParams(1024, DEEP_Q), t=1 << 16, max_mul_depth=3, decomp_base=1 << 16)


def training_params() -> SchemeParams:
    """n=1024, 124-bit q, t=2^24: two levels, room for a fixed-point gradient step."""
    return SchemeParams(RingParams(1024, DEEP_Q), t=1 << 24, max_mul_depth=2, decomp_base=1 << 16)


# ---------------------------------------------------------------------------
# noise model
#
# Noise is tracked as the variance of the coefficients of v, where
# c0 + c1*s = round(q*m/t) + v + q*r.  The budget of a ciphertext with noise
# variance V is log2(q / (2 * t * TAIL * sqrt(V))).


@dataclass(frozen=True)
class NoiseEstimate:
    variance: float

    def budget(self, params: SchemeParams) -> float:
        if self.variance <= 0:
            return math.log2(params.q / (2 * params.t))
        return math.log2(params.q) - math.log2(2 * params.t * TAIL * math.sqrt(self.variance))

    @staticmethod
    def fresh(params: SchemeParams) -> NoiseEstimate:
        return NoiseEstimate(binomial_k(params.noise_stddev) / 2 + 1 / 12)

    @staticmethod
    def exact() -> NoiseEstimate:
        return NoiseEstimate(0.0)

    def add(self, other: NoiseEstimate) -> NoiseEstimate:
        return NoiseEstimate(self.variance + other.variance)

    def add_plain(self) -> NoiseEstimate:
        return NoiseEstimate(self.variance + 1 / 12)

    def mul_plain(self, c: int) -> NoiseEstimate:
        return NoiseEstimate(self.variance * float(c) ** 2)

    def mul(self, other: NoiseEstimate, params: SchemeParams) -> NoiseEstimate:
        n, t = params.n, params.t
        s_var = 2 / 3
        r_var = (1 + n * s_var) / 12
        # correlated inputs (squaring) double the cross term, so take the worst case
        vsum = (math.sqrt(self.variance) + math.sqrt(other.variance)) ** 2
        # factor 2: product noise is heavier-tailed than Gaussian (measured)
        tensor = 2 * t * t * (n * r_var + 1 / 12) * vsum
        rounding = (1 + n * s_var + n * n * s_var * s_var) / 12
        b = params.decomp_base
        relin = params.digits * n * (b * b / 12) * (binomial_k(params.noise_stddev) / 2)
        return NoiseEstimate(tensor + rounding + relin)


def supported_depth(params: SchemeParams) -> int:
    """Depth of a squaring chain on fresh ciphertexts that keeps positive budget."""
    est = NoiseEstimate.fresh(params)
    if est.budget(params) <= 0:
        return -1
    depth = 0
    while depth < 64:
        nxt = est.mul(est, params)
        if nxt.budget(params) <= 0:
            break
        est, depth = nxt, depth + 1
    return depth


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class Plaintext:
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("plaintext value must be non-negative; reduce mod t first")


def _plain_value(m, params: SchemeParams) -> int:
    v = m.value if isinstance(m, Plaintext) else int(m)
    if not 0 <= v < params.t:
        raise ValueError(f"plaintext {v} outside [0, {params.t})")
    return v


@dataclass(frozen=True, eq=False)
class Ciphertext:
    components: tuple[RingElement, ...]
    level: int
    params: SchemeParams

    def __post_init__(self):
        if len(self.components) < 2:
            raise ValueError("ciphertext needs at least two components")
        for c in self.components:
            if c.params != self.params.ring:
                raise ParamsMismatchError("component ring differs from scheme ring")
        if self.level > self.params.max_mul_depth:
            raise DepthExhaustedError(f"level {self.level} exceeds max_mul_depth")

    @property
    def params_id(self) -> bytes:
        return self.params.params_id

    def __eq__(self, other):
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (
            self.params == other.params
            and self.level == other.level
            and len(self.components) == len(other.components)
            and all(a == b for a, b in zip(self.components, other.components))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EvaluationKeys:
    """Public relinearization material: pairs (-(a_i s + e_i) + B^i s^2, a_i)."""

    key_id: bytes
    ring: RingParams
    decomp_base: int
    relin: tuple[tuple[RingElement, RingElement], ...]

    @cached_property
    def _plan(self):
        n, q = self.ring.n, self.ring.q
        return plan(n, primes_for(len(self.relin) * n * (self.decomp_base - 1) * q))

    @cached_property
    def _spectra(self) -> tuple[np.ndarray, np.ndarray]:
        pl = self._plan
        k0 = np.stack([pl.forward(pl.residues(b.coeffs)) for b, _ in self.relin])
        k1 = np.stack([pl.forward(pl.residues(a.coeffs)) for _, a in self.relin])
        return k0, k1

    def matches(self, params: SchemeParams) -> bool:
        return self.key_id == params.key_id


@dataclass(frozen=True, eq=False)
class SecretKeyBundle:
    params: SchemeParams
    sk: RingElement
    eval_keys: EvaluationKeys

    def public(self) -> EvaluationKeys:
        return self.eval_keys

    @cached_property
    def sk_squared(self) -> RingElement:
        return self.sk * self.sk


# ---------------------------------------------------------------------------
# key generation, encryption, decryption


def keygen(params: SchemeParams, rng: np.random.Generator) -> SecretKeyBundle:
    ring = params.ring
    s = sample_ternary(ring, rng)
    s2 = s * s
    relin = []
    for i in range(params.digits):
        a = sample_uniform(ring, rng)
        e = sample_noise(ring, params.noise_stddev, rng)
        b = -(a * s) - e + s2 * pow(params.decomp_base, i, ring.q)
        relin.append((b, a))
    evk = EvaluationKeys(params.key_id, ring, params.decomp_base, tuple(relin))
    return SecretKeyBundle(params, s, evk)


def _scaled(params: SchemeParams, m: int) -> int:
    """round(q*m/t), halves rounded up."""
    return (2 * params.q * m + params.t) // (2 * params.t)


def encrypt(m, sk: SecretKeyBundle, rng: np.random.Generator, params: SchemeParams | None = None) -> Ciphertext:
    params = params or sk.params
    if params.key_id != sk.params.key_id:
        raise ParamsMismatchError("params mismatch: key bundle was generated for another ring")
    v = _plain_value(m, params)
    ring = params.ring
    a = sample_uniform(ring, rng)
    e = sample_noise(ring, params.noise_stddev, rng)
    c0 = -(a * sk.sk) - e + RingElement.constant(ring, _scaled(params, v))
    return Ciphertext((c0, a), 0, params)


def _phase(ct: Ciphertext, sk: SecretKeyBundle) -> RingElement:
    if ct.params.key_id != sk.params.key_id:
        raise ParamsMismatchError("params mismatch between ciphertext and key")
    if len(ct.components) > 3:
        raise ValueError(f"cannot decrypt a ciphertext with {len(ct.components)} components")
    x = ct.components[0] + ct.components[1] * sk.sk
    if len(ct.components) == 3:
        x = x + ct.components[2] * sk.sk_squared
    return x


def decrypt(ct: Ciphertext, sk: SecretKeyBundle) -> Plaintext:
    params = ct.params
    if params.key_id != sk.params.key_id:
        raise ParamsMismatchError("params mismatch between ciphertext and key")
    if len(ct.components) > 3:
        raise ValueError(f"cannot decrypt a ciphertext with {len(ct.components)} components")
    q, t = params.q, params.t
    # only the constant coefficient carries the message
    s = sk.sk.centered().astype(object)
    s_rot = np.concatenate(([s[0]], -s[:0:-1]))
    x = int(ct.components[0].coeffs[0]) + int(np.dot(ct.components[1].coeffs.astype(object), s_rot))
    if len(ct.components) == 3:
        s2 = sk.sk_squared.centered().astype(object)
        s2_rot = np.concatenate(([s2[0]], -s2[:0:-1]))
        x += int(np.dot(ct.components[2].coeffs.astype(object), s2_rot))
    x %= q
    if x > q // 2:
        x -= q
    return Plaintext(((2 * t * x + q) // (2 * q)) % t)


def noise_budget(ct: Ciphertext, sk: SecretKeyBundle) -> float:
    """Remaining noise budget in bits, log2(q / (2 * |t*x - q*round(t*x/q)|)).

    A positive budget guarantees that :func:`decrypt` returns the right value.
    """
    q, t = ct.params.q, ct.params.t
    x = _phase(ct, sk).centered().astype(object)
    m = (2 * t * x + q) // (2 * q)
    worst = int(np.max(np.abs(t * x - q * m)))
    if worst == 0:
        return math.log2(q)
    return max(0.0, math.log2(q) - math.log2(2 * worst))


# ---------------------------------------------------------------------------
# homomorphic operations; none of these take secret material


def _same(a: Ciphertext, b: Ciphertext) -> SchemeParams:
    if a.params_id != b.params_id:
        raise ParamsMismatchError("params mismatch between ciphertexts")
    return a.params


def _zip_components(a: Ciphertext, b: Ciphertext, op):
    ring = a.params.ring
    na, nb = len(a.components), len(b.components)
    zero = RingElement.zero(ring)
    out = []
    for i in range(max(na, nb)):
        x = a.components[i] if i < na else zero
        y = b.components[i] if i < nb else zero
        out.append(op(x, y))
    return tuple(out)


def he_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    params = _same(a, b)
    return Ciphertext(_zip_components(a, b, RingElement.__add__), max(a.level, b.level), params)


def he_sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    params = _same(a, b)
    return Ciphertext(_zip_components(a, b, RingElement.__sub__), max(a.level, b.level), params)


def he_neg(a: Ciphertext) -> Ciphertext:
    return Ciphertext(tuple(-c for c in a.components), a.level, a.params)


def he_add_plain(a: Ciphertext, c) -> Ciphertext:
    params = a.params
    v = (c.value if isinstance(c, Plaintext) else int(c)) % params.t
    shift = RingElement.constant(params.ring, _scaled(params, v))
    return Ciphertext((a.components[0] + shift,) + a.components[1:], a.level, params)


def he_mul_plain(a: Ciphertext, c) -> Ciphertext:
    params = a.params
    t = params.t
    v = (c.value if isinstance(c, Plaintext) else int(c)) % t
    if v > t // 2:
        v -= t  # smallest representative keeps the noise growth at |c|
    return Ciphertext(tuple(x * v for x in a.components), a.level, params)


def _round_tq(x: np.ndarray, params: SchemeParams) -> np.ndarray:
    q, t = params.q, params.t
    return ((2 * t * x + q) // (2 * q)) % q


def _relinearize(d0: RingElement, d1: RingElement, d2: RingElement, keys: EvaluationKeys):
    ring = d2.params
    bits = keys.decomp_base.bit_length() - 1
    mask = keys.decomp_base - 1
    pl = keys._plan
    k0, k1 = keys._spectra
    coeffs = d2.coeffs
    acc0 = np.zeros((len(pl.primes), ring.n), dtype=np.int64)
    acc1 = np.zeros_like(acc0)
    for i in range(len(keys.relin)):
        digit = np.asarray((coeffs >> (bits * i)) & mask).astype(np.int64)
        f = pl.forward(pl.residues(digit))
        acc0 = (acc0 + f * k0[i]) % pl.p
        acc1 = (acc1 + f * k1[i]) % pl.p
    r0 = RingElement(ring, pl.crt(pl.inverse(acc0)) % ring.q)
    r1 = RingElement(ring, pl.crt(pl.inverse(acc1)) % ring.q)
    return d0 + r0, d1 + r1


def he_mul(a: Ciphertext, b: Ciphertext, keys: EvaluationKeys) -> Ciphertext:
    params = _same(a, b)
    if not isinstance(keys, EvaluationKeys):
        raise TypeError("he_mul takes public EvaluationKeys")
    if not keys.matches(params):
        raise ParamsMismatchError("params mismatch between ciphertext and evaluation keys")
    level = max(a.level, b.level) + 1
    if level > params.max_mul_depth:
        raise DepthExhaustedError(
            f"depth exhausted: product would be at level {level} > max_mul_depth={params.max_mul_depth}"
        )
    if len(a.components) != 2 or len(b.components) != 2:
        raise ValueError("he_mul expects relinearized (2-component) inputs")
    ring = params.ring
    n, q = ring.n, ring.q
    pl = plan(n, primes_for(2 * n * (q // 2) ** 2))
    fa0, fa1, fb0, fb1 = (pl.forward(pl.residues(c.centered())) for c in a.components + b.components)
    p = pl.p
    t0 = pl.crt(pl.inverse(fa0 * fb0 % p))
    t1 = pl.crt(pl.inverse((fa0 * fb1 % p + fa1 * fb0 % p) % p))
    t2 = pl.crt(pl.inverse(fa1 * fb1 % p))
    d0, d1, d2 = (RingElement(ring, _round_tq(x, params)) for x in (t0, t1, t2))
    c0, c1 = _relinearize(d0, d1, d2, keys)
    return Ciphertext((c0, c1), level, params)


# ---------------------------------------------------------------------------
# polynomial evaluation


def ladder_depth(degree: int) -> int:
    """Multiplicative depth of x^degree under the repeated-squaring ladder."""
    return 0 if degree <= 1 else (degree - 1).bit_length()


def _power(ct: Ciphertext, k: int, keys: EvaluationKeys, memo: dict) -> Ciphertext:
    if k in memo:
        return memo[k]
    hi = 1 << (k.bit_length() - 1)
    if hi == k:
        half = _power(ct, k // 2, keys, memo)
        out = he_mul(half, half, keys)
    else:
        out = he_mul(_power(ct, hi, keys, memo), _power(ct, k - hi, keys, memo), keys)
    memo[k] = out
    return out


def eval_poly(coeffs, ct: Ciphertext, keys: EvaluationKeys) -> Ciphertext:
    """Evaluate sum(coeffs[i] * x^i) mod t on an encrypted x."""
    t = ct.params.t
    cs = [(c.value if isinstance(c, Plaintext) else int(c)) % t for c in coeffs]
    while len(cs) > 1 and cs[-1] == 0:
        cs.pop()
    degree = len(cs) - 1
    need = ct.level + ladder_depth(degree)
    if need > ct.params.max_mul_depth:
        raise DepthExhaustedError(
            f"depth exhausted: degree {degree} needs {ladder_depth(degree)} levels, "
            f"{ct.params.max_mul_depth - ct.level} remain"
        )
    memo = {1: ct}
    acc = None
    for i in range(1, degree + 1):
        if cs[i] == 0:
            continue
        term = he_mul_plain(_power(ct, i, keys, memo), cs[i])
        acc = term if acc is None else he_add(acc, term)
    if acc is None:
        acc = he_mul_plain(ct, 0)
    return he_add_plain(acc, cs[0]) if cs[0] else acc


def _product(factors: list[Ciphertext], keys: EvaluationKeys) -> Ciphertext:
    while len(factors) > 1:
        nxt = [he_mul(factors[i], factors[i + 1], keys) for i in range(0, len(factors) - 1, 2)]
        if len(factors) % 2:
            nxt.append(factors[-1])
        factors = nxt
    return factors[0]


def eval_multivariate(terms: dict, cts: list[Ciphertext], keys: EvaluationKeys) -> Ciphertext:
    """Evaluate a multivariate polynomial given as {exponent tuple: coefficient}.

    Each monomial is formed by a balanced product tree, then scaled by its
    plaintext coefficient and accumulated with additions.
    """
    if not cts:
        raise ValueError("need at least one ciphertext")
    params = cts[0].params
    t = params.t
    for c in cts[1:]:
        _same(cts[0], c)
    base = max(c.level for c in cts)
    for exps in terms:
        if len(exps) != len(cts):
            raise ValueError(f"monomial {exps} does not match {len(cts)} variables")
        if base + ladder_depth(sum(exps)) > params.max_mul_depth:
            raise DepthExhaustedError(f"depth exhausted: monomial {exps} needs too many levels")
    acc = None
    const = 0
    for exps, coeff in sorted(terms.items()):
        coeff = int(coeff) % t
        if sum(exps) == 0:
            const = (const + coeff) % t
            continue
        if coeff == 0:
            continue
        factors = [cts[i] for i, e in enumerate(exps) for _ in range(e)]
        term = he_mul_plain(_product(factors, keys), coeff)
        acc = term if acc is None else he_add(acc, term)
    if acc is None:
        acc = he_mul_plain(cts[0], 0)
    return he_add_plain(acc, const) if const else acc


def trivial_encrypt(m, params: SchemeParams) -> Ciphertext:
    """Noise-free encryption (round(q*m/t), 0) that needs no key material.

    Used to carry model constants as ciphertexts when a circuit is compiled
    with encrypted constants.
    """
    v = (m.value if isinstance(m, Plaintext) else int(m)) % params.t
    ring = params.ring
    return Ciphertext((RingElement.constant(ring, _scaled(params, v)), RingElement.zero(ring)), 0, params)
