"""Arithmetic in the quotient ring R_q = Z_q[x]/(x^n + 1).

Coefficients are kept in canonical form ``[0, q)``.  Products are computed
exactly over the integers with a negacyclic number-theoretic transform over
a set of auxiliary 31-bit primes and recombined by CRT, so the same code
path serves toy moduli (17, 97) and large scheme moduli.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sympy import isprime, primitive_root

__all__ = [
    "RingParams",
    "RingElement",
    "RingMismatchError",
    "ring_add",
    "ring_sub",
    "ring_neg",
    "ring_mul",
    "ring_mul_schoolbook",
    "ring_scale",
    "sample_uniform",
    "sample_ternary",
    "sample_noise",
    "binomial_k",
    "exact_negacyclic",
]

# int64 storage is safe while a sum of two reduced coefficients fits.
_INT64_LIMIT = 1 << 62
# auxiliary NTT primes are c * 2^17 + 1 < 2^31, enough for n up to 2^16
_MAX_LOG_N = 16


class RingMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RingParams:
    n: int
    q: int

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"ring dimension must be a power of two >= 2, got {self.n}")
        if self.n > 1 << _MAX_LOG_N:
            raise ValueError(f"ring dimension {self.n} exceeds 2^{_MAX_LOG_N}")
        if self.q <= 1 or self.q % 2 == 0:
            raise ValueError(f"coefficient modulus must be odd and > 1, got {self.q}")

    @property
    def dtype(self):
        return np.int64 if self.q < _INT64_LIMIT else object

    @property
    def words(self) -> int:
        """Number of 64-bit words per serialized coefficient."""
        return max(1, -(-(self.q - 1).bit_length() // 64))


class RingElement:
    """Immutable element of R_q; ``coeffs[i]`` is the coefficient of x^i."""

    __slots__ = ("params", "coeffs")

    def __init__(self, params: RingParams, coeffs):
        arr = np.asarray(coeffs)
        if arr.shape != (params.n,):
            raise ValueError(f"expected {params.n} coefficients, got shape {arr.shape}")
        if arr.dtype != object:
            arr = arr.astype(np.int64) if params.dtype is np.int64 else arr.astype(object)
        arr = np.asarray(arr % params.q, dtype=params.dtype)
        arr.flags.writeable = False
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("RingElement is immutable")

    @classmethod
    def zero(cls, params: RingParams) -> RingElement:
        return cls(params, np.zeros(params.n, dtype=np.int64))

    @classmethod
    def constant(cls, params: RingParams, c: int) -> RingElement:
        v = np.zeros(params.n, dtype=object)
        v[0] = int(c) % params.q
        return cls(params, v)

    @classmethod
    def monomial(cls, params: RingParams, degree: int, c: int = 1) -> RingElement:
        v = np.zeros(params.n, dtype=object)
        v[degree] = int(c) % params.q
        return cls(params, v)

    def centered(self) -> np.ndarray:
        """Coefficients lifted to (-q/2, q/2]."""
        q = self.params.q
        c = self.coeffs
        return np.where(c > q // 2, c - q, c)

    def tolist(self) -> list[int]:
        return [int(c) for c in self.coeffs]

    def __eq__(self, other):
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.params == other.params and bool(np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def __repr__(self):
        head = ", ".join(str(int(c)) for c in self.coeffs[:8])
        tail = ", ..." if self.params.n > 8 else ""
        return f"RingElement(n={self.params.n}, q={self.params.q}, [{head}{tail}])"

    def __add__(self, other):
        return ring_add(self, other)

    def __sub__(self, other):
        return ring_sub(self, other)

    def __neg__(self):
        return ring_neg(self)

    def __mul__(self, other):
        if isinstance(other, RingElement):
            return ring_mul(self, other)
        return ring_scale(self, other)

    __rmul__ = __mul__


def _check(a: RingElement, b: RingElement) -> RingParams:
    if a.params != b.params:
        raise RingMismatchError(f"ring mismatch: {a.params} vs {b.params}")
    return a.params


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    p = _check(a, b)
    return RingElement(p, a.coeffs + b.coeffs)


def ring_sub(a: RingElement, b: RingElement) -> RingElement:
    p = _check(a, b)
    return RingElement(p, a.coeffs - b.coeffs)


def ring_neg(a: RingElement) -> RingElement:
    return RingElement(a.params, -a.coeffs)


def ring_scale(a: RingElement, c: int) -> RingElement:
    p = a.params
    c = int(c) % p.q
    if p.dtype is np.int64 and c.bit_length() + (p.q - 1).bit_length() < 63:
        return RingElement(p, a.coeffs * c)
    return RingElement(p, a.coeffs.astype(object) * c)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    p = _check(a, b)
    half = p.q // 2
    prod = exact_negacyclic(a.centered(), b.centered(), half, half)
    return RingElement(p, prod % p.q)


def ring_mul_schoolbook(a: RingElement, b: RingElement) -> RingElement:
    """O(n^2) reference product, kept as the oracle for :func:`ring_mul`."""
    p = _check(a, b)
    n = p.n
    out = [0] * n
    bl = b.tolist()
    for i, ai in enumerate(a.tolist()):
        if ai == 0:
            continue
        for j, bj in enumerate(bl):
            k = i + j
            if k < n:
                out[k] += ai * bj
            else:
                out[k - n] -= ai * bj
    return RingElement(p, np.array(out, dtype=object))


# ---------------------------------------------------------------------------
# sampling


def _uniform_ints(rng: np.random.Generator, q: int, size: int) -> np.ndarray:
    if q <= 1 << 62:
        return rng.integers(0, q, size=size, dtype=np.int64)
    bits = (q - 1).bit_length()
    limbs = -(-bits // 32)
    out = np.empty(size, dtype=object)
    filled = 0
    while filled < size:
        raw = rng.integers(0, 1 << 32, size=(size, limbs), dtype=np.uint64).astype(object)
        vals = raw[:, 0].copy()
        for j in range(1, limbs):
            vals = vals + (raw[:, j] << (32 * j))
        vals = vals >> (32 * limbs - bits)
        ok = vals[vals < q]
        take = min(size - filled, len(ok))
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def sample_uniform(params: RingParams, rng: np.random.Generator) -> RingElement:
    return RingElement(params, _uniform_ints(rng, params.q, params.n))


def sample_ternary(params: RingParams, rng: np.random.Generator) -> RingElement:
    return RingElement(params, rng.integers(-1, 2, size=params.n))


def binomial_k(stddev: float) -> int:
    """Number of coin pairs giving a centered binomial of the given deviation."""
    return max(1, round(2 * stddev * stddev))


def sample_noise(params: RingParams, stddev: float, rng: np.random.Generator) -> RingElement:
    """Centered binomial noise: difference of two Binomial(k, 1/2), variance k/2."""
    if stddev <= 0:
        raise ValueError("stddev must be positive")
    k = binomial_k(stddev)
    e = rng.binomial(k, 0.5, size=params.n) - rng.binomial(k, 0.5, size=params.n)
    return RingElement(params, e)


# ---------------------------------------------------------------------------
# exact negacyclic products via multi-prime NTT + CRT


@lru_cache(maxsize=None)
def _prime_pool(count: int) -> tuple[int, ...]:
    step = 1 << (_MAX_LOG_N + 1)
    primes = []
    c = ((1 << 31) - 1) // step
    while len(primes) < count:
        p = c * step + 1
        if isprime(p):
            primes.append(p)
        c -= 1
        if c <= 0:
            raise RuntimeError("ran out of NTT primes")
    return tuple(primes)


def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


class _Plan:
    def __init__(self, n: int, count: int):
        primes = _prime_pool(count)
        self.n = n
        self.primes = primes
        self.p = np.array(primes, dtype=np.int64).reshape(-1, 1)
        rev = _bitrev(n)
        zetas = np.empty((count, n), dtype=np.int64)
        izetas = np.empty((count, n), dtype=np.int64)
        n_inv = np.empty((count, 1), dtype=np.int64)
        for i, p in enumerate(primes):
            psi = pow(primitive_root(p), (p - 1) // (2 * n), p)
            powers = np.empty(n, dtype=np.int64)
            acc = 1
            for j in range(n):
                powers[j] = acc
                acc = acc * psi % p
            zetas[i] = powers[rev]
            izetas[i] = [pow(int(z), p - 2, p) for z in zetas[i]]
            n_inv[i, 0] = pow(n, p - 2, p)
        self.zetas = zetas
        self.izetas = izetas
        self.n_inv = n_inv
        # Garner constants: inv(p_j) mod p_i for j < i
        self.garner = [[pow(primes[j], -1, primes[i]) for j in range(i)] for i in range(count)]
        self._weights: list[np.ndarray] = []
        self.modulus = 1
        for p in primes:
            self.modulus *= p

    def residues(self, values: np.ndarray) -> np.ndarray:
        if values.dtype != object:
            return values.astype(np.int64)[None, :] % self.p
        # big integers: split once into 32-bit limbs (top limb signed), reduce in int64
        big = max(values.max(), -values.min(), 1)
        width = (int(big).bit_length() + 32) // 32 * 4
        buf = b"".join(int(v).to_bytes(width, "little", signed=True) for v in values)
        limbs = np.frombuffer(buf, "<u4").reshape(len(values), -1).astype(np.int64)
        limbs[:, -1] = limbs[:, -1].astype(np.uint32).view(np.int32)
        out = np.zeros((len(self.primes), len(values)), dtype=np.int64)
        for j in range(limbs.shape[1]):
            out = (out + limbs[None, :, j] * self._limb_weight(j) % self.p) % self.p
        return out

    def _limb_weight(self, j: int) -> np.ndarray:
        while len(self._weights) <= j:
            k = len(self._weights)
            self._weights.append(np.array([[pow(2, 32 * k, p)] for p in self.primes], dtype=np.int64))
        return self._weights[j]

    def forward(self, a: np.ndarray) -> np.ndarray:
        k, n = a.shape
        p = self.p[:, :, None]
        m, length = 1, n // 2
        while length >= 1:
            a = a.reshape(k, m, 2, length)
            z = self.zetas[:, m:2 * m, None]
            t = a[:, :, 1, :] * z % p
            u = a[:, :, 0, :]
            a = np.stack(((u + t) % p, (u - t) % p), axis=2)
            m, length = m * 2, length // 2
        return a.reshape(k, n)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        k, n = a.shape
        p = self.p[:, :, None]
        m, length = n // 2, 1
        while m >= 1:
            a = a.reshape(k, m, 2, length)
            z = self.izetas[:, m:2 * m, None]
            u = a[:, :, 0, :]
            v = a[:, :, 1, :]
            a = np.stack(((u + v) % p, (u - v) % p * z % p), axis=2)
            m, length = m // 2, length * 2
        return a.reshape(k, n) * self.n_inv % self.p

    def crt(self, r: np.ndarray) -> np.ndarray:
        """Signed integers in (-M/2, M/2] from residues, M = product of primes."""
        k = len(self.primes)
        digits = []
        for i in range(k):
            x = r[i]
            for j in range(i):
                x = (x - digits[j]) * self.garner[i][j] % self.primes[i]
            digits.append(x)
        # fold digit pairs into base p_i*p_(i+1) while they still fit in int64
        radix, pairs = [], []
        for i in range(0, k, 2):
            if i + 1 < k:
                pairs.append(digits[i] + self.primes[i] * digits[i + 1])
                radix.append(self.primes[i] * self.primes[i + 1])
            else:
                pairs.append(digits[i])
                radix.append(self.primes[i])
        out = pairs[-1].astype(object)
        for i in range(len(pairs) - 2, -1, -1):
            out = out * radix[i] + pairs[i].astype(object)
        half = self.modulus // 2
        return np.where(out > half, out - self.modulus, out)


@lru_cache(maxsize=None)
def plan(n: int, count: int) -> _Plan:
    return _Plan(n, count)


def primes_for(bound: int) -> int:
    """Smallest prime count whose product exceeds 2*bound + 1."""
    need = 2 * bound + 1
    count, m = 0, 1
    for p in _prime_pool(64):
        count += 1
        m *= p
        if m > need:
            return count
    raise ValueError("product bound too large for the NTT prime pool")


def exact_negacyclic(a: np.ndarray, b: np.ndarray, bound_a: int, bound_b: int) -> np.ndarray:
    """Exact integer product of a and b modulo x^n + 1.

    ``bound_a``/``bound_b`` bound the absolute values of the inputs; the
    result is returned as an object array of Python ints.
    """
    n = len(a)
    pl = plan(n, primes_for(n * int(bound_a) * int(bound_b)))
    fa = pl.forward(pl.residues(np.asarray(a)))
    fb = pl.forward(pl.residues(np.asarray(b)))
    return pl.crt(pl.inverse(fa * fb % pl.p))
