"""Ring arithmetic in Z_q[x]/(x^n + 1) against a schoolbook oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cryptonet.ring import (
    RingElement,
    RingMismatchError,
    RingParams,
    ring_add,
    ring_mul,
    ring_mul_schoolbook,
    ring_scale,
    sample_noise,
    sample_uniform,
)

SMALL = [RingParams(2, 17), RingParams(4, 97), RingParams(8, 97), RingParams(16, 97)]
BIG_Q = RingParams(16, (1 << 127) - 1)  # exercises the multi-word path


def elements(params):
    return st.lists(st.integers(0, params.q - 1), min_size=params.n, max_size=params.n).map(
        lambda c: RingElement(params, c)
    )


def oracle_mul(a, b, n, q):
    """Plain polynomial product, then fold x^n -> -1."""
    full = [0] * (2 * n)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            full[i + j] += x * y
    return [(full[i] - full[i + n]) % q for i in range(n)]


class TestParams:
    def test_rejects_bad(self):
        with pytest.raises(ValueError):
            RingParams(6, 17)
        with pytest.raises(ValueError):
            RingParams(8, 16)
        with pytest.raises(ValueError):
            RingParams(8, 1)

    def test_canonical_storage(self):
        p = RingParams(4, 17)
        e = RingElement(p, [-1, 17, 18, 5])
        assert e.tolist() == [16, 0, 1, 5]
        assert list(e.centered()) == [-1, 0, 1, 5]


class TestAdd:
    def test_example(self):
        p = RingParams(2, 17)
        assert ring_add(RingElement(p, [3, 5]), RingElement(p, [15, 14])).tolist() == [1, 2]

    @pytest.mark.parametrize("p", SMALL + [BIG_Q])
    def test_identity_and_inverse(self, p, rng):
        a = sample_uniform(p, rng)
        assert ring_add(a, RingElement.zero(p)) == a
        neg = RingElement(p, [(p.q - c) % p.q for c in a.tolist()])
        assert ring_add(a, neg) == RingElement.zero(p)

    def test_mismatch(self):
        a = RingElement.zero(RingParams(4, 17))
        b = RingElement.zero(RingParams(4, 97))
        with pytest.raises(RingMismatchError, match="ring mismatch"):
            ring_add(a, b)
        with pytest.raises(RingMismatchError):
            ring_mul(a, b)


class TestMul:
    def test_x_squared(self):
        p = RingParams(2, 17)
        x = RingElement.monomial(p, 1)
        assert ring_mul(x, x).tolist() == [16, 0]

    def test_one_plus_x_squared(self):
        p = RingParams(2, 17)
        a = RingElement(p, [1, 1])
        assert ring_mul(a, a).tolist() == [0, 2]

    @pytest.mark.parametrize("p", SMALL + [BIG_Q, RingParams(64, 18014398509404161)])
    def test_x_to_n_is_minus_one(self, p):
        top = RingElement.monomial(p, p.n - 1)
        x = RingElement.monomial(p, 1)
        assert ring_mul(top, x) == RingElement.constant(p, -1)

    def test_schoolbook_is_oracle(self, rng):
        p = RingParams(8, 97)
        for _ in range(50):
            a, b = sample_uniform(p, rng), sample_uniform(p, rng)
            assert ring_mul_schoolbook(a, b).tolist() == oracle_mul(a.tolist(), b.tolist(), p.n, p.q)

    @pytest.mark.parametrize("n", [4, 8, 16])
    def test_fast_path_matches_schoolbook(self, n, rng):
        p = RingParams(n, 97)
        for _ in range(1000):
            a, b = sample_uniform(p, rng), sample_uniform(p, rng)
            assert ring_mul(a, b) == ring_mul_schoolbook(a, b)

    @pytest.mark.parametrize(
        "p",
        [RingParams(32, 18014398509404161), RingParams(16, 21267647932558653966460912964485189633), BIG_Q],
    )
    def test_fast_path_large_moduli(self, p, rng):
        for _ in range(20):
            a, b = sample_uniform(p, rng), sample_uniform(p, rng)
            assert ring_mul(a, b) == ring_mul_schoolbook(a, b)

    def test_demo_size(self, rng):
        p = RingParams(2048, 18014398509404161)
        a, b = sample_uniform(p, rng), sample_noise(p, 3.2, rng)
        got = ring_mul(a, b)
        # spot-check three output coefficients against the convolution sum
        ac, bc = a.tolist(), [int(v) for v in b.centered()]
        for k in (0, 1, 2047):
            s = sum(ac[i] * bc[k - i] for i in range(k + 1)) - sum(ac[i] * bc[k - i + 2048] for i in range(k + 1, 2048))
            assert got.tolist()[k] == s % p.q


class TestScale:
    @pytest.mark.parametrize("p", SMALL)
    def test_examples(self, p, rng):
        a = sample_uniform(p, rng)
        assert ring_scale(a, 1) == a
        assert ring_scale(a, 0) == RingElement.zero(p)
        assert ring_scale(a, p.q) == RingElement.zero(p)
        assert ring_scale(a, 3).tolist() == [(3 * c) % p.q for c in a.tolist()]


class TestLaws:
    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_commutative_associative_distributive(self, data):
        p = data.draw(st.sampled_from(SMALL + [BIG_Q]))
        a, b, c = (data.draw(elements(p)) for _ in range(3))
        assert a + b == b + a
        assert (a + b) + c == a + (b + c)
        assert a * b == b * a
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c


class TestSampling:
    def test_uniform_deterministic_and_in_range(self):
        p = RingParams(64, 97)
        a = sample_uniform(p, np.random.default_rng(3))
        b = sample_uniform(p, np.random.default_rng(3))
        assert a == b
        assert all(0 <= c < 97 for c in a.tolist())

    @pytest.mark.parametrize("q", [18014398509404161, 21267647932558653966460912964485189633])
    def test_uniform_mean(self, q):
        # 10^4 coefficients; the standard error of the mean is q/sqrt(12e4) ~ 0.29% of q
        p = RingParams(1024, q)
        rng = np.random.default_rng(5)
        vals = [c for _ in range(10) for c in sample_uniform(p, rng).tolist()]
        mean = sum(vals) / len(vals)
        assert abs(mean - (q - 1) / 2) < 0.01 * (q - 1) / 2

    def test_noise_deterministic(self):
        p = RingParams(256, 97)
        assert sample_noise(p, 3.2, np.random.default_rng(1)) == sample_noise(p, 3.2, np.random.default_rng(1))

    def test_noise_statistics(self):
        p = RingParams(4096, 18014398509404161)
        rng = np.random.default_rng(9)
        draws = np.concatenate([sample_noise(p, 3.2, rng).centered().astype(float) for _ in range(25)])
        assert draws.size >= 10**5
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean()) < 3 * se
        assert abs(draws.std() - 3.2) < 0.1
        assert np.max(np.abs(draws)) <= 6 * 3.2

    def test_noise_rejects_nonpositive(self, rng):
        with pytest.raises(ValueError):
            sample_noise(RingParams(4, 97), 0.0, rng)
