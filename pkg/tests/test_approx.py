"""Polynomial activation fits and their certified errors."""

import numpy as np
import pytest

from cryptonet.approx import (
    DEFAULT_INTERVALS,
    ActivationSpec,
    PolyApprox,
    chebyshev_fit,
    exact_poly,
    min_degree_for,
    minimax_fit,
    quantize_approx,
    sup_error_estimate,
)
from cryptonet.encode import PlaintextOverflowError


class PolyTarget:
    """Polynomial target with the ActivationSpec call interface."""

    kind = "custom"

    def __init__(self, coeffs, interval=(-1.0, 1.0)):
        self.coeffs = coeffs
        self.interval = interval

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)


# certified sup error of the degree-3 Chebyshev sigmoid fit on [-4, 4],
# measured on a 10^5-point grid and frozen
SIGMOID_D3 = 0.03548192834972519


class TestChebyshev:
    def test_square(self):
        p = chebyshev_fit(PolyTarget([0, 0, 1]), 2)
        np.testing.assert_allclose(p.coeffs, [0, 0, 1], atol=1e-12)
        assert p.sup_error <= 1e-12

    @pytest.mark.parametrize("d", [0, 3, 7])
    def test_constant(self, d):
        p = chebyshev_fit(PolyTarget([0.75]), d)
        np.testing.assert_allclose(p.coeffs, [0.75] + [0] * d, atol=1e-12)
        assert p.sup_error <= 1e-12

    @pytest.mark.parametrize("d", range(1, 9))
    def test_reproduces_polynomials(self, d):
        rng = np.random.default_rng(d)
        for deg in range(d + 1):
            target = PolyTarget(rng.uniform(-1, 1, deg + 1), (-2.0, 3.0))
            assert chebyshev_fit(target, d).sup_error < 1e-10

    def test_sigmoid_fixture(self):
        p = chebyshev_fit(ActivationSpec("sigmoid", (-4, 4)), 3)
        assert p.degree == 3 and len(p.coeffs) == 4
        assert p.sup_error == pytest.approx(SIGMOID_D3, rel=1e-9)

    def test_sigmoid_improves_with_degree(self):
        f = ActivationSpec("sigmoid", (-4, 4))
        assert chebyshev_fit(f, 9).sup_error < chebyshev_fit(f, 3).sup_error


class TestSupError:
    def test_exact_is_zero(self):
        assert sup_error_estimate(exact_poly("square"), ActivationSpec("square")) == 0.0

    def test_grid_refinement_monotone(self):
        f = ActivationSpec("tanh")
        p = chebyshev_fit(f, 5)
        # a uniform grid of 2k-1 points contains the k-point grid
        coarse = sup_error_estimate(p, f, 1000)
        fine = sup_error_estimate(p, f, 1999)
        assert fine >= coarse - 1e-15

    def test_minimum_grid(self):
        with pytest.raises(ValueError):
            sup_error_estimate(exact_poly("square"), ActivationSpec("square"), 999)


class TestMinimax:
    def test_not_worse_than_chebyshev(self):
        f = ActivationSpec("relu")
        for d in (2, 4, 6):
            assert minimax_fit(f, d).sup_error <= chebyshev_fit(f, d).sup_error + 1e-4

    def test_equioscillation_level(self):
        # best degree-1 fit to |x| on [-1, 1] is the constant 1/2 with error 1/2
        f = ActivationSpec("custom", table_x=(-1.0, 0.0, 1.0), table_y=(1.0, 0.0, 1.0))
        p = minimax_fit(f, 1)
        assert p.sup_error == pytest.approx(0.5, abs=1e-6)


class TestLemmaWitness:
    @pytest.mark.parametrize("kind", ["sigmoid", "tanh", "relu"])
    @pytest.mark.parametrize("eps", [0.2, 0.1])
    def test_degree_exists(self, kind, eps):
        p = min_degree_for(ActivationSpec(kind), eps, 16)
        assert p is not None and p.degree <= 16 and p.sup_error < eps

    @pytest.mark.parametrize("kind", ["square", "identity"])
    def test_exact_kinds(self, kind):
        assert exact_poly(kind).sup_error == 0.0
        with pytest.raises(ValueError):
            exact_poly("sigmoid")


class TestQuantize:
    def test_identity(self):
        q = quantize_approx(exact_poly("identity"), 8, 1 << 16)
        assert q.coeffs == (0, 256)

    def test_zero(self):
        q = quantize_approx(PolyApprox((0.0, 0.0, 0.0), (-1, 1)), 8, 1 << 16)
        assert all(c == 0 for c in q.coeffs)

    def test_overflow(self):
        with pytest.raises(PlaintextOverflowError):
            quantize_approx(PolyApprox((1000.0,), (-1, 1)), 8, 1 << 16)

    def test_error_bound(self):
        f = ActivationSpec("sigmoid", (-4, 4))
        p = chebyshev_fit(f, 5)
        s = 10
        q = quantize_approx(p, s, 1 << 30)
        xs = np.linspace(-4, 4, 100)
        qc = np.array(q.coeffs, dtype=float) / 2.0**s
        qc = np.pad(qc, (0, len(p.coeffs) - len(qc)))
        err = np.abs(np.polynomial.polynomial.polyval(xs, qc) - p(xs))
        bound = sum(np.abs(xs) ** i for i in range(len(p.coeffs))) * 2.0 ** (-s - 1)
        assert np.all(err <= bound + 1e-12)

    def test_scale_plan(self):
        p = PolyApprox((0.5, 0.25, 0.125), (-1, 1))
        q = quantize_approx(p, 3, 1 << 16, input_scale_log2=2)
        assert q.coeffs == (4, 2, 1)
        assert q.term_scales == (3, 5, 7)
        assert q.output_scale_log2 == 7
        assert q.aligned == (4 << 4, 2 << 2, 1)


class TestSerialization:
    def test_round_trip(self):
        p = chebyshev_fit(ActivationSpec("tanh"), 7)
        assert PolyApprox.from_dict(p.to_dict()) == p

    def test_interval_validation(self):
        with pytest.raises(ValueError):
            ActivationSpec("sigmoid", (1.0, -1.0))
        with pytest.raises(ValueError):
            ActivationSpec("sigmoid", (0.0, float("inf")))
        assert ActivationSpec("relu").interval == DEFAULT_INTERVALS["relu"]
