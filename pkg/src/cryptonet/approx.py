"""Low-degree polynomial replacements for activation functions.

Fits are computed on a declared compact interval and certified by measuring
the maximum deviation on a dense uniform grid.  Two fitters are provided:
interpolation at Chebyshev nodes and a discrete minimax fit (linear program
over a grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import polynomial as npoly
from scipy.optimize import linprog

from .encode import PlaintextOverflowError, round_half_away

__all__ = [
    "ActivationSpec",
    "PolyApprox",
    "QuantizedPoly",
    "KINDS",
    "DEFAULT_INTERVALS",
    "chebyshev_fit",
    "minimax_fit",
    "exact_poly",
    "sup_error_estimate",
    "quantize_approx",
    "min_degree_for",
    "approximation_table",
]

DEFAULT_GRID = 100_000

KINDS = ("sigmoid", "relu", "tanh", "square", "identity", "custom")

DEFAULT_INTERVALS = {
    "sigmoid": (-8.0, 8.0),
    "tanh": (-8.0, 8.0),
    "relu": (-1.0, 1.0),
    "square": (-4.0, 4.0),
    "identity": (-4.0, 4.0),
}

_FUNCS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": lambda x: 0.5 * (1.0 + np.tanh(0.5 * x)),
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "square": np.square,
    "identity": lambda x: np.asarray(x, dtype=float),
}

_EXACT = {"square": (0.0, 0.0, 1.0), "identity": (0.0, 1.0)}


@dataclass(frozen=True)
class ActivationSpec:
    kind: str
    interval: tuple[float, float] | None = None
    # custom-tabulated activations: sample points, linearly interpolated
    table_x: tuple[float, ...] = ()
    table_y: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.interval is None:
            if self.kind == "custom":
                if not self.table_x:
                    raise ValueError("custom activation needs a table")
                object.__setattr__(self, "interval", (min(self.table_x), max(self.table_x)))
            else:
                object.__setattr__(self, "interval", DEFAULT_INTERVALS[self.kind])
        a, b = (float(v) for v in self.interval)
        if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
            raise ValueError(f"interval must be finite with a < b, got {self.interval}")
        object.__setattr__(self, "interval", (a, b))
        if self.kind == "custom":
            if len(self.table_x) != len(self.table_y) or len(self.table_x) < 2:
                raise ValueError("custom table needs matching x/y of length >= 2")
            if any(np.diff(self.table_x) <= 0):
                raise ValueError("custom table x must be strictly increasing")

    @property
    def is_polynomial(self) -> bool:
        return self.kind in _EXACT

    def __call__(self, x):
        if self.kind == "custom":
            return np.interp(x, self.table_x, self.table_y)
        return _FUNCS[self.kind](np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PolyApprox:
    coeffs: tuple[float, ...]
    interval: tuple[float, float]
    sup_error: float = 0.0
    kind: str = "custom"

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("polynomial needs at least one coefficient")
        if self.sup_error < 0:
            raise ValueError("sup_error must be non-negative")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return npoly.polyval(x, self.coeffs)

    def derivative(self) -> PolyApprox:
        d = npoly.polyder(self.coeffs) if self.degree else [0.0]
        return PolyApprox(tuple(d), self.interval, 0.0, self.kind)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "coeffs": list(self.coeffs),
            "interval": list(self.interval),
            "sup_error": self.sup_error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PolyApprox:
        return cls(tuple(d["coeffs"]), tuple(d["interval"]), float(d.get("sup_error", 0.0)), d.get("kind", "custom"))


def _monomial(series: Chebyshev, degree: int) -> tuple[float, ...]:
    coef = series.convert(kind=Polynomial, domain=[-1, 1], window=[-1, 1]).coef
    return tuple(np.pad(coef, (0, degree + 1 - len(coef))))


def sup_error_estimate(p: PolyApprox, f: ActivationSpec, grid_points: int = DEFAULT_GRID) -> float:
    """max |f(x) - p(x)| over a uniform grid on f's interval, endpoints included."""
    if grid_points < 1000:
        raise ValueError("grid_points must be at least 1000")
    a, b = f.interval
    xs = np.linspace(a, b, grid_points)
    return float(np.max(np.abs(f(xs) - p(xs))))


def chebyshev_fit(f: ActivationSpec, degree: int, grid_points: int = DEFAULT_GRID) -> PolyApprox:
    """Interpolate f at the degree+1 Chebyshev nodes of its interval."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    a, b = f.interval
    series = Chebyshev.interpolate(f, degree, domain=[a, b])
    p = PolyApprox(_monomial(series, degree), (a, b), 0.0, f.kind)
    return PolyApprox(p.coeffs, (a, b), sup_error_estimate(p, f, grid_points), f.kind)


def minimax_fit(
    f: ActivationSpec, degree: int, fit_points: int = 4001, grid_points: int = DEFAULT_GRID
) -> PolyApprox:
    """Best uniform approximation of f on a grid, via a linear program.

    Minimizes e subject to |sum_k c_k T_k(u_j) - f(x_j)| <= e at every grid
    point, in the Chebyshev basis for conditioning.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    a, b = f.interval
    xs = np.linspace(a, b, fit_points)
    u = (2 * xs - (a + b)) / (b - a)
    fx = f(xs)
    V = cheb.chebvander(u, degree)
    ones = np.ones((fit_points, 1))
    A = np.vstack([np.hstack([V, -ones]), np.hstack([-V, -ones])])
    rhs = np.concatenate([fx, -fx])
    objective = np.zeros(degree + 2)
    objective[-1] = 1.0
    res = linprog(objective, A_ub=A, b_ub=rhs, bounds=[(None, None)] * (degree + 2), method="highs")
    if not res.success:
        raise RuntimeError(f"minimax fit failed: {res.message}")
    series = Chebyshev(res.x[:-1], domain=[a, b])
    p = PolyApprox(_monomial(series, degree), (a, b), 0.0, f.kind)
    return PolyApprox(p.coeffs, (a, b), sup_error_estimate(p, f, grid_points), f.kind)


def exact_poly(kind: str, interval: tuple[float, float] | None = None) -> PolyApprox:
    """Exact polynomial activations (square, identity) with zero error."""
    if kind not in _EXACT:
        raise ValueError(f"{kind!r} is not a polynomial activation")
    return PolyApprox(_EXACT[kind], interval or DEFAULT_INTERVALS[kind], 0.0, kind)


def min_degree_for(
    f: ActivationSpec, eps: float, max_degree: int = 16, method: str = "best"
) -> PolyApprox | None:
    """Lowest-degree fit with certified sup_error < eps, or None up to max_degree.

    ``method`` is "chebyshev", "minimax" or "best" (try both per degree).
    """
    for d in range(max_degree + 1):
        fits = []
        if method in ("chebyshev", "best"):
            fits.append(chebyshev_fit(f, d))
        if method in ("minimax", "best"):
            fits.append(minimax_fit(f, d))
        best = min(fits, key=lambda p: p.sup_error)
        if best.sup_error < eps:
            return best
    return None


def approximation_table(f: ActivationSpec, max_degree: int = 16) -> list[dict]:
    rows = []
    for d in range(max_degree + 1):
        c = chebyshev_fit(f, d)
        m = minimax_fit(f, d)
        rows.append({"degree": d, "chebyshev": c.sup_error, "minimax": m.sup_error})
    return rows


@dataclass(frozen=True)
class QuantizedPoly:
    """Integer coefficients Q_i = round(c_i * 2^coeff_scale) plus the scale plan.

    With the input at scale s_x, term i sits at scale coeff_scale + i*s_x; it is
    aligned to the output scale coeff_scale + d*s_x by the factor
    2^((d-i)*s_x), folded into ``aligned[i]``.
    """

    coeffs: tuple[int, ...]
    coeff_scale_log2: int
    input_scale_log2: int
    term_scales: tuple[int, ...]
    output_scale_log2: int
    aligned: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def real_coeffs(self) -> tuple[float, ...]:
        return tuple(c / 2.0 ** self.coeff_scale_log2 for c in self.coeffs)


def quantize_approx(p: PolyApprox, coeff_scale_log2: int, t: int, input_scale_log2: int = 0) -> QuantizedPoly:
    if coeff_scale_log2 < 0 or input_scale_log2 < 0:
        raise ValueError("scales must be non-negative")
    cs = list(p.coeffs)
    while len(cs) > 1 and cs[-1] == 0:
        cs.pop()
    q = []
    for i, c in enumerate(cs):
        v = round_half_away(c * 2.0 ** coeff_scale_log2)
        if abs(v) >= t / 2:
            raise PlaintextOverflowError(
                f"plaintext overflow: coefficient {i} ({c}) at scale 2^{coeff_scale_log2} does not fit t={t}"
            )
        q.append(v)
    d = len(q) - 1
    term_scales = tuple(coeff_scale_log2 + i * input_scale_log2 for i in range(d + 1))
    aligned = tuple(v << ((d - i) * input_scale_log2) for i, v in enumerate(q))
    return QuantizedPoly(tuple(q), coeff_scale_log2, input_scale_log2, term_scales, term_scales[-1], aligned)
