"""Gradient descent for polynomial-activation networks, plain and encrypted.

``backprop_step`` and ``train`` are full-batch gradient descent on the mean
squared error.  ``encrypted_gradient_step`` performs one fixed-point step
of a linear model entirely on ciphertexts; ``fixed_point_gradient_step`` is
the same integer computation done in the clear.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .approx import ActivationSpec, chebyshev_fit, exact_poly
from .encode import FixedPointValue, decode_real, encode_real, round_half_away
from .polynet import Layer, NotPolynomialError, PolyNetwork
from .she import (
    Ciphertext,
    EvaluationKeys,
    NoiseEstimate,
    SchemeParams,
    he_add,
    he_mul,
    he_mul_plain,
    he_sub,
)

__all__ = [
    "TrainingConfig",
    "TrainingDivergedError",
    "BudgetError",
    "init_network",
    "loss",
    "gradients",
    "backprop_step",
    "train",
    "accuracy",
    "predict",
    "approximation_trend",
    "make_blobs",
    "load_csv",
    "save_csv",
    "GradientStepPlan",
    "plan_gradient_step",
    "fixed_point_gradient_step",
    "encrypted_gradient_step",
    "encode_step_inputs",
    "decode_step_output",
    "one_hot",
]

DIVERGENCE = 1e6


class TrainingDivergedError(RuntimeError):
    pass


class BudgetError(ValueError):
    pass


@dataclass
class TrainingConfig:
    x: np.ndarray
    y: np.ndarray
    learning_rate: float = 0.05
    epochs: int = 200
    seed: int = 0
    loss: str = "L2"

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if len(self.x) < 1 or len(self.x) != len(self.y):
            raise ValueError("sample needs T >= 1 rows with matching x and y")
        if self.loss != "L2":
            raise ValueError("only the L2 loss is supported")

    @property
    def size(self) -> int:
        return len(self.x)


# ---------------------------------------------------------------------------
# networks and data


def init_network(arch: dict, seed: int = 0) -> PolyNetwork:
    """Build a network from an architecture description with U(-0.5, 0.5) weights.

    ``arch`` = {"input_dim": d, "input_intervals": [...],
                "layers": [{"units": k, "activation": "square" | null | {...}}, ...]}
    """
    rng = np.random.default_rng(seed)
    dim = int(arch["input_dim"])
    layers = []
    for spec in arch["layers"]:
        units = int(spec["units"])
        w = rng.uniform(-0.5, 0.5, size=(units, dim))
        b = rng.uniform(-0.5, 0.5, size=units)
        layers.append(Layer.from_dict({"weights": w.tolist(), "bias": b.tolist(),
                                       "activation": spec.get("activation")}))
        dim = units
    return PolyNetwork(layers, int(arch["input_dim"]), [tuple(iv) for iv in arch.get("input_intervals", [])])


def make_blobs(n: int, seed: int = 0, spread: float = 0.25, center: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Two Gaussian blobs in the plane at +-(center, center); labels 0/1."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    centers = np.where(labels[:, None] == 1, center, -center) * np.ones((n, 2))
    return centers + rng.normal(0.0, spread, size=(n, 2)), labels


def one_hot(labels, k: int = 2) -> np.ndarray:
    return np.eye(k)[np.asarray(labels, dtype=int)]


def load_csv(path, n_features: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of features followed by label columns."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if not rows:
                    continue  # header
                raise
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] <= n_features:
        raise ValueError(f"{path}: expected {n_features} feature columns plus labels")
    return data[:, :n_features], data[:, n_features:]


def save_csv(path, x, y) -> None:
    x = np.atleast_2d(x)
    y = np.asarray(y, dtype=float).reshape(len(x), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for a, b in zip(x, y):
            w.writerow([repr(float(v)) for v in a] + [repr(float(v)) for v in b])


# ---------------------------------------------------------------------------
# plaintext backprop


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act_pair(act, allow_smooth: bool):
    """(f, f') for a layer activation."""
    if act is None:
        return (lambda z: z), (lambda z: np.ones_like(z))
    if isinstance(act, ActivationSpec):
        if act.is_polynomial:
            act = exact_poly(act.kind, act.interval)
        elif allow_smooth and act.kind == "sigmoid":
            return _sigmoid, (lambda z: _sigmoid(z) * (1 - _sigmoid(z)))
        elif allow_smooth and act.kind == "tanh":
            return np.tanh, (lambda z: 1 - np.tanh(z) ** 2)
        else:
            raise NotPolynomialError(f"activation {act.kind!r} is not a polynomial")
    d = act.derivative()
    return act, d


def loss(net: PolyNetwork, x, y, allow_smooth: bool = False) -> float:
    out = _forward(net, np.atleast_2d(x), allow_smooth)[-1][1]
    y = np.asarray(y, dtype=float).reshape(out.shape)
    return float(np.mean(np.sum((out - y) ** 2, axis=1)))


def _forward(net: PolyNetwork, x, allow_smooth):
    cache = []
    h = x
    for layer in net.layers:
        f, _ = _act_pair(layer.activation, allow_smooth)
        z = h @ layer.weights.T + layer.bias
        a = f(z)
        pooled = a
        if layer.pool == "avg":
            pooled = a.reshape(len(a), layer.out_dim, layer.pool_size).mean(axis=2)
        elif layer.pool == "max":
            pooled = a.reshape(len(a), layer.out_dim, layer.pool_size).max(axis=2)
        cache.append((h, z, a))
        h = pooled
    cache.append((h, None, None))
    return [(c[0], c[1], c[2]) for c in cache[:-1]] + [(None, h)]


def gradients(net: PolyNetwork, x, y, allow_smooth: bool = False):
    """(loss, [(dW, db), ...]) for the mean over samples of the summed squared error."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cache = _forward(net, x, allow_smooth)
    out = cache[-1][1]
    y = np.asarray(y, dtype=float).reshape(out.shape)
    T = len(x)
    value = float(np.mean(np.sum((out - y) ** 2, axis=1)))
    grad = 2.0 * (out - y) / T
    grads = []
    for layer, (h, z, a) in zip(reversed(net.layers), reversed(cache[:-1])):
        if layer.pool == "avg":
            grad = np.repeat(grad, layer.pool_size, axis=1) / layer.pool_size
        elif layer.pool == "max":
            groups = a.reshape(len(a), layer.out_dim, layer.pool_size)
            mask = groups == groups.max(axis=2, keepdims=True)
            mask &= np.cumsum(mask, axis=2) == 1
            grad = (mask * grad[:, :, None]).reshape(len(a), -1)
        _, df = _act_pair(layer.activation, allow_smooth)
        dz = grad * df(z)
        grads.append((dz.T @ h, dz.sum(axis=0)))
        grad = dz @ layer.weights
    return value, grads[::-1]


def backprop_step(net: PolyNetwork, x, y, lr: float, allow_smooth: bool = False) -> PolyNetwork:
    """One full-batch gradient step w <- w - lr * dL/dw; returns a new network."""
    _, grads = gradients(net, x, y, allow_smooth)
    new = net.copy()
    for layer, (dw, db) in zip(new.layers, grads):
        layer.weights = layer.weights - lr * dw
        layer.bias = layer.bias - lr * db
    return new


def train(net: PolyNetwork, config: TrainingConfig, allow_smooth: bool = False):
    """Full-batch gradient descent; returns (network, per-epoch loss before each step)."""
    curve = []
    for epoch in range(config.epochs):
        value, grads = gradients(net, config.x, config.y, allow_smooth)
        if not math.isfinite(value) or value > DIVERGENCE:
            raise TrainingDivergedError(
                f"loss {value:.3g} at epoch {epoch} exceeds {DIVERGENCE:g}; use a smaller learning rate"
            )
        curve.append(value)
        net = net.copy()
        for layer, (dw, db) in zip(net.layers, grads):
            layer.weights = layer.weights - config.learning_rate * dw
            layer.bias = layer.bias - config.learning_rate * db
    return net, curve


def predict(net: PolyNetwork, x, allow_smooth: bool = False) -> np.ndarray:
    return _forward(net, np.atleast_2d(np.asarray(x, dtype=float)), allow_smooth)[-1][1]


def accuracy(net: PolyNetwork, x, labels, allow_smooth: bool = False) -> float:
    pred = np.argmax(predict(net, x, allow_smooth), axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def _flat(net: PolyNetwork) -> np.ndarray:
    return np.concatenate([np.r_[layer.weights.ravel(), layer.bias] for layer in net.layers])


def approximation_trend(
    arch: dict,
    config: TrainingConfig,
    degrees=(3, 5, 9),
    kind: str = "sigmoid",
    interval=(-4.0, 4.0),
) -> dict[int, float]:
    """Max weight gap between training with a degree-d fit of ``kind`` and with ``kind`` itself.

    Every hidden layer of ``arch`` gets the activation; all runs share the
    same initial weights, so the gap isolates the effect of the approximation.
    """
    def with_act(act):
        layers = [dict(spec) for spec in arch["layers"]]
        for spec in layers[:-1]:
            spec["activation"] = act
        return {**arch, "layers": layers}

    true_arch = with_act({"kind": kind, "interval": list(interval)})
    reference, _ = train(init_network(true_arch, config.seed), config, allow_smooth=True)
    gaps = {}
    for d in degrees:
        fit = chebyshev_fit(ActivationSpec(kind, tuple(interval)), d)
        net = init_network(true_arch, config.seed)
        for layer in net.layers[:-1]:
            layer.activation = fit
        trained, _ = train(net, config)
        gaps[d] = float(np.max(np.abs(_flat(trained) - _flat(reference))))
    return gaps


# ---------------------------------------------------------------------------
# one encrypted gradient step for a linear model y ~ w . x


@dataclass(frozen=True)
class GradientStepPlan:
    """Fixed-point schedule for one step of w <- w - lr * (2/T) sum_j (w.x_j - y_j) x_j.

    Weights sit at scale 2^weight_scale, features at 2^feature_scale, targets
    at the product scale, and the step multiplier round(lr*2/T * 2^lr_scale)
    at 2^lr_scale.  The updated weights come out at ``output_scale``.
    """

    params: SchemeParams
    features: int
    batch: int
    weight_scale: int
    feature_scale: int
    lr_scale: int
    step: int
    weight_bound: float
    feature_bound: float
    target_bound: float

    @property
    def target_scale(self) -> int:
        return self.weight_scale + self.feature_scale

    @property
    def align(self) -> int:
        """Power of two lifting old weights to the output scale."""
        return 1 << (2 * self.feature_scale + self.lr_scale)

    @property
    def output_scale(self) -> int:
        return self.weight_scale + 2 * self.feature_scale + self.lr_scale

    @property
    def degree(self) -> int:
        # (w.x - y) * x: degree 2 in weights-times-data, times one more feature
        return 3


def plan_gradient_step(
    params: SchemeParams,
    features: int,
    batch: int,
    learning_rate: float,
    weight_scale: int = 4,
    feature_scale: int = 3,
    lr_scale: int = 4,
    weight_bound: float = 2.0,
    feature_bound: float = 2.0,
    target_bound: float = 4.0,
) -> GradientStepPlan:
    """Fix the quantization schedule and check depth, overflow and noise up front."""
    if batch < 1 or features < 1:
        raise ValueError("need at least one feature and one sample")
    step = round_half_away(learning_rate * 2.0 / batch * 2.0 ** lr_scale)
    plan = GradientStepPlan(params, features, batch, weight_scale, feature_scale, lr_scale, step,
                            weight_bound, feature_bound, target_bound)
    from .she import ladder_depth

    depth = ladder_depth(plan.degree)
    if depth > params.max_mul_depth:
        raise BudgetError(f"depth exhausted: one gradient step needs depth {depth}, "
                          f"scheme supports {params.max_mul_depth}")
    half = params.t / 2
    wm = round_half_away(weight_bound * 2.0 ** weight_scale)
    xm = round_half_away(feature_bound * 2.0 ** feature_scale)
    ym = round_half_away(target_bound * 2.0 ** plan.target_scale)
    pred = features * wm * xm
    resid = pred + ym
    grad = batch * resid * xm
    update = wm * plan.align + abs(step) * grad
    for name, v in (("weight", wm), ("feature", xm), ("target", ym), ("prediction", pred),
                    ("residual", resid), ("gradient", grad), ("update", update), ("step", abs(step))):
        if v >= half:
            raise BudgetError(f"plaintext overflow: {name} magnitude {v} exceeds t/2={params.t // 2}")
    fresh = NoiseEstimate.fresh(params)
    pred_n = NoiseEstimate(features * fresh.mul(fresh, params).variance)
    resid_n = pred_n.add(fresh)
    grad_n = NoiseEstimate(batch * resid_n.mul(fresh, params).variance)
    upd_n = fresh.mul_plain(plan.align).add(grad_n.mul_plain(step))
    if upd_n.budget(params) <= 0:
        raise BudgetError(f"noise budget exhausted: estimated {upd_n.budget(params):.2f} bits after the step")
    return plan


def fixed_point_gradient_step(plan: GradientStepPlan, w, x, y) -> list[int]:
    """Integer reference for the encrypted step, on mantissas mod t."""
    t = plan.params.t
    w = [int(v) for v in w]
    x = [[int(v) for v in row] for row in x]
    y = [int(v) for v in y]
    grads = [0] * plan.features
    for xj, yj in zip(x, y):
        r = sum(wi * xi for wi, xi in zip(w, xj)) - yj
        for i in range(plan.features):
            grads[i] += r * xj[i]
    return [(wi * plan.align - plan.step * g) % t for wi, g in zip(w, grads)]


def encode_step_inputs(plan: GradientStepPlan, w, x, y):
    """Real weights/batch to mantissas at the plan's scales."""
    t = plan.params.t
    wm = [encode_real(float(v), plan.weight_scale, t).mantissa for v in w]
    xm = [[encode_real(float(v), plan.feature_scale, t).mantissa for v in row] for row in np.atleast_2d(x)]
    ym = [encode_real(float(v), plan.target_scale, t).mantissa for v in np.ravel(y)]
    return wm, xm, ym


def decode_step_output(plan: GradientStepPlan, mantissas) -> np.ndarray:
    t = plan.params.t
    return np.array([decode_real(FixedPointValue(int(m) % t, plan.output_scale), t) for m in mantissas])


def encrypted_gradient_step(
    plan: GradientStepPlan,
    weights: list[Ciphertext],
    x: list[list[Ciphertext]],
    y: list[Ciphertext],
    keys: EvaluationKeys,
) -> list[Ciphertext]:
    """One gradient step on encrypted weights and an encrypted batch.

    Uses only additions, multiplications and plaintext multiplications by the
    fixed-point step size; the evaluation keys are the only key material.
    """
    if len(weights) != plan.features or len(x) != plan.batch or len(y) != plan.batch:
        raise ValueError("batch or weight count does not match the plan")
    for ct in [*weights, *y, *(c for row in x for c in row)]:
        if ct.params_id != plan.params.params_id:
            raise ValueError("params mismatch: ciphertext not made for this plan")
    grads = [None] * plan.features
    for xj, yj in zip(x, y):
        pred = None
        for wi, xi in zip(weights, xj):
            term = he_mul(wi, xi, keys)
            pred = term if pred is None else he_add(pred, term)
        resid = he_sub(pred, yj)
        for i in range(plan.features):
            g = he_mul(resid, xj[i], keys)
            grads[i] = g if grads[i] is None else he_add(grads[i], g)
    return [he_sub(he_mul_plain(wi, plan.align), he_mul_plain(g, plan.step)) for wi, g in zip(weights, grads)]
