"""Shallow polynomial networks and their compilation to arithmetic circuits.

A compiled circuit is a DAG over four operations (ciphertext add and multiply,
plaintext add and multiply) with fixed-point constants.  Every wire carries
its scale, an integer interval bound, a real-valued error bound against the
unquantized polynomial network, its multiplicative depth and a noise
estimate, so a circuit can be checked against scheme parameters before any
ciphertext is touched.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .approx import ActivationSpec, PolyApprox, chebyshev_fit, exact_poly, minimax_fit, quantize_approx
from .encode import round_half_away
from .she import NoiseEstimate, ParameterError, SchemeParams

__all__ = [
    "Layer",
    "PolyNetwork",
    "CompileConfig",
    "Node",
    "CompiledCircuit",
    "CompileError",
    "NotPolynomialError",
    "BudgetReport",
    "total_degree",
    "grad_degree_bound",
    "compile_network",
    "validate_budget",
    "dag_degree",
    "CIRCUIT_VERSION",
]

CIRCUIT_VERSION = 1
SHALLOW_LIMIT = 3


class CompileError(ValueError):
    def __init__(self, message: str, report: BudgetReport | None = None):
        super().__init__(message)
        self.report = report


class NotPolynomialError(ValueError):
    pass


# ---------------------------------------------------------------------------
# networks


@dataclass
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: PolyApprox | ActivationSpec | None = None
    pool: str = "none"
    pool_size: int = 1

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.bias = np.asarray(self.bias, dtype=float).reshape(-1)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(f"bias length {self.bias.shape[0]} != {self.weights.shape[0]} units")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("weights and bias must be finite")
        if self.pool not in ("none", "avg", "max"):
            raise ValueError(f"unknown pooling {self.pool!r}")
        if self.pool != "none" and (self.pool_size < 1 or self.units % self.pool_size):
            raise ValueError(f"pool_size {self.pool_size} must divide {self.units} units")

    @property
    def units(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.units // self.pool_size if self.pool != "none" else self.units

    def activation_degree(self) -> int:
        act = self.activation
        if act is None:
            return 1
        if isinstance(act, PolyApprox):
            nz = [i for i, c in enumerate(act.coeffs) if c != 0]
            return max([1, *nz])
        if act.kind == "identity":
            return 1
        if act.kind == "square":
            return 2
        raise NotPolynomialError(f"activation {act.kind!r} is not a polynomial: compile approximation first")

    def to_dict(self) -> dict:
        act = self.activation
        if act is None:
            a = None
        elif isinstance(act, PolyApprox):
            a = act.to_dict()
        else:
            a = {"kind": act.kind, "interval": list(act.interval)}
        d = {"weights": self.weights.tolist(), "bias": self.bias.tolist(), "activation": a}
        if self.pool != "none":
            d["pool"] = {"kind": self.pool, "size": self.pool_size}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Layer:
        pool = d.get("pool") or {"kind": "none", "size": 1}
        return cls(np.array(d["weights"]), np.array(d["bias"]), _activation_from(d.get("activation")),
                   pool["kind"], int(pool.get("size", 1)))


def _activation_from(a):
    if a is None:
        return None
    if isinstance(a, str):
        a = {"kind": a}
    kind = a["kind"]
    interval = tuple(a["interval"]) if a.get("interval") else None
    if "coeffs" in a:
        return PolyApprox.from_dict(a)
    if kind in ("square", "identity"):
        return exact_poly(kind, interval)
    spec = ActivationSpec(kind, interval, tuple(a.get("table_x", ())), tuple(a.get("table_y", ())))
    if "degree" in a:
        fit = minimax_fit if a.get("method") == "minimax" else chebyshev_fit
        return fit(spec, int(a["degree"]))
    return spec


@dataclass
class PolyNetwork:
    layers: list[Layer]
    input_dim: int
    input_intervals: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.input_intervals:
            self.input_intervals = [(-1.0, 1.0)] * self.input_dim
        self.input_intervals = [(float(a), float(b)) for a, b in self.input_intervals]
        if len(self.input_intervals) != self.input_dim:
            raise ValueError("one input interval per feature is required")
        for a, b in self.input_intervals:
            if not a <= b:
                raise ValueError(f"bad input interval ({a}, {b})")
        dim = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.in_dim != dim:
                raise ValueError(f"layer {i} expects {layer.in_dim} inputs, previous layer gives {dim}")
            dim = layer.out_dim
        if len(self.layers) > SHALLOW_LIMIT:
            warnings.warn(
                f"{len(self.layers)} layers: degree grows as the product of per-layer degrees; "
                "prefer 1-2 hidden layers",
                stacklevel=2,
            )

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else self.input_dim

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "input_intervals": [list(iv) for iv in self.input_intervals],
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> PolyNetwork:
        return cls([Layer.from_dict(x) for x in d["layers"]], int(d["input_dim"]),
                   [tuple(iv) for iv in d.get("input_intervals", [])])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> PolyNetwork:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def copy(self) -> PolyNetwork:
        return PolyNetwork.from_dict(self.to_dict())


def total_degree(net: PolyNetwork) -> int:
    """Degree of the network as a polynomial in its inputs: per-layer degrees multiply."""
    deg = 1
    for layer in net.layers:
        deg *= layer.activation_degree()
    return deg


def grad_degree_bound(net: PolyNetwork, loss: str = "L2") -> int:
    """Conservative degree bound d^(2l) for the L2-loss gradient.

    d is the largest activation degree and l the number of layers whose
    activation is non-linear; affine layers do not raise the degree.
    """
    if loss != "L2":
        raise ValueError("only the L2 loss is supported")
    degrees = [layer.activation_degree() for layer in net.layers]
    nonlinear = [d for d in degrees if d > 1]
    if not nonlinear:
        return 1
    return max(nonlinear) ** (2 * len(nonlinear))


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class Node:
    op: str  # input | const | add | mul | add_plain | mul_plain
    args: tuple[int, ...] = ()
    const: int | None = None
    scale: int = 0
    lo: int = 0
    hi: int = 0
    depth: int = 0
    real_lo: float = 0.0
    real_hi: float = 0.0
    err: float = 0.0
    label: str = ""
    input_index: int | None = None

    @property
    def bound(self) -> int:
        return max(abs(self.lo), abs(self.hi))

    @property
    def real_abs(self) -> float:
        return max(abs(self.real_lo), abs(self.real_hi))

    def to_dict(self) -> dict:
        d = {"op": self.op, "args": list(self.args), "scale": self.scale, "lo": self.lo, "hi": self.hi,
             "depth": self.depth, "real": [self.real_lo, self.real_hi], "err": self.err, "label": self.label}
        if self.const is not None:
            d["const"] = self.const
        if self.input_index is not None:
            d["input"] = self.input_index
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Node:
        return cls(d["op"], tuple(d["args"]), d.get("const"), d["scale"], d["lo"], d["hi"], d["depth"],
                   d["real"][0], d["real"][1], d["err"], d.get("label", ""), d.get("input"))


@dataclass(frozen=True)
class CompileConfig:
    input_scale: int = 4
    weight_scale: int | tuple[int, ...] = 4
    act_scale: int | tuple[int, ...] | None = None
    pool_scale: int = 4
    encrypt_constants: bool = False
    auto_raise_t: bool = True

    def per_layer(self, value, i: int):
        if isinstance(value, (tuple, list)):
            return value[i]
        return value

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("input_scale", "weight_scale", "act_scale", "pool_scale",
                                           "encrypt_constants", "auto_raise_t")}
        for k in ("weight_scale", "act_scale"):
            if isinstance(d[k], tuple):
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CompileConfig:
        d = dict(d)
        for k in ("weight_scale", "act_scale"):
            if isinstance(d.get(k), list):
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class CompiledCircuit:
    params: SchemeParams
    input_dim: int
    input_scale: int
    input_intervals: tuple[tuple[float, float], ...]
    nodes: tuple[Node, ...]
    outputs: tuple[int, ...]
    total_degree: int
    config: CompileConfig = CompileConfig()

    @property
    def mul_depth(self) -> int:
        return max((n.depth for n in self.nodes), default=0)

    @property
    def output_scales(self) -> tuple[int, ...]:
        return tuple(self.nodes[i].scale for i in self.outputs)

    @property
    def quant_bound(self) -> tuple[float, ...]:
        """Per-output bound on |decoded circuit output - polynomial network output|."""
        return tuple(self.nodes[i].err for i in self.outputs)

    def counts(self) -> dict:
        out: dict[str, int] = {}
        for n in self.nodes:
            out[n.op] = out.get(n.op, 0) + 1
        return out

    def evaluate(self, inputs, ops):
        """Run the DAG with an operation backend; returns the output values."""
        vals = []
        for node in self.nodes:
            op = node.op
            if op == "input":
                v = ops.input(inputs[node.input_index])
            elif op == "const":
                v = ops.const(node.const)
            elif op == "add":
                v = ops.add(vals[node.args[0]], vals[node.args[1]])
            elif op == "mul":
                v = ops.mul(vals[node.args[0]], vals[node.args[1]])
            elif op == "add_plain":
                v = ops.add_plain(vals[node.args[0]], node.const)
            elif op == "mul_plain":
                v = ops.mul_plain(vals[node.args[0]], node.const)
            else:
                raise ValueError(f"unknown op {op!r}")
            vals.append(v)
        return [vals[i] for i in self.outputs]

    def evaluate_integers(self, mantissas) -> list[int]:
        """Plaintext-integer evaluation mod t (the exact semantics of the encrypted path)."""
        return self.evaluate(list(mantissas), _IntegerOps(self.params.t))

    def noise_estimates(self, params: SchemeParams | None = None) -> list[NoiseEstimate]:
        params = params or self.params
        est: list[NoiseEstimate] = []
        for node in self.nodes:
            if node.op == "input":
                e = NoiseEstimate.fresh(params)
            elif node.op == "const":
                e = NoiseEstimate.exact()
            elif node.op == "add":
                e = est[node.args[0]].add(est[node.args[1]])
            elif node.op == "mul":
                e = est[node.args[0]].mul(est[node.args[1]], params)
            elif node.op == "add_plain":
                e = est[node.args[0]].add_plain()
            else:
                e = est[node.args[0]].mul_plain(node.const)
            est.append(e)
        return est

    def to_dict(self) -> dict:
        return {
            "format": "cryptonet-circuit",
            "version": CIRCUIT_VERSION,
            "params": self.params.to_dict(),
            "input_dim": self.input_dim,
            "input_scale": self.input_scale,
            "input_intervals": [list(iv) for iv in self.input_intervals],
            "nodes": [n.to_dict() for n in self.nodes],
            "outputs": list(self.outputs),
            "output_scales": list(self.output_scales),
            "total_degree": self.total_degree,
            "mul_depth": self.mul_depth,
            "quant_bound": list(self.quant_bound),
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CompiledCircuit:
        if d.get("format") != "cryptonet-circuit":
            raise ValueError("not a circuit file")
        if d.get("version") != CIRCUIT_VERSION:
            raise ValueError(f"unsupported circuit version {d.get('version')}")
        return cls(
            SchemeParams.from_dict(d["params"]),
            int(d["input_dim"]),
            int(d["input_scale"]),
            tuple(tuple(iv) for iv in d["input_intervals"]),
            tuple(Node.from_dict(n) for n in d["nodes"]),
            tuple(d["outputs"]),
            int(d["total_degree"]),
            CompileConfig.from_dict(d.get("config", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> CompiledCircuit:
        return cls.from_dict(json.loads(Path(path).read_text()))


class _IntegerOps:
    def __init__(self, t: int):
        self.t = t

    def input(self, m):
        return int(m) % self.t

    def const(self, c):
        return c % self.t

    def add(self, a, b):
        return (a + b) % self.t

    def mul(self, a, b):
        return a * b % self.t

    def add_plain(self, a, c):
        return (a + c) % self.t

    def mul_plain(self, a, c):
        return a * c % self.t


def dag_degree(circuit: CompiledCircuit) -> int:
    """Symbolic degree of the circuit outputs, by propagation over the DAG."""
    deg: list[int] = []
    for node in circuit.nodes:
        if node.op == "input":
            d = 1
        elif node.op == "const":
            d = 0
        elif node.op == "add":
            d = max(deg[node.args[0]], deg[node.args[1]])
        elif node.op == "mul":
            d = deg[node.args[0]] + deg[node.args[1]]
        else:
            d = deg[node.args[0]]
        deg.append(d)
    return max((deg[i] for i in circuit.outputs), default=0)


# ---------------------------------------------------------------------------
# compilation


class _Builder:
    def __init__(self, encrypt_constants: bool):
        self.nodes: list[Node] = []
        self.encrypt_constants = encrypt_constants

    def _push(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def input(self, index: int, interval, scale: int) -> int:
        a, b = interval
        lo, hi = round_half_away(a * 2.0 ** scale), round_half_away(b * 2.0 ** scale)
        return self._push(Node("input", (), None, scale, lo, hi, 0, a, b, 2.0 ** (-scale - 1),
                               f"x{index}", index))

    def _const(self, c: int, scale: int, ideal: float, label: str) -> int:
        return self._push(Node("const", (), c, scale, c, c, 0, ideal, ideal,
                               abs(ideal - c / 2.0 ** scale), label))

    def mul_plain(self, x: int, c: int, c_scale: int, ideal: float, label: str = "") -> int:
        if c == 1 and c_scale == 0 and ideal == 1.0:
            return x
        if self.encrypt_constants:
            return self.mul(x, self._const(c, c_scale, ideal, label + ".k"), label)
        n = self.nodes[x]
        chat = c / 2.0 ** c_scale
        lo, hi = sorted((c * n.lo, c * n.hi))
        rlo, rhi = sorted((ideal * n.real_lo, ideal * n.real_hi))
        err = abs(chat) * n.err + abs(chat - ideal) * n.real_abs
        return self._push(Node("mul_plain", (x,), c, n.scale + c_scale, lo, hi, n.depth, rlo, rhi, err, label))

    def add_plain(self, x: int, c: int, ideal: float, label: str = "") -> int:
        n = self.nodes[x]
        if self.encrypt_constants:
            return self.add(x, self._const(c, n.scale, ideal, label + ".k"), label)
        chat = c / 2.0 ** n.scale
        return self._push(Node("add_plain", (x,), c, n.scale, n.lo + c, n.hi + c, n.depth,
                               n.real_lo + ideal, n.real_hi + ideal, n.err + abs(chat - ideal), label))

    def align(self, x: int, scale: int) -> int:
        s = self.nodes[x].scale
        if s == scale:
            return x
        if s > scale:
            raise CompileError(f"cannot lower the scale of wire {x} from 2^{s} to 2^{scale}")
        k = scale - s
        return self.mul_plain(x, 1 << k, k, 1.0, self.nodes[x].label + ".align")

    def add(self, x: int, y: int, label: str = "") -> int:
        s = max(self.nodes[x].scale, self.nodes[y].scale)
        x, y = self.align(x, s), self.align(y, s)
        a, b = self.nodes[x], self.nodes[y]
        return self._push(Node("add", (x, y), None, s, a.lo + b.lo, a.hi + b.hi, max(a.depth, b.depth),
                               a.real_lo + b.real_lo, a.real_hi + b.real_hi, a.err + b.err, label))

    def mul(self, x: int, y: int, label: str = "") -> int:
        a, b = self.nodes[x], self.nodes[y]
        if x == y:
            lo, hi = _square_interval(a.lo, a.hi)
            rlo, rhi = _square_interval(a.real_lo, a.real_hi)
        else:
            lo, hi = _product_interval(a.lo, a.hi, b.lo, b.hi)
            rlo, rhi = _product_interval(a.real_lo, a.real_hi, b.real_lo, b.real_hi)
        err = a.real_abs * b.err + b.real_abs * a.err + a.err * b.err
        return self._push(Node("mul", (x, y), None, a.scale + b.scale, lo, hi, max(a.depth, b.depth) + 1,
                               rlo, rhi, err, label))

    def power(self, x: int, k: int, memo: dict) -> int:
        if k in memo:
            return memo[k]
        hi = 1 << (k.bit_length() - 1)
        if hi == k:
            h = self.power(x, k // 2, memo)
            out = self.mul(h, h, f"{self.nodes[x].label}^{k}")
        else:
            out = self.mul(self.power(x, hi, memo), self.power(x, k - hi, memo), f"{self.nodes[x].label}^{k}")
        memo[k] = out
        return out


def _square_interval(lo, hi):
    if lo <= 0 <= hi:
        return 0 * lo, max(lo * lo, hi * hi)
    return min(lo * lo, hi * hi), max(lo * lo, hi * hi)


def _product_interval(a, b, c, d):
    p = (a * c, a * d, b * c, b * d)
    return min(p), max(p)


def _poly_act_scale(act: PolyApprox, configured) -> int:
    if configured is not None:
        return configured
    return 0 if all(float(c).is_integer() for c in act.coeffs) else 8


def _build(net: PolyNetwork, params: SchemeParams, config: CompileConfig) -> CompiledCircuit:
    if any(layer.pool == "max" for layer in net.layers):
        raise CompileError("max pooling is not a polynomial operation; use average pooling")
    degree = total_degree(net)
    b = _Builder(config.encrypt_constants)
    s_in = config.input_scale
    wires = [b.input(i, iv, s_in) for i, iv in enumerate(net.input_intervals)]
    for li, layer in enumerate(net.layers):
        s_w = config.per_layer(config.weight_scale, li)
        scale = max(b.nodes[w].scale for w in wires)
        wires = [b.align(w, scale) for w in wires]
        wq = [[round_half_away(v * 2.0 ** s_w) for v in row] for row in layer.weights]
        pre = []
        for j in range(layer.units):
            acc = None
            for i, w in enumerate(wires):
                term = b.mul_plain(w, wq[j][i], s_w, float(layer.weights[j, i]), f"L{li}.u{j}.w{i}")
                acc = term if acc is None else b.add(acc, term, f"L{li}.u{j}.sum")
            bias = float(layer.bias[j])
            acc = b.add_plain(acc, round_half_away(bias * 2.0 ** (scale + s_w)), bias, f"L{li}.u{j}.pre")
            pre.append(acc)
        act = layer.activation
        if isinstance(act, ActivationSpec):
            if not act.is_polynomial:
                raise NotPolynomialError(
                    f"layer {li}: activation {act.kind!r} is not a polynomial: compile approximation first"
                )
            act = exact_poly(act.kind, act.interval)
        if act is None or (act.degree <= 1 and act.coeffs == (0.0, 1.0)):
            post = pre
        else:
            if act.kind not in ("square", "identity"):
                for j, w in enumerate(pre):
                    n = b.nodes[w]
                    a0, a1 = act.interval
                    if n.real_lo < a0 or n.real_hi > a1:
                        raise CompileError(
                            f"layer {li} unit {j}: pre-activation range [{n.real_lo:.4g}, {n.real_hi:.4g}] "
                            f"exceeds the {act.kind} approximation interval [{a0}, {a1}]"
                        )
            s_a = _poly_act_scale(act, config.per_layer(config.act_scale, li))
            post = []
            for j, w in enumerate(pre):
                s_z = b.nodes[w].scale
                qp = quantize_approx(act, s_a, params.t, s_z)
                memo = {1: w}
                acc = None
                for k in range(1, qp.degree + 1):
                    if k < qp.degree and qp.aligned[k] == 0 and act.coeffs[k] == 0:
                        continue
                    term = b.mul_plain(b.power(w, k, memo), qp.aligned[k], s_a + (qp.degree - k) * s_z,
                                       act.coeffs[k], f"L{li}.u{j}.c{k}")
                    acc = term if acc is None else b.add(acc, term, f"L{li}.u{j}.act")
                if qp.aligned[0] or act.coeffs[0]:
                    acc = b.add_plain(acc, qp.aligned[0], act.coeffs[0], f"L{li}.u{j}.act")
                post.append(acc)
        if layer.pool == "avg":
            s_p = config.pool_scale
            pooled = []
            k = layer.pool_size
            for g in range(layer.out_dim):
                acc = post[g * k]
                for w in post[g * k + 1:(g + 1) * k]:
                    acc = b.add(acc, w, f"L{li}.pool{g}")
                pooled.append(b.mul_plain(acc, round_half_away(2.0 ** s_p / k), s_p, 1.0 / k, f"L{li}.pool{g}"))
            post = pooled
        wires = post
    return CompiledCircuit(params, net.input_dim, s_in, tuple(net.input_intervals), tuple(b.nodes),
                           tuple(wires), degree, config)


# ---------------------------------------------------------------------------
# budget validation


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class BudgetReport:
    checks: tuple[Check, ...]
    output_budgets: tuple[float, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        lines = [f"budget validation: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: margin {c.margin:.2f} ({c.detail})")
        return "\n".join(lines)


def validate_budget(circuit: CompiledCircuit, scheme: SchemeParams | None = None) -> BudgetReport:
    """Check (a) depth, (b) plaintext overflow and (c) estimated noise budget."""
    params = scheme or circuit.params
    t, half = params.t, params.t / 2
    depth = circuit.mul_depth
    depth_check = Check("depth", depth <= params.max_mul_depth, params.max_mul_depth - depth,
                        f"mul_depth {depth} vs max_mul_depth {params.max_mul_depth}")

    worst, worst_node = 0, None
    for i, node in enumerate(circuit.nodes):
        for v in (node.bound, abs(node.const) if node.const is not None else 0):
            if v > worst:
                worst, worst_node = v, i
    if worst_node is None:
        overflow = Check("overflow", True, math.log2(half), f"no wires; t={t}")
    else:
        node = circuit.nodes[worst_node]
        margin = math.log2(half / worst)
        overflow = Check("overflow", worst < half, margin,
                         f"largest magnitude {worst} on wire {worst_node} ({node.label}, {node.op}) vs t/2={t // 2}")

    if circuit.outputs:
        est = circuit.noise_estimates(params)
        budgets = tuple(est[i].budget(params) for i in circuit.outputs)
        low = min(range(len(budgets)), key=budgets.__getitem__)
        noise = Check("noise", budgets[low] > 0, budgets[low],
                      f"lowest estimated output budget {budgets[low]:.2f} bits on output {low}")
    else:
        budgets = ()
        full = NoiseEstimate.exact().budget(params)
        noise = Check("noise", True, full, "no outputs")
    return BudgetReport((depth_check, overflow, noise), budgets)


def compile_network(net: PolyNetwork, scheme: SchemeParams, config: CompileConfig | None = None) -> CompiledCircuit:
    """Compile a polynomial network into a validated circuit.

    When only the overflow check fails and ``config.auto_raise_t`` is set, the
    plaintext modulus is doubled until the circuit fits or the scheme can no
    longer support the depth; the returned circuit carries the parameters it
    was validated against.
    """
    config = config or CompileConfig()
    params = scheme
    circuit = _build(net, params, config)
    report = validate_budget(circuit, params)
    while not report.passed and config.auto_raise_t and [c.name for c in report.failures()] == ["overflow"]:
        try:
            bigger = replace(params, t=params.t * 2)
        except ParameterError:
            break
        candidate = _build(net, bigger, config)
        cand_report = validate_budget(candidate, bigger)
        if cand_report["noise"].passed is False or cand_report["depth"].passed is False:
            break
        params, circuit, report = bigger, candidate, cand_report
    if not report.passed:
        raise CompileError("circuit does not fit the scheme parameters:\n" + str(report), report)
    return circuit
