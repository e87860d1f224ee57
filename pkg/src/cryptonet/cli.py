"""Command-line entry points: ``cryptonet <subcommand> ...``.

Exit status is 0 on success, 1 when a validation check fails (for
example a budget check) and 2 on I/O or protocol failures.  Every randomized step takes ``--seed``.

Dataset CSV format: one row per sample, the feature columns first and the
label columns after them.  A single integer label column is one-hot encoded
to the network's output width.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import wire
from .approx import DEFAULT_INTERVALS, KINDS, ActivationSpec, approximation_table
from .encode import FixedPointValue, decode_real, encode_real
from .infer import decode_outputs, encode_inputs
from .polynet import CompileConfig, CompiledCircuit, CompileError, PolyNetwork, compile_network
from .ring import RingParams
from .she import ParameterError, SchemeParams, decrypt, encrypt, keygen, modulus_for
from .train import TrainingConfig, TrainingDivergedError, accuracy, init_network, load_csv, one_hot, train

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Invalid(Exception):
    """Validation failure reported with exit status 1."""


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_params(path) -> SchemeParams:
    """Scheme parameters from a params file or from a compiled circuit file."""
    d = _read_json(path)
    if d.get("format") == "cryptonet-circuit":
        return SchemeParams.from_dict(d["params"])
    return SchemeParams.from_dict(d)


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


# ---------------------------------------------------------------------------
# subcommands


def cmd_params_gen(args) -> int:
    q = int(args.q) if args.q else modulus_for(args.n, args.logq)
    params = SchemeParams(RingParams(args.n, q), t=args.t, noise_stddev=args.sigma,
                          max_mul_depth=args.depth, decomp_base=args.base)
    _write_json(args.output, params.to_dict())
    print(f"wrote {args.output}: n={params.n} log2(q)={q.bit_length()} t={params.t} depth={params.max_mul_depth}")
    return EXIT_OK


def cmd_keygen(args) -> int:
    params = _load_params(args.params)
    bundle = keygen(params, np.random.default_rng(args.seed))
    wire.save_secret_keys(args.output, bundle)
    eval_out = args.eval_output or str(Path(args.output).with_suffix(".eval.bin"))
    wire.save_eval_keys(eval_out, bundle.public())
    print(f"wrote secret keys to {args.output} and evaluation keys to {eval_out}")
    return EXIT_OK


def cmd_train(args) -> int:
    arch = _read_json(args.arch)
    x, y = load_csv(args.data, int(arch["input_dim"]))
    width = int(arch["layers"][-1]["units"])
    labels = None
    if y.shape[1] == 1 and width > 1:
        labels = y[:, 0].astype(int)
        y = one_hot(labels, width)
    cfg = TrainingConfig(x, y, learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    net, curve = train(init_network(arch, seed=args.seed), cfg)
    net.save(args.output)
    msg = f"trained {args.epochs} epochs: loss {curve[0]:.6g} -> {curve[-1]:.6g}"
    if labels is not None:
        msg += f", training accuracy {accuracy(net, x, labels):.3f}"
    print(msg)
    if args.curve:
        _write_json(args.curve, curve)
    return EXIT_OK


def cmd_approx(args) -> int:
    interval = tuple(args.interval) if args.interval else DEFAULT_INTERVALS[args.fn]
    spec = ActivationSpec(args.fn, interval)
    print(f"# {args.fn} on [{interval[0]}, {interval[1]}]: certified sup error by degree")
    print(f"{'degree':>6}  {'chebyshev':>12}  {'minimax':>12}")
    for row in approximation_table(spec, args.max_degree):
        print(f"{row['degree']:>6}  {row['chebyshev']:>12.6g}  {row['minimax']:>12.6g}")
    return EXIT_OK


def cmd_compile(args) -> int:
    net = PolyNetwork.load(args.model)
    params = _load_params(args.params)
    cfg = CompileConfig(
        input_scale=args.input_scale,
        weight_scale=args.weight_scale,
        act_scale=args.act_scale,
        encrypt_constants=args.encrypt_constants,
        auto_raise_t=not args.fixed_t,
    )
    try:
        circuit = compile_network(net, params, cfg)
    except CompileError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    circuit.save(args.output)
    counts = circuit.counts()
    print(f"wrote {args.output}: total_degree={circuit.total_degree} mul_depth={circuit.mul_depth} "
          f"t={circuit.params.t} ops={counts}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    bundle = wire.load_secret_keys(args.keys)
    params_file = _read_json(args.params)
    if params_file.get("format") == "cryptonet-circuit":
        circuit = CompiledCircuit.from_dict(params_file)
        x = _read_rows(args.input)[:, :circuit.input_dim]
        mantissas = encode_inputs(circuit, x[args.row])
        params = circuit.params
    else:
        params = SchemeParams.from_dict(params_file)
        row = _read_rows(args.input)[args.row]
        mantissas = [encode_real(float(v), args.scale, params.t).mantissa for v in row]
    rng = np.random.default_rng(args.seed)
    cts = [encrypt(m, bundle, rng, params) for m in mantissas]
    wire.save_ciphertexts(args.output, cts)
    print(f"wrote {len(cts)} ciphertexts to {args.output}")
    return EXIT_OK


def _read_rows(path) -> np.ndarray:
    rows = [r for r in Path(path).read_text().splitlines() if r.strip() and not r.startswith("#")]
    out = []
    for r in rows:
        try:
            out.append([float(v) for v in r.split(",")])
        except ValueError:
            if out:
                raise
    return np.array(out, dtype=float)


def cmd_decrypt(args) -> int:
    bundle = wire.load_secret_keys(args.keys)
    if args.scale_from:
        circuit = CompiledCircuit.load(args.scale_from)
        params = circuit.params
    else:
        circuit = None
        params = _load_params(args.params) if args.params else bundle.params
    cts = wire.load_ciphertexts(args.input, params)
    mantissas = [decrypt(ct, bundle).value for ct in cts]
    if circuit is not None and not args.inputs:
        if len(mantissas) != len(circuit.outputs):
            raise _Invalid(f"{len(mantissas)} ciphertexts but the circuit has {len(circuit.outputs)} outputs")
        values = decode_outputs(circuit, mantissas)
    else:
        scale = circuit.input_scale if circuit is not None else args.scale
        values = [decode_real(FixedPointValue(m, scale), params.t) for m in mantissas]
    print(",".join(repr(float(v)) for v in values))
    return EXIT_OK


def cmd_serve(args) -> int:
    registry = wire.load_registry(args.registry)
    host, port = args.listen
    server = wire.serve(registry, host, port, keep_alive=args.keep_alive)
    bound = server.server_address
    print(f"serving {sorted(registry)} on {bound[0]}:{bound[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_request(args) -> int:
    raw = wire.request_raw(args.addr, args.model_id, Path(args.input).read_bytes(), args.timeout)
    msg_type, out = wire.unpack_envelope(raw)
    if msg_type == wire.MSG_ERROR:
        code, message = wire.decode_error(raw)
        raise wire.RemoteError(code, message)
    if msg_type != wire.MSG_RESPONSE:
        raise wire.UnknownMessageTypeError(f"unexpected reply type 0x{msg_type:02x}")
    Path(args.output).write_bytes(wire.pack_envelope(wire.MSG_CIPHERTEXTS, out))
    print(f"wrote response ciphertexts to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cryptonet", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    params = sub.add_parser("params", help="scheme parameter files")
    psub = params.add_subparsers(dest="params_command", required=True)
    gen = psub.add_parser("gen", help="emit a validated SchemeParams JSON file")
    gen.add_argument("--n", type=int, default=2048, help="ring dimension (power of two)")
    gen.add_argument("--logq", type=int, default=54, help="bits of q; q is the largest prime = 1 mod 2n below 2^logq")
    gen.add_argument("--q", help="explicit odd modulus, overrides --logq")
    gen.add_argument("--t", type=int, default=1 << 16, help="plaintext modulus")
    gen.add_argument("--depth", type=int, default=1, help="multiplicative depth to support")
    gen.add_argument("--base", type=int, default=1 << 8, help="relinearization decomposition base")
    gen.add_argument("--sigma", type=float, default=3.2, help="noise standard deviation")
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_params_gen)

    kg = sub.add_parser("keygen", help="generate secret and evaluation keys")
    kg.add_argument("--params", required=True, help="params.json (or a circuit file)")
    kg.add_argument("-o", "--output", required=True, help="secret key bundle, written with mode 600")
    kg.add_argument("--eval-output", help="evaluation keys for the server (default: <output>.eval.bin)")
    kg.add_argument("--seed", type=int, default=None)
    kg.set_defaults(func=cmd_keygen)

    tr = sub.add_parser("train", help="plaintext full-batch training",
                        description="CSV rows: features then label columns.")
    tr.add_argument("--data", required=True)
    tr.add_argument("--arch", required=True, help="architecture JSON")
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--curve", help="write the per-epoch loss curve as JSON")
    tr.add_argument("-o", "--output", required=True)
    tr.set_defaults(func=cmd_train)

    ap = sub.add_parser("approx", help="degree / sup-error table for an activation")
    ap.add_argument("--fn", choices=[k for k in KINDS if k != "custom"], default="sigmoid")
    ap.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    ap.add_argument("--max-degree", type=int, default=16)
    ap.set_defaults(func=cmd_approx)

    cp = sub.add_parser("compile", help="compile a model and validate its noise/overflow budget")
    cp.add_argument("--model", required=True)
    cp.add_argument("--params", required=True)
    cp.add_argument("--input-scale", type=int, default=4)
    cp.add_argument("--weight-scale", type=int, default=4)
    cp.add_argument("--act-scale", type=int, default=None)
    cp.add_argument("--encrypt-constants", action="store_true")
    cp.add_argument("--fixed-t", action="store_true", help="never raise t to fix overflow")
    cp.add_argument("-o", "--output", required=True)
    cp.set_defaults(func=cmd_compile)

    en = sub.add_parser("encrypt", help="encrypt one feature row")
    en.add_argument("--keys", required=True)
    en.add_argument("--params", required=True, help="circuit file (preferred) or params file")
    en.add_argument("--input", required=True, help="features CSV")
    en.add_argument("--row", type=int, default=0)
    en.add_argument("--scale", type=int, default=4, help="input scale when --params is a params file")
    en.add_argument("--seed", type=int, default=None)
    en.add_argument("-o", "--output", required=True)
    en.set_defaults(func=cmd_encrypt)

    de = sub.add_parser("decrypt", help="decrypt and decode ciphertexts")
    de.add_argument("--keys", required=True)
    de.add_argument("--input", required=True)
    de.add_argument("--scale-from", help="circuit file giving the output scales")
    de.add_argument("--inputs", action="store_true", help="decode at the circuit's input scale")
    de.add_argument("--params", help="params file when --scale-from is not given")
    de.add_argument("--scale", type=int, default=4)
    de.set_defaults(func=cmd_decrypt)

    sv = sub.add_parser("serve", help="run the inference server")
    sv.add_argument("--registry", required=True)
    sv.add_argument("--listen", type=_addr, default=("127.0.0.1", 7878))
    sv.add_argument("--keep-alive", action="store_true")
    sv.set_defaults(func=cmd_serve)

    rq = sub.add_parser("request", help="send encrypted features to a server")
    rq.add_argument("--addr", type=_addr, required=True)
    rq.add_argument("--model-id", required=True)
    rq.add_argument("--input", required=True)
    rq.add_argument("--timeout", type=float, default=300.0)
    rq.add_argument("-o", "--output", required=True)
    rq.set_defaults(func=cmd_request)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (_Invalid, ParameterError, TrainingDivergedError, CompileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, wire.WireError, wire.RemoteError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
