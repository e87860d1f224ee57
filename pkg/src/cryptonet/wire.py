"""Byte-exact serialization and the encrypted-inference protocol.

Every message travels in an envelope::

    b"CNET" | version u8 | msg_type u8 | payload_len u64 LE | payload

and every payload ends with a SHA-256 digest of the header and body, so
corruption anywhere is caught before the body is interpreted.  Ciphertexts
are laid out as ``params_id (32) | level u16 | count u16 | coefficients``
with each coefficient written as ``words`` little-endian u64 limbs
(one limb whenever q < 2^64).

The server side only ever loads :class:`EvaluationKeys`; a secret key file
is refused by message type.
"""

from __future__ import annotations

import hashlib
import json
import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .infer import encrypted_forward
from .polynet import CompiledCircuit
from .ring import RingElement, RingParams
from .she import Ciphertext, EvaluationKeys, SchemeParams, SecretKeyBundle

__all__ = [
    "MAGIC",
    "VERSION",
    "MSG_CIPHERTEXTS",
    "MSG_SECRET_KEYS",
    "MSG_EVAL_KEYS",
    "MSG_REQUEST",
    "MSG_RESPONSE",
    "MSG_ERROR",
    "ERR_UNKNOWN_MODEL",
    "ERR_PARAMS_MISMATCH",
    "ERR_MALFORMED",
    "ERR_INTERNAL",
    "WireError",
    "TruncatedError",
    "TrailingBytesError",
    "ParamsIdMismatchError",
    "BadMagicError",
    "UnsupportedVersionError",
    "UnknownMessageTypeError",
    "IntegrityError",
    "MalformedError",
    "RemoteError",
    "pack_envelope",
    "unpack_envelope",
    "serialize_ciphertext",
    "deserialize_ciphertext",
    "ciphertext_length",
    "encode_ciphertexts",
    "decode_ciphertexts",
    "encode_eval_keys",
    "decode_eval_keys",
    "encode_secret_keys",
    "decode_secret_keys",
    "save_secret_keys",
    "load_secret_keys",
    "save_eval_keys",
    "load_eval_keys",
    "save_ciphertexts",
    "load_ciphertexts",
    "InferenceRequest",
    "encode_request",
    "decode_request",
    "encode_response",
    "decode_response",
    "encode_error",
    "decode_error",
    "Model",
    "Registry",
    "load_registry",
    "handle_message",
    "InferenceServer",
    "serve",
    "request",
    "request_raw",
]

log = logging.getLogger(__name__)

MAGIC = b"CNET"
VERSION = 0x01
HEADER = struct.Struct("<4sBBQ")
DIGEST = 32
MAX_PAYLOAD = 1 << 30

MSG_CIPHERTEXTS = 0x01
MSG_SECRET_KEYS = 0x02
MSG_EVAL_KEYS = 0x03
MSG_REQUEST = 0x10
MSG_RESPONSE = 0x11
MSG_ERROR = 0x7F
MSG_TYPES = {MSG_CIPHERTEXTS, MSG_SECRET_KEYS, MSG_EVAL_KEYS, MSG_REQUEST, MSG_RESPONSE, MSG_ERROR}

ERR_UNKNOWN_MODEL = 1
ERR_PARAMS_MISMATCH = 2
ERR_MALFORMED = 3
ERR_INTERNAL = 4


class WireError(ValueError):
    code = ERR_MALFORMED


class TruncatedError(WireError):
    pass


class TrailingBytesError(WireError):
    pass


class ParamsIdMismatchError(WireError):
    code = ERR_PARAMS_MISMATCH


class BadMagicError(WireError):
    pass


class UnsupportedVersionError(WireError):
    pass


class UnknownMessageTypeError(WireError):
    pass


class IntegrityError(WireError):
    pass


class MalformedError(WireError):
    pass


class RemoteError(RuntimeError):
    def __init__(self, code: int, message: str):
        super().__init__(f"server error {code}: {message}")
        self.code = code
        self.message = message


# ---------------------------------------------------------------------------
# envelope


def pack_envelope(msg_type: int, body: bytes) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, msg_type, len(body) + DIGEST)
    return header + body + hashlib.sha256(header + body).digest()


def _check_header(header: bytes) -> tuple[int, int]:
    if len(header) < HEADER.size:
        raise TruncatedError("truncated envelope header")
    magic, version, msg_type, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagicError("bad magic")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if msg_type not in MSG_TYPES:
        raise UnknownMessageTypeError(f"unknown message type 0x{msg_type:02x}")
    if length < DIGEST or length > MAX_PAYLOAD:
        raise MalformedError(f"implausible payload length {length}")
    return msg_type, length


def unpack_envelope(data: bytes, expect: int | None = None) -> tuple[int, bytes]:
    """Return (msg_type, body) after checking framing and the digest."""
    msg_type, length = _check_header(data)
    end = HEADER.size + length
    if len(data) < end:
        raise TruncatedError(f"payload truncated: {len(data) - HEADER.size} of {length} bytes")
    if len(data) > end:
        raise TrailingBytesError(f"{len(data) - end} trailing bytes after envelope")
    body, digest = data[HEADER.size:end - DIGEST], data[end - DIGEST:end]
    if hashlib.sha256(data[:HEADER.size] + body).digest() != digest:
        raise IntegrityError("payload digest mismatch")
    if expect is not None and msg_type != expect:
        raise UnknownMessageTypeError(f"expected message type 0x{expect:02x}, got 0x{msg_type:02x}")
    return msg_type, body


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, k: int) -> bytes:
        if k < 0 or self.pos + k > len(self.data):
            raise TruncatedError(f"truncated: need {k} bytes at offset {self.pos}")
        out = bytes(self.data[self.pos:self.pos + k])
        self.pos += k
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise TrailingBytesError(f"{len(self.data) - self.pos} trailing bytes")


def _blob(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


# ---------------------------------------------------------------------------
# ring elements and ciphertexts


def _coeff_bytes(el: RingElement) -> bytes:
    w = el.params.words
    if w == 1:
        return np.asarray(el.coeffs, dtype="<u8").tobytes()
    size = 8 * w
    return b"".join(int(c).to_bytes(size, "little") for c in el.coeffs)


def _read_element(r: _Reader, ring: RingParams) -> RingElement:
    w = ring.words
    raw = r.take(ring.n * 8 * w)
    if w == 1:
        vals = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
        if np.any(vals >= np.uint64(ring.q)):
            raise MalformedError("coefficient out of range")
        if ring.dtype == object:
            return RingElement(ring, np.array([int(v) for v in vals], dtype=object))
        return RingElement(ring, vals.astype(np.int64))
    size = 8 * w
    vals = [int.from_bytes(raw[i:i + size], "little") for i in range(0, len(raw), size)]
    if any(v >= ring.q for v in vals):
        raise MalformedError("coefficient out of range")
    return RingElement(ring, np.array(vals, dtype=object))


def ciphertext_length(params: SchemeParams, components: int) -> int:
    return 36 + components * params.n * 8 * params.ring.words


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    head = ct.params_id + struct.pack("<HH", ct.level, len(ct.components))
    return head + b"".join(_coeff_bytes(c) for c in ct.components)


def _read_ciphertext(r: _Reader, params: SchemeParams) -> Ciphertext:
    pid = r.take(32)
    if pid != params.params_id:
        raise ParamsIdMismatchError("params mismatch: ciphertext was made under other parameters")
    level, count = r.u16(), r.u16()
    if not 2 <= count <= 3:
        raise MalformedError(f"bad component count {count}")
    if level > params.max_mul_depth:
        raise MalformedError(f"level {level} beyond scheme depth")
    comps = tuple(_read_element(r, params.ring) for _ in range(count))
    return Ciphertext(comps, level, params)


def deserialize_ciphertext(data: bytes, params: SchemeParams) -> Ciphertext:
    r = _Reader(data)
    ct = _read_ciphertext(r, params)
    r.done()
    return ct


def _ct_list(cts) -> bytes:
    cts = list(cts)
    return struct.pack("<I", len(cts)) + b"".join(_blob(serialize_ciphertext(c)) for c in cts)


def _read_ct_list(r: _Reader, params: SchemeParams) -> list[Ciphertext]:
    count = r.u32()
    if count > 1 << 16:
        raise MalformedError(f"implausible ciphertext count {count}")
    return [deserialize_ciphertext(r.blob(), params) for _ in range(count)]


def encode_ciphertexts(cts) -> bytes:
    return pack_envelope(MSG_CIPHERTEXTS, _ct_list(cts))


def decode_ciphertexts(data: bytes, params: SchemeParams) -> list[Ciphertext]:
    _, body = unpack_envelope(data, MSG_CIPHERTEXTS)
    r = _Reader(body)
    cts = _read_ct_list(r, params)
    r.done()
    return cts


# ---------------------------------------------------------------------------
# keys


def _ring_bytes(ring: RingParams) -> bytes:
    qb = ring.q.to_bytes((ring.q.bit_length() + 7) // 8, "little")
    return struct.pack("<I", ring.n) + _blob(qb)


def _read_ring(r: _Reader) -> RingParams:
    n = r.u32()
    q = int.from_bytes(r.blob(), "little")
    try:
        return RingParams(n, q)
    except (ValueError, TypeError) as exc:
        raise MalformedError(f"bad ring parameters: {exc}") from None


def _eval_body(keys: EvaluationKeys) -> bytes:
    out = [keys.key_id, _ring_bytes(keys.ring), struct.pack("<QH", keys.decomp_base, len(keys.relin))]
    for b, a in keys.relin:
        out += [_coeff_bytes(b), _coeff_bytes(a)]
    return b"".join(out)


def _read_eval(r: _Reader) -> EvaluationKeys:
    key_id = r.take(32)
    ring = _read_ring(r)
    base, digits = r.u64(), r.u16()
    if base < 2 or digits < 1:
        raise MalformedError("bad decomposition parameters")
    relin = tuple((_read_element(r, ring), _read_element(r, ring)) for _ in range(digits))
    return EvaluationKeys(key_id, ring, base, relin)


def encode_eval_keys(keys: EvaluationKeys) -> bytes:
    if not isinstance(keys, EvaluationKeys):
        raise TypeError("only evaluation keys are published")
    return pack_envelope(MSG_EVAL_KEYS, _eval_body(keys))


def decode_eval_keys(data: bytes) -> EvaluationKeys:
    _, body = unpack_envelope(data, MSG_EVAL_KEYS)
    r = _Reader(body)
    keys = _read_eval(r)
    r.done()
    return keys


def encode_secret_keys(bundle: SecretKeyBundle) -> bytes:
    params = json.dumps(bundle.params.to_dict(), sort_keys=True).encode()
    body = _blob(params) + _coeff_bytes(bundle.sk) + _eval_body(bundle.eval_keys)
    return pack_envelope(MSG_SECRET_KEYS, body)


def decode_secret_keys(data: bytes) -> SecretKeyBundle:
    _, body = unpack_envelope(data, MSG_SECRET_KEYS)
    r = _Reader(body)
    params = SchemeParams.from_dict(json.loads(r.blob()))
    sk = _read_element(r, params.ring)
    keys = _read_eval(r)
    r.done()
    if keys.key_id != params.key_id:
        raise MalformedError("evaluation keys do not belong to these parameters")
    return SecretKeyBundle(params, sk, keys)


def _write_private(path, data: bytes) -> None:
    path = Path(path)
    path.touch(mode=0o600, exist_ok=True)
    try:
        path.chmod(0o600)
    except OSError:  # pragma: no cover - platform without POSIX modes
        pass
    path.write_bytes(data)


def save_secret_keys(path, bundle: SecretKeyBundle) -> None:
    _write_private(path, encode_secret_keys(bundle))


def load_secret_keys(path) -> SecretKeyBundle:
    return decode_secret_keys(Path(path).read_bytes())


def save_eval_keys(path, keys: EvaluationKeys) -> None:
    Path(path).write_bytes(encode_eval_keys(keys))


def load_eval_keys(path) -> EvaluationKeys:
    return decode_eval_keys(Path(path).read_bytes())


def save_ciphertexts(path, cts) -> None:
    Path(path).write_bytes(encode_ciphertexts(cts))


def load_ciphertexts(path, params: SchemeParams) -> list[Ciphertext]:
    return decode_ciphertexts(Path(path).read_bytes(), params)


# ---------------------------------------------------------------------------
# protocol messages


@dataclass(frozen=True)
class InferenceRequest:
    model_id: str
    payload: bytes  # serialized ciphertext list, parsed once the model is known


def encode_request(model_id: str, cts) -> bytes:
    return pack_envelope(MSG_REQUEST, _blob(model_id.encode()) + _ct_list(cts))


def decode_request(data: bytes) -> InferenceRequest:
    _, body = unpack_envelope(data, MSG_REQUEST)
    r = _Reader(body)
    try:
        model_id = r.blob().decode()
    except UnicodeDecodeError:
        raise MalformedError("model id is not utf-8") from None
    return InferenceRequest(model_id, body[r.pos:])


def encode_response(cts) -> bytes:
    return pack_envelope(MSG_RESPONSE, _ct_list(cts))


def decode_response(data: bytes, params: SchemeParams) -> list[Ciphertext]:
    """Output ciphertexts, or raise :class:`RemoteError` for an error response."""
    msg_type, _ = _check_header(data)
    if msg_type == MSG_ERROR:
        code, message = decode_error(data)
        raise RemoteError(code, message)
    _, body = unpack_envelope(data, MSG_RESPONSE)
    r = _Reader(body)
    cts = _read_ct_list(r, params)
    r.done()
    return cts


def encode_error(code: int, message: str) -> bytes:
    return pack_envelope(MSG_ERROR, struct.pack("<H", code) + message.encode())


def decode_error(data: bytes) -> tuple[int, str]:
    _, body = unpack_envelope(data, MSG_ERROR)
    r = _Reader(body)
    code = r.u16()
    return code, body[r.pos:].decode(errors="replace")


# ---------------------------------------------------------------------------
# server


@dataclass(frozen=True)
class Model:
    circuit: CompiledCircuit
    keys: EvaluationKeys

    @property
    def params(self) -> SchemeParams:
        return self.circuit.params


class Registry(dict):
    """model_id -> Model; built once at startup and never mutated afterwards."""


def load_registry(path) -> Registry:
    """Load ``{"models": {id: {"circuit": ..., "eval_keys": ..., "params": ...}}}``.

    Relative paths resolve against the registry file.  ``params`` is optional
    and, when given, must agree with the ring the circuit was compiled for.
    """
    path = Path(path)
    spec = json.loads(path.read_text())
    reg = Registry()
    for model_id, entry in spec.get("models", {}).items():
        circuit = CompiledCircuit.load(path.parent / entry["circuit"])
        keys = load_eval_keys(path.parent / entry["eval_keys"])
        if "params" in entry:
            declared = SchemeParams.from_dict(json.loads((path.parent / entry["params"]).read_text()))
            if declared.key_id != circuit.params.key_id:
                raise ValueError(f"model {model_id!r}: params file disagrees with the circuit's ring")
        if not keys.matches(circuit.params):
            raise ValueError(f"model {model_id!r}: evaluation keys were generated for another ring")
        reg[model_id] = Model(circuit, keys)
    return reg


def handle_message(data: bytes, registry: Registry) -> bytes:
    """Turn one request envelope into a response or error envelope."""
    try:
        req = decode_request(data)
    except WireError as exc:
        return encode_error(ERR_MALFORMED, str(exc))
    model = registry.get(req.model_id)
    if model is None:
        return encode_error(ERR_UNKNOWN_MODEL, f"unknown model {req.model_id!r}")
    try:
        r = _Reader(req.payload)
        cts = _read_ct_list(r, model.params)
        r.done()
        if len(cts) != model.circuit.input_dim:
            raise MalformedError(f"model expects {model.circuit.input_dim} ciphertexts, got {len(cts)}")
        if any(ct.level != 0 or len(ct.components) != 2 for ct in cts):
            raise MalformedError("inputs must be fresh two-component ciphertexts")
    except WireError as exc:
        return encode_error(exc.code, str(exc))
    try:
        out = encrypted_forward(model.circuit, cts, model.keys)
    except Exception as exc:  # noqa: BLE001 - reported to the client, never swallowed silently
        log.exception("evaluation failed")
        return encode_error(ERR_INTERNAL, f"evaluation failed: {exc}")
    return encode_response(out)


def _recv_exact(sock, k: int) -> bytes:
    chunks = []
    while k:
        chunk = sock.recv(min(k, 1 << 20))
        if not chunk:
            raise TruncatedError("connection closed mid-message")
        chunks.append(chunk)
        k -= len(chunk)
    return b"".join(chunks)


def _recv_envelope(sock) -> bytes:
    header = _recv_exact(sock, HEADER.size)
    _, length = _check_header(header)
    return header + _recv_exact(sock, length)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        while True:
            try:
                data = _recv_envelope(self.request)
            except TruncatedError:
                return
            except WireError as exc:
                self.request.sendall(encode_error(ERR_MALFORMED, str(exc)))
                return
            reply = handle_message(data, self.server.registry)
            self.request.sendall(reply)
            if not self.server.keep_alive or reply[5] == MSG_ERROR:
                return


class InferenceServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, registry: Registry, keep_alive: bool = False):
        super().__init__(address, _Handler)
        self.registry = registry
        self.keep_alive = keep_alive

    def start(self) -> threading.Thread:
        th = threading.Thread(target=self.serve_forever, daemon=True)
        th.start()
        return th


def serve(registry: Registry, host: str = "127.0.0.1", port: int = 0, keep_alive: bool = False) -> InferenceServer:
    return InferenceServer((host, port), registry, keep_alive)


def request(addr: tuple[str, int], model_id: str, cts, params: SchemeParams, timeout: float = 300.0):
    """Send one inference request; return (output ciphertexts, raw response bytes)."""
    with socket.create_connection(addr, timeout=timeout) as sock:
        sock.sendall(encode_request(model_id, cts))
        raw = _recv_envelope(sock)
    return decode_response(raw, params), raw


def request_raw(addr: tuple[str, int], model_id: str, ciphertext_file: bytes, timeout: float = 300.0) -> bytes:
    """Forward a saved ciphertext-list envelope as a request; return the raw reply."""
    _, body = unpack_envelope(ciphertext_file, MSG_CIPHERTEXTS)
    with socket.create_connection(addr, timeout=timeout) as sock:
        sock.sendall(pack_envelope(MSG_REQUEST, _blob(model_id.encode()) + body))
        return _recv_envelope(sock)
