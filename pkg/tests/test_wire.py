"""Binary formats, the request protocol and the loopback server."""

import json
import os
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cryptonet.infer import decrypt_outputs, encrypt_inputs, encrypted_forward, quantized_forward
from cryptonet.she import decrypt, encrypt, he_mul
from cryptonet.wire import (
    ERR_MALFORMED,
    ERR_PARAMS_MISMATCH,
    ERR_UNKNOWN_MODEL,
    MSG_ERROR,
    MSG_RESPONSE,
    BadMagicError,
    IntegrityError,
    Model,
    ParamsIdMismatchError,
    Registry,
    RemoteError,
    TrailingBytesError,
    TruncatedError,
    UnknownMessageTypeError,
    UnsupportedVersionError,
    WireError,
    ciphertext_length,
    decode_ciphertexts,
    decode_error,
    decode_eval_keys,
    decode_response,
    decode_secret_keys,
    deserialize_ciphertext,
    encode_ciphertexts,
    encode_eval_keys,
    encode_request,
    encode_secret_keys,
    handle_message,
    load_ciphertexts,
    load_eval_keys,
    load_registry,
    load_secret_keys,
    request,
    request_raw,
    save_ciphertexts,
    save_eval_keys,
    save_secret_keys,
    serialize_ciphertext,
    serve,
    unpack_envelope,
)


@pytest.fixture(scope="module")
def registry(demo_compiled, demo_keys):
    return Registry({"demo": Model(demo_compiled, demo_keys.public())})


@pytest.fixture(scope="module")
def server(registry):
    srv = serve(registry)
    srv.start()
    yield srv
    srv.shutdown()
    srv.server_close()


class TestCiphertextFormat:
    def test_round_trip(self, demo_keys, rng):
        p = demo_keys.params
        ct = encrypt(17, demo_keys, rng)
        blob = serialize_ciphertext(ct)
        assert len(blob) == ciphertext_length(p, 2) == 36 + 2 * p.n * 8
        back = deserialize_ciphertext(blob, p)
        assert decrypt(back, demo_keys).value == 17
        assert serialize_ciphertext(back) == blob

    def test_three_component_and_level(self, demo_keys, rng):
        ct = he_mul(encrypt(3, demo_keys, rng), encrypt(5, demo_keys, rng), demo_keys.public())
        blob = serialize_ciphertext(ct)
        back = deserialize_ciphertext(blob, demo_keys.params)
        assert back.level == 1
        assert decrypt(back, demo_keys).value == 15

    def test_distinct_errors(self, demo_keys, deep_keys, rng):
        blob = serialize_ciphertext(encrypt(1, demo_keys, rng))
        with pytest.raises(TruncatedError):
            deserialize_ciphertext(blob[:-1], demo_keys.params)
        with pytest.raises(TrailingBytesError):
            deserialize_ciphertext(blob + b"\0", demo_keys.params)
        with pytest.raises(ParamsIdMismatchError):
            deserialize_ciphertext(blob, deep_keys.params)

    def test_rejects_out_of_range_coefficient(self, demo_keys, rng):
        blob = bytearray(serialize_ciphertext(encrypt(1, demo_keys, rng)))
        blob[36:44] = struct.pack("<Q", demo_keys.params.q)
        with pytest.raises(WireError):
            deserialize_ciphertext(bytes(blob), demo_keys.params)

    @settings(max_examples=25, deadline=None)
    @given(st.binary(min_size=0, max_size=200))
    def test_garbage_never_parses_silently(self, demo_keys, data):
        with pytest.raises(WireError):
            deserialize_ciphertext(data, demo_keys.params)


class TestEnvelope:
    def test_ciphertext_list(self, demo_keys, rng, tmp_path):
        cts = [encrypt(m, demo_keys, rng) for m in (1, 2, 3)]
        data = encode_ciphertexts(cts)
        assert [decrypt(c, demo_keys).value for c in decode_ciphertexts(data, demo_keys.params)] == [1, 2, 3]
        save_ciphertexts(tmp_path / "c.bin", cts)
        assert (tmp_path / "c.bin").read_bytes() == data
        assert len(load_ciphertexts(tmp_path / "c.bin", demo_keys.params)) == 3

    def test_header_corruption(self, demo_keys, rng):
        data = encode_ciphertexts([encrypt(1, demo_keys, rng)])
        cases = [
            (0, BadMagicError),
            (4, UnsupportedVersionError),
            (5, UnknownMessageTypeError),
        ]
        for pos, err in cases:
            bad = bytearray(data)
            bad[pos] ^= 0x40
            with pytest.raises(err):
                unpack_envelope(bytes(bad))
        with pytest.raises(TruncatedError):
            unpack_envelope(data[:10])

    def test_body_flip_detected(self, demo_keys, rng):
        data = bytearray(encode_ciphertexts([encrypt(1, demo_keys, rng)]))
        for pos in (20, len(data) // 2, len(data) - 1):
            bad = bytearray(data)
            bad[pos] ^= 1
            with pytest.raises(IntegrityError):
                unpack_envelope(bytes(bad))

    def test_wrong_message_type(self, demo_keys):
        with pytest.raises(UnknownMessageTypeError):
            decode_secret_keys(encode_eval_keys(demo_keys.public()))


class TestKeyFiles:
    def test_eval_keys(self, demo_keys, tmp_path, rng):
        ek = demo_keys.public()
        assert decode_eval_keys(encode_eval_keys(ek)).key_id == ek.key_id
        save_eval_keys(tmp_path / "k.eval.bin", ek)
        loaded = load_eval_keys(tmp_path / "k.eval.bin")
        ct = he_mul(encrypt(6, demo_keys, rng), encrypt(7, demo_keys, rng), loaded)
        assert decrypt(ct, demo_keys).value == 42

    def test_secret_keys(self, demo_keys, tmp_path, rng):
        save_secret_keys(tmp_path / "k.bin", demo_keys)
        assert (os.stat(tmp_path / "k.bin").st_mode & 0o777) == 0o600
        loaded = load_secret_keys(tmp_path / "k.bin")
        assert decrypt(encrypt(9, demo_keys, rng), loaded).value == 9
        assert encode_secret_keys(loaded) == encode_secret_keys(demo_keys)

    def test_registry_refuses_secret_key(self, demo_compiled, demo_keys, tmp_path):
        demo_compiled.save(tmp_path / "model.json")
        save_secret_keys(tmp_path / "k.bin", demo_keys)
        save_eval_keys(tmp_path / "k.eval.bin", demo_keys.public())
        reg = {"models": {"demo": {"circuit": "model.json", "eval_keys": "k.bin"}}}
        (tmp_path / "reg.json").write_text(json.dumps(reg))
        with pytest.raises(WireError):
            load_registry(tmp_path / "reg.json")
        reg["models"]["demo"]["eval_keys"] = "k.eval.bin"
        (tmp_path / "reg.json").write_text(json.dumps(reg))
        loaded = load_registry(tmp_path / "reg.json")
        assert loaded["demo"].circuit.digest() == demo_compiled.digest()

    def test_registry_rejects_foreign_keys(self, demo_compiled, deep_keys, tmp_path):
        demo_compiled.save(tmp_path / "model.json")
        save_eval_keys(tmp_path / "k.eval.bin", deep_keys.public())
        reg = {"models": {"demo": {"circuit": "model.json", "eval_keys": "k.eval.bin"}}}
        (tmp_path / "reg.json").write_text(json.dumps(reg))
        with pytest.raises(ValueError, match="another ring"):
            load_registry(tmp_path / "reg.json")


class TestProtocol:
    def test_handle_request(self, registry, demo_compiled, demo_keys, rng):
        x = [0.4, -0.9]
        reply = handle_message(encode_request("demo", encrypt_inputs(demo_compiled, x, demo_keys, rng)), registry)
        assert reply[5] == MSG_RESPONSE
        mant, _ = decrypt_outputs(demo_compiled, decode_response(reply, demo_compiled.params), demo_keys)
        assert mant == quantized_forward(demo_compiled, x)[0]

    def test_error_codes(self, registry, demo_compiled, demo_keys, deep_keys, rng):
        cts = encrypt_inputs(demo_compiled, [0.1, 0.2], demo_keys, rng)
        reply = handle_message(encode_request("nope", cts), registry)
        assert decode_error(reply)[0] == ERR_UNKNOWN_MODEL
        foreign = [encrypt(1, deep_keys, rng) for _ in range(2)]
        assert decode_error(handle_message(encode_request("demo", foreign), registry))[0] == ERR_PARAMS_MISMATCH
        assert decode_error(handle_message(encode_request("demo", cts[:1]), registry))[0] == ERR_MALFORMED
        assert decode_error(handle_message(b"junk", registry))[0] == ERR_MALFORMED

    def test_rejects_non_fresh_inputs(self, registry, demo_compiled, demo_keys, rng):
        cts = encrypt_inputs(demo_compiled, [0.1, 0.2], demo_keys, rng)
        cts[0] = he_mul(cts[0], cts[1], demo_keys.public())
        reply = handle_message(encode_request("demo", cts), registry)
        assert reply[5] == MSG_ERROR and decode_error(reply)[0] == ERR_MALFORMED

    def test_remote_error_raised(self):
        from cryptonet.wire import encode_error

        with pytest.raises(RemoteError) as info:
            decode_response(encode_error(ERR_UNKNOWN_MODEL, "unknown model 'x'"), None)
        assert info.value.code == ERR_UNKNOWN_MODEL


class TestLoopback:
    def test_matches_in_process(self, server, demo_compiled, demo_keys):
        x = [0.7, -0.3]
        cts = encrypt_inputs(demo_compiled, x, demo_keys, np.random.default_rng(5))
        out, raw = request(server.server_address, "demo", cts, demo_compiled.params, timeout=60)
        local = encrypted_forward(demo_compiled, cts, demo_keys.public())
        assert [serialize_ciphertext(c) for c in out] == [serialize_ciphertext(c) for c in local]
        assert decrypt_outputs(demo_compiled, out, demo_keys)[0] == quantized_forward(demo_compiled, x)[0]

    def test_raw_ciphertext_file(self, server, demo_compiled, demo_keys, rng):
        cts = encrypt_inputs(demo_compiled, [0.2, 0.2], demo_keys, rng)
        raw = request_raw(server.server_address, "demo", encode_ciphertexts(cts), timeout=60)
        assert raw[5] == MSG_RESPONSE

    def test_unknown_model_over_socket(self, server, demo_compiled, demo_keys, rng):
        cts = encrypt_inputs(demo_compiled, [0.2, 0.2], demo_keys, rng)
        with pytest.raises(RemoteError) as info:
            request(server.server_address, "missing", cts, demo_compiled.params, timeout=60)
        assert info.value.code == ERR_UNKNOWN_MODEL

    def test_concurrent_requests(self, server, demo_compiled, demo_keys):
        xs = [[0.5, 0.5], [-1.0, 0.25]]
        results = [None, None]

        def worker(i):
            cts = encrypt_inputs(demo_compiled, xs[i], demo_keys, np.random.default_rng(100 + i))
            out, _ = request(server.server_address, "demo", cts, demo_compiled.params, timeout=60)
            results[i] = [decrypt(c, demo_keys).value for c in out]

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(2)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        for x, got in zip(xs, results):
            assert got == quantized_forward(demo_compiled, x)[0]
