"""The command-line pipeline end to end, and its exit codes."""

import json

import numpy as np
import pytest

from cryptonet import wire
from cryptonet.cli import main
from cryptonet.demo import DEMO_ARCH, demo_data
from cryptonet.infer import decode_outputs, quantized_forward
from cryptonet.polynet import CompiledCircuit
from cryptonet.she import SchemeParams, demo_params
from cryptonet.train import save_csv


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """params -> keygen -> train -> compile -> encrypt; returns the work dir."""
    d = tmp_path_factory.mktemp("cli")
    x, labels = demo_data()
    save_csv(d / "train.csv", x, labels)
    (d / "arch.json").write_text(json.dumps(DEMO_ARCH))
    steps = [
        ["params", "gen", "-o", d / "params.json"],
        ["keygen", "--params", d / "params.json", "--seed", "7", "-o", d / "keys.bin"],
        ["train", "--data", d / "train.csv", "--arch", d / "arch.json", "--epochs", "200", "--lr", "0.1",
         "--curve", d / "curve.json", "-o", d / "model.json"],
        ["compile", "--model", d / "model.json", "--params", d / "params.json",
         "--input-scale", "3", "--weight-scale", "2", "-o", d / "circuit.json"],
        ["encrypt", "--keys", d / "keys.bin", "--params", d / "circuit.json", "--input", d / "train.csv",
         "--row", "3", "--seed", "1", "-o", d / "x.bin"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return d


class TestPipeline:
    def test_params_file_matches_preset(self, pipeline):
        p = SchemeParams.from_dict(json.loads((pipeline / "params.json").read_text()))
        assert p == demo_params()

    def test_eval_keys_written_beside_secret(self, pipeline):
        assert (pipeline / "keys.eval.bin").exists()
        assert wire.load_eval_keys(pipeline / "keys.eval.bin").key_id == demo_params().key_id

    def test_training_curve(self, pipeline):
        curve = json.loads((pipeline / "curve.json").read_text())
        assert len(curve) == 200 and curve[-1] < curve[0]

    def test_round_trip_inputs(self, pipeline, capsys):
        assert main(["decrypt", "--keys", str(pipeline / "keys.bin"), "--input", str(pipeline / "x.bin"),
                     "--scale-from", str(pipeline / "circuit.json"), "--inputs"]) == 0
        got = [float(v) for v in capsys.readouterr().out.strip().split(",")]
        x, _ = demo_data()
        np.testing.assert_allclose(got, x[3], atol=2.0**-4)

    def test_served_inference(self, pipeline, capsys):
        registry = {"models": {"demo": {"circuit": "circuit.json", "eval_keys": "keys.eval.bin",
                                        "params": "params.json"}}}
        (pipeline / "registry.json").write_text(json.dumps(registry))
        server = wire.serve(wire.load_registry(pipeline / "registry.json"))
        server.start()
        try:
            host, port = server.server_address
            addr = f"{host}:{port}"
            assert main(["request", "--addr", addr, "--model-id", "demo", "--input", str(pipeline / "x.bin"),
                         "-o", str(pipeline / "y.bin")]) == 0
            assert main(["request", "--addr", addr, "--model-id", "other", "--input", str(pipeline / "x.bin"),
                         "-o", str(pipeline / "z.bin")]) == 2
        finally:
            server.shutdown()
            server.server_close()
        capsys.readouterr()
        assert main(["decrypt", "--keys", str(pipeline / "keys.bin"), "--input", str(pipeline / "y.bin"),
                     "--scale-from", str(pipeline / "circuit.json")]) == 0
        got = [float(v) for v in capsys.readouterr().out.strip().split(",")]
        circuit = CompiledCircuit.load(pipeline / "circuit.json")
        x, _ = demo_data()
        np.testing.assert_array_equal(got, decode_outputs(circuit, quantized_forward(circuit, x[3])[0]))


class TestExitCodes:
    def test_approx_table(self, capsys):
        assert main(["approx", "--fn", "tanh", "--max-degree", "5"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert [int(r.split()[0]) for r in lines[2:]] == list(range(6))

    def test_params_validation_fails(self, tmp_path):
        code = main(["params", "gen", "--n", "1024", "--depth", "3", "-o", str(tmp_path / "p.json")])
        assert code == 1

    def test_compile_budget_failure(self, pipeline, tmp_path):
        code = main(["compile", "--model", str(pipeline / "model.json"), "--params", str(pipeline / "params.json"),
                     "--input-scale", "8", "--weight-scale", "8", "--fixed-t", "-o", str(tmp_path / "c.json")])
        assert code == 1
        assert not (tmp_path / "c.json").exists()

    def test_missing_file(self, tmp_path):
        assert main(["keygen", "--params", str(tmp_path / "nope.json"), "-o", str(tmp_path / "k.bin")]) == 2

    def test_corrupt_ciphertext_file(self, pipeline, tmp_path):
        data = bytearray((pipeline / "x.bin").read_bytes())
        data[100] ^= 1
        (tmp_path / "bad.bin").write_bytes(bytes(data))
        assert main(["decrypt", "--keys", str(pipeline / "keys.bin"), "--input", str(tmp_path / "bad.bin")]) == 2

    def test_bad_address(self):
        with pytest.raises(SystemExit):
            main(["request", "--addr", "nowhere", "--model-id", "m", "--input", "x", "-o", "y"])
