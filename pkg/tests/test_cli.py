import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ternary_gsp import formats
from ternary_gsp.cli import count, main
from ternary_gsp.tensor_core import DenseTensor

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def p2(tmp_path):
    path = tmp_path / "p2.txt"
    path.write_text("# path on two vertices\n2 1\n0 1\n")
    return path


def write_json(path, shape, data):
    path.write_text(json.dumps({"shape": shape, "data": data}))
    return path


def stdout_fields(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


class TestBuildScheme:
    def test_gcn_p2(self, tmp_path, p2, capsys):
        out = tmp_path / "s.json"
        assert main(["build-scheme", "--model", "gcn", "--graph", str(p2), "--out", str(out)]) == 0
        s, spec = formats.read_scheme(out)
        assert np.array_equal(s.to_dense()[0], np.full((2, 2), 0.5))
        assert spec["kind"] == "gcn"
        assert out.read_bytes() == (GOLDEN / "gcn_p2.json").read_bytes()
        assert stdout_fields(capsys.readouterr().out)["K"] == "1"

    def test_conv1d(self, tmp_path, capsys):
        out = tmp_path / "c.json"
        assert main(["build-scheme", "--model", "conv1d", "--i", "4", "--kernel", "2", "--out", str(out)]) == 0
        fields = stdout_fields(capsys.readouterr().out)
        assert (fields["K"], fields["nnz"]) == ("2", "6")
        assert out.read_bytes() == (GOLDEN / "conv1d_i4_k2.json").read_bytes()

    def test_missing_graph(self, tmp_path, capsys):
        assert main(["build-scheme", "--model", "gcn", "--out", str(tmp_path / "s.json")]) == 2
        assert "--graph" in capsys.readouterr().err

    def test_scientific_notation(self, tmp_path, capsys):
        out = tmp_path / "f.json"
        assert main(["build-scheme", "--model", "fc", "--i", "2e0", "--j", "2", "--out", str(out)]) == 0
        assert stdout_fields(capsys.readouterr().out)["K"] == "4"

    def test_directed_unsupported(self, tmp_path, p2, capsys):
        code = main(["build-scheme", "--model", "gcn", "--graph", str(p2), "--directed", "--out", str(tmp_path / "s.json")])
        assert code == 3

    def test_graph_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("2 1\n0 x\n")
        code = main(["build-scheme", "--model", "gcn", "--graph", str(bad), "--out", str(tmp_path / "s.json")])
        assert code == 1
        assert "line 2" in capsys.readouterr().err

    def test_geometry_error(self, tmp_path, capsys):
        code = main(["build-scheme", "--model", "conv1d", "--i", "2", "--kernel", "3", "--out", str(tmp_path / "s.json")])
        assert code == 2

    def test_chebnet_and_tagcn(self, tmp_path, p2, capsys):
        for model, k in (("chebnet", "2"), ("tagcn", "2")):
            out = tmp_path / f"{model}.json"
            assert main(["build-scheme", "--model", model, "--graph", str(p2), "--c", "2", "--out", str(out)]) == 0
            assert stdout_fields(capsys.readouterr().out)["K"] == k

    def test_gat_concat_writes_per_head(self, tmp_path, p2, capsys):
        theta = write_json(tmp_path / "theta.json", [2, 1, 1], [1.0, 2.0])
        att = write_json(tmp_path / "a.json", [2, 2], [0.5, -0.5, 1.0, 0.0])
        x = write_json(tmp_path / "x.json", [1, 2], [1.0, 3.0])
        out = tmp_path / "g.json"
        args = ["build-scheme", "--model", "gat", "--graph", str(p2), "--theta", str(theta),
                "--attention", str(att), "--x", str(x), "--out", str(out)]
        assert main(args) == 0
        for h in range(2):
            s, spec = formats.read_scheme(tmp_path / f"g.head{h}.json")
            assert spec["metadata"]["head"] == h
            assert spec["input_digest"].startswith("sha256:")
            assert np.allclose(s.to_dense()[0].sum(axis=1), 1.0)
        assert main(args[:-2] + ["--mode", "average", "--out", str(out)]) == 0
        assert formats.read_scheme(out)[1]["K"] == 2

    def test_gat_requires_inputs(self, tmp_path, p2, capsys):
        code = main(["build-scheme", "--model", "gat", "--graph", str(p2), "--out", str(tmp_path / "g.json")])
        assert code == 2


class TestForward:
    def test_gcn_p2(self, tmp_path, p2, capsys):
        scheme = tmp_path / "s.json"
        main(["build-scheme", "--model", "gcn", "--graph", str(p2), "--out", str(scheme)])
        theta = write_json(tmp_path / "t.json", [1, 1, 1], [1.0])
        x = write_json(tmp_path / "x.json", [1, 1, 2], [1.0, 3.0])
        out = tmp_path / "y.json"
        assert main(["forward", "--scheme", str(scheme), "--theta", str(theta), "--x", str(x), "--out", str(out)]) == 0
        assert formats.read_tensor(out).data == [2.0, 2.0]

    def test_identity_scheme(self, tmp_path, capsys):
        scheme = tmp_path / "id.json"
        main(["build-scheme", "--model", "conv1d", "--i", "3", "--kernel", "1", "--out", str(scheme)])
        theta = write_json(tmp_path / "t.json", [1, 1, 1], [1.0])
        x = write_json(tmp_path / "x.json", [1, 1, 3], [0.25, -1.5, 7.0])
        out = tmp_path / "y.json"
        assert main(["forward", "--scheme", str(scheme), "--theta", str(theta), "--x", str(x), "--out", str(out)]) == 0
        assert formats.read_tensor(out).data == [0.25, -1.5, 7.0]

    def test_binary_output_deterministic(self, tmp_path, capsys):
        scheme = tmp_path / "f.json"
        main(["build-scheme", "--model", "fc", "--i", "2", "--j", "2", "--out", str(scheme)])
        theta = write_json(tmp_path / "t.json", [1, 1, 4], [1.0, 2.0, 3.0, 4.0])
        x = write_json(tmp_path / "x.json", [1, 1, 2], [1.0, 1.0])
        outs = []
        for n in range(2):
            out = tmp_path / f"y{n}.bin"
            args = ["forward", "--scheme", str(scheme), "--theta", str(theta), "--x", str(x),
                    "--out", str(out), "--format", "binary"]
            assert main(args) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] and outs[0][:4] == b"TT01"
        assert formats.read_tensor(tmp_path / "y0.bin") == DenseTensor(np.array([[[3.0, 7.0]]]))

    def test_k_mismatch(self, tmp_path, p2, capsys):
        scheme = tmp_path / "s.json"
        main(["build-scheme", "--model", "gcn", "--graph", str(p2), "--out", str(scheme)])
        theta = write_json(tmp_path / "t.json", [1, 1, 2], [1.0, 1.0])
        x = write_json(tmp_path / "x.json", [1, 1, 2], [1.0, 3.0])
        code = main(["forward", "--scheme", str(scheme), "--theta", str(theta), "--x", str(x), "--out", str(tmp_path / "y.json")])
        assert code == 2
        assert "K=" in capsys.readouterr().err

    def test_axis_named_on_shape_error(self, tmp_path, p2, capsys):
        scheme = tmp_path / "s.json"
        main(["build-scheme", "--model", "gcn", "--graph", str(p2), "--out", str(scheme)])
        theta = write_json(tmp_path / "t.json", [1, 1, 1], [1.0])
        x = write_json(tmp_path / "x.json", [1, 1, 3], [1.0, 3.0, 2.0])
        code = main(["forward", "--scheme", str(scheme), "--theta", str(theta), "--x", str(x), "--out", str(tmp_path / "y.json")])
        assert code == 2
        assert "axis I" in capsys.readouterr().err


class TestVerify:
    def test_all_passes(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert main(["verify", "--model", "all", "--trials", "5", "--n", "16", "--seed", "42", "--tol", "1e-10", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["pass"] is True and len(doc["models"]) == 7
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("fc: PASS trials=5 failed=0")

    def test_zero_tol_fails(self, capsys):
        assert main(["verify", "--model", "gcn", "--tol", "0"]) == 1
        assert "gcn: FAIL" in capsys.readouterr().out

    def test_fc_gradients(self, capsys):
        assert main(["verify", "--model", "fc", "--gradients", "--trials", "1e1"]) == 0
        assert "fc:gradients: PASS trials=10" in capsys.readouterr().out

    def test_env_seed_overrides(self, tmp_path, monkeypatch, capsys):
        paths = []
        for seed, env in (("1", "7"), ("2", "7"), ("7", None)):
            if env is None:
                monkeypatch.delenv("TERNARY_SEED", raising=False)
            else:
                monkeypatch.setenv("TERNARY_SEED", env)
            out = tmp_path / f"r{seed}.json"
            assert main(["verify", "--model", "gcn", "--trials", "3", "--seed", seed, "--out", str(out)]) == 0
            paths.append(out.read_bytes())
        assert paths[0] == paths[1] == paths[2]

    def test_bad_env_seed(self, monkeypatch, capsys):
        monkeypatch.setenv("TERNARY_SEED", "abc")
        assert main(["verify", "--model", "gcn", "--trials", "1"]) == 2

    def test_bad_count(self, capsys):
        assert main(["verify", "--trials", "2.5"]) == 2


class TestInfo:
    def test_fc(self, capsys):
        assert main(["info", "--scheme", str(GOLDEN / "fc_2x2.json")]) == 0
        fields = stdout_fields(capsys.readouterr().out)
        assert (fields["kind"], fields["K"], fields["nnz"], fields["density"]) == ("fc", "4", "4", "0.25")

    def test_empty(self, tmp_path, capsys):
        path = tmp_path / "e.json"
        path.write_text('{"k": 1, "j": 2, "i": 2, "entries": []}')
        assert main(["info", "--scheme", str(path)]) == 0
        out = capsys.readouterr().out
        assert "nnz=0" in out.splitlines() and "kind=" not in out

    def test_corrupt(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"k": 1, "j":')
        assert main(["info", "--scheme", str(path)]) == 1

    def test_round_trip_stats(self, tmp_path, p2, capsys):
        out = tmp_path / "t.json"
        main(["build-scheme", "--model", "tagcn", "--graph", str(p2), "--c", "3", "--out", str(out)])
        built = stdout_fields(capsys.readouterr().out)
        main(["info", "--scheme", str(out)])
        info = stdout_fields(capsys.readouterr().out)
        assert all(info[key] == built[key] for key in ("K", "nnz", "density"))
        assert info["toeplitz"] in ("true", "false")


def test_count_parser():
    assert count("1e3") == 1000
    assert count("20") == 20
    for bad in ("-1", "1.5", "x"):
        with pytest.raises(Exception):
            count(bad)


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ternary_gsp", "info", "--scheme", str(GOLDEN / "conv1d_i4_k2.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "toeplitz=true" in proc.stdout
