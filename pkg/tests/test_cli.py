import json
import subprocess

import numpy as np
import pytest

from kernelbundle.cli import EXIT_NUMERICAL, EXIT_PARSE, EXIT_VALIDATION, main


@pytest.fixture(scope="module")
def specs(tmp_path_factory):
    root = tmp_path_factory.mktemp("specs")
    files = {
        "branching": {
            "family": {"kind": "branching"},
            "grid": {"axes": [{"min": -0.2, "max": 0.2, "count": 5}]},
            "probe": [
                {"entry": 0, "coeff": {"type": "poly", "coeffs": [1, 0, 1]}},
                {"entry": 1, "coeff": {"type": "sin"}},
            ],
        },
        "jordan": {"family": {"kind": "jordan"}},
        "indicial": {"family": {"kind": "indicial", "m": 2}},
        "oversized": {
            "family": {"kind": "branching"},
            "base_point": {"y0": [0.0], "epsilon": 1.9},
        },
    }
    out = {}
    for name, spec in files.items():
        path = root / f"{name}.json"
        path.write_text(json.dumps(spec))
        out[name] = str(path)
    return out


class TestSubcommands:
    def test_locate(self, specs, tmp_path):
        out = tmp_path / "locate.json"
        assert main(["locate", "--spec", specs["branching"], "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert len(data["zeros"]) == 1
        z = data["zeros"][0]
        assert z["multiplicity"] == 2
        assert abs(complex(z["re"], z["im"])) < 1e-8

    def test_locate_stdout(self, specs, capsys):
        assert main(["locate", "--spec", specs["jordan"]]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["zeros"][0]["multiplicity"] == 2

    def test_reduce(self, specs, tmp_path):
        out = tmp_path / "reduce.json"
        assert main(["reduce", "--spec", specs["branching"], "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["validation"]["passed"] is True
        assert data["lengths"] == [[1, 1]]
        assert data["dual_delta_residual"] < 1e-8
        assert data["base"]["clusters"][0]["multiplicity"] == 2

    def test_frame(self, specs, tmp_path):
        out = tmp_path / "frame.json"
        code = main(["frame", "--spec", specs["branching"], "--out", str(out), "--y", "0.1"])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["y"] == [0.1]
        assert data["labels"] == [[0, 0, 0], [0, 1, 0]]
        assert 1.0 <= data["independence_condition"] < 1e3
        assert len(data["carriers"]) == 2
        assert data["carriers"][0]["radius"] > 0

    def test_pair_reports_base_pattern(self, specs, tmp_path):
        out = tmp_path / "pair.json"
        assert main(["pair", "--spec", specs["branching"], "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["base_pattern_gap"] < 1e-8
        m = np.array([[complex(re, im) for re, im in row] for row in data["matrix"]])
        assert np.allclose(m, 1j * np.eye(2), atol=1e-8)

    def test_pair_off_base_has_no_gap_field(self, specs, tmp_path):
        out = tmp_path / "pair.json"
        code = main(["pair", "--spec", specs["branching"], "--out", str(out), "--y", "0.15"])
        assert code == 0
        data = json.loads(out.read_text())
        assert "base_pattern_gap" not in data
        assert data["condition"] < 1e3

    def test_sweep(self, specs, tmp_path):
        out = tmp_path / "sweep.json"
        csv = tmp_path / "diagram.csv"
        code = main(
            ["sweep", "--spec", specs["branching"], "--out", str(out), "--csv", str(csv)]
        )
        assert code == 0
        data = json.loads(out.read_text())
        assert len(data["points"]) == 5
        assert data["failures"] == []
        assert data["coefficient_dd"][0] == pytest.approx(1.0, rel=1e-6)
        for pt in data["points"]:
            assert pt["probe_error"] < 1e-8
        lines = csv.read_text().splitlines()
        assert lines[0] == "y,cluster,re_sigma,im_sigma,mult"
        assert len(lines) == 10

    def test_sweep_deterministic_output(self, specs, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert main(["sweep", "--spec", specs["branching"], "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_trace(self, specs, tmp_path):
        out = tmp_path / "trace.json"
        code = main(
            ["trace", "--spec", specs["indicial"], "--gamma", "1.5",
             "--window", "2.0", "--out", str(out)]
        )
        assert code == 0
        data = json.loads(out.read_text())
        assert len(data["terms"]) == 2
        t0, t1 = data["terms"]
        assert t0["sigma"] == pytest.approx([0.0, 0.0], abs=1e-9)
        assert t0["coeff"] == pytest.approx([1.0, 0.0], abs=1e-8)
        assert t0["log_power"] == 0
        assert t1["sigma"] == pytest.approx([0.0, -1.0], abs=1e-9)
        assert t1["coeff"] == pytest.approx([-1.0, 0.0], abs=1e-8)


class TestExitCodes:
    def test_missing_file(self, tmp_path, capsys):
        code = main(["locate", "--spec", str(tmp_path / "nope.json")])
        assert code == EXIT_PARSE
        assert "error" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["locate", "--spec", str(bad)]) == EXIT_PARSE

    def test_unknown_family_kind(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"family": {"kind": "mystery"}}))
        assert main(["locate", "--spec", str(bad)]) == EXIT_PARSE

    def test_wrong_y_arity(self, specs, capsys):
        code = main(["frame", "--spec", specs["branching"], "--y", "0.1,0.2"])
        assert code == EXIT_PARSE

    def test_trace_needs_scalar_family(self, specs, capsys):
        code = main(
            ["trace", "--spec", specs["branching"], "--gamma", "1.0", "--window", "2.0"]
        )
        assert code == EXIT_PARSE

    def test_sweep_needs_some_grid(self, specs, capsys):
        assert main(["sweep", "--spec", specs["jordan"]]) == EXIT_PARSE

    def test_oversized_disc_fails_validation(self, specs, capsys):
        code = main(["reduce", "--spec", specs["oversized"]])
        assert code == EXIT_VALIDATION
        assert "validation failed" in capsys.readouterr().err

    def test_multiplicity_jump(self, specs, capsys):
        code = main(
            ["sweep", "--spec", specs["branching"], "--grid", "1.15,1.25,2"]
        )
        assert code == EXIT_NUMERICAL
        assert "numerical failure" in capsys.readouterr().err


def test_console_script(specs, tmp_path):
    out = tmp_path / "locate.json"
    proc = subprocess.run(
        ["kernelbundle", "locate", "--spec", specs["branching"], "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["zeros"][0]["multiplicity"] == 2
