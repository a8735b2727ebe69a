import csv
import json
import math

import pytest

from pssmp.cli import main


def write_model(tmp_path, doc, name="model.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


@pytest.fixture
def drift_file(tmp_path):
    return write_model(tmp_path, {"gamma": 1.0, "sigma2": 0.0, "q": 0.0, "jumps": None}, "drift.json")


@pytest.fixture
def brownian_file(tmp_path):
    return write_model(tmp_path, {"gamma": 1.0, "sigma2": 2.0}, "bm.json")


@pytest.fixture
def atom_file(tmp_path):
    return write_model(tmp_path, {"gamma": 2.0, "sigma2": 0.0, "jumps": {"atoms": [[-math.log(2.0), 1.0]]}},
                       "atom.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    return list(csv.reader(line for line in text.splitlines() if not line.startswith("#")))


class TestPsi:
    def test_unit_drift(self, capsys, drift_file):
        code, out, _ = run(capsys, "psi", "--model", drift_file, "--lambdas", "1", "2", "3")
        assert code == 0
        rows = csv_rows(out)
        assert rows[0] == ["lambda", "psi"]
        assert [float(r[1]) for r in rows[1:]] == [1.0, 2.0, 3.0]
        assert "A2 (Psi(1) > 0): holds" in out and "cramer_root: none" in out

    def test_brownian(self, capsys, brownian_file):
        _, out, _ = run(capsys, "psi", "--model", brownian_file, "--lambdas", "2")
        assert float(csv_rows(out)[1][1]) == 6.0

    def test_atom(self, capsys, atom_file):
        _, out, _ = run(capsys, "psi", "--model", atom_file, "--lambdas", "1")
        # 2 + (1/2 - 1 + ln 2)
        assert float(csv_rows(out)[1][1]) == pytest.approx(2.1931471805599454, rel=1e-15)


class TestMoments:
    def test_unit_drift(self, capsys, drift_file):
        code, out, _ = run(capsys, "moments", "--model", drift_file, "--n-max", "3")
        assert code == 0
        rows = list(csv.DictReader(out.splitlines()))
        assert [float(r["value"]) for r in rows] == [2.0, 4.0, 8.0]

    def test_time_zero_row(self, capsys, brownian_file):
        _, out, _ = run(capsys, "moments", "--model", brownian_file, "--z", "1.5", "--t", "0", "--n-max", "4")
        assert [float(r["value"]) for r in csv.DictReader(out.splitlines())] == [1.5 ** n for n in range(1, 5)]

    def test_zero_start(self, capsys, brownian_file, tmp_path):
        out_file = tmp_path / "m.json"
        code, _, _ = run(capsys, "moments", "--model", brownian_file, "--z", "0", "--n-max", "2", "--out",
                         str(out_file))
        doc = json.loads(out_file.read_text())
        assert code == 0 and doc["values"][1][0][0] == 6.0

    def test_a2_violation_exits_2(self, capsys, tmp_path):
        bad = write_model(tmp_path, {"gamma": -1.0, "sigma2": 0.0})
        code, _, err = run(capsys, "moments", "--model", bad)
        assert code == 2 and "error" in err

    def test_bad_model_exits_2(self, capsys, tmp_path):
        bad = write_model(tmp_path, {"gamma": 1.0, "sigma2": -1.0})
        assert run(capsys, "psi", "--model", bad)[0] == 2
        missing = str(tmp_path / "nope.json")
        assert run(capsys, "psi", "--model", missing)[0] == 2


class TestSimulate:
    def test_deterministic_summary(self, capsys, drift_file, tmp_path):
        out = tmp_path / "run"
        code, text, _ = run(capsys, "simulate", "--model", drift_file, "--z", "1.5", "--horizon", "2", "--paths",
                            "20", "--seed", "3", "--out", str(out))
        assert code == 0 and "mean=" in text
        s = json.loads((out / "summary.json").read_text())
        assert s["mean"] == pytest.approx(3.5, rel=1e-10)
        assert s["variance"] == 0.0
        side = json.loads((out / "paths.json").read_text())
        assert side["seed"] == 3 and side["scheme"].startswith("sde") and "config_digest" in side
        rows = list(csv.reader((out / "path_00000.csv").open()))
        assert rows[0] == ["t", "Z"] and float(rows[-1][1]) == pytest.approx(3.5)
        assert (out / "events_00004.csv").exists() and not (out / "path_00005.csv").exists()

    def test_lamperti_zero_start(self, capsys, brownian_file, tmp_path):
        code, _, err = run(capsys, "simulate", "--model", brownian_file, "--scheme", "lamperti", "--z", "0",
                           "--seed", "1", "--out", str(tmp_path / "o"))
        assert code == 2 and "sde" in err

    def test_needs_out(self, capsys, brownian_file):
        assert run(capsys, "simulate", "--model", brownian_file, "--seed", "1")[0] == 2

    @pytest.mark.parametrize("scheme", ["sde", "lamperti"])
    def test_reruns_byte_identical(self, capsys, atom_file, tmp_path, scheme):
        dirs = []
        for name in ("a", "b"):
            d = tmp_path / f"{scheme}{name}"
            run(capsys, "simulate", "--model", atom_file, "--scheme", scheme, "--paths", "300", "--seed", "11",
                "--dt", "0.01", "--out", str(d))
            dirs.append(d)
        files = sorted(p.name for p in dirs[0].iterdir())
        assert files == sorted(p.name for p in dirs[1].iterdir())
        for f in files:
            assert (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()


class TestVerify:
    def test_moments_pass(self, capsys, brownian_file, tmp_path):
        out = tmp_path / "r.json"
        code, text, _ = run(capsys, "verify", "--model", brownian_file, "--suite", "moments", "--paths", "4000",
                            "--seed", "2", "--dt", "0.002", "--out", str(out))
        assert code == 0 and "PASS" in text
        doc = json.loads(out.read_text())
        assert doc["exit_code"] == 0 and len(doc["cells"]) == 2

    def test_moments_fail_exit_1(self, capsys, brownian_file):
        # a tiny k rejects any honest estimate
        code, text, _ = run(capsys, "verify", "--model", brownian_file, "--suite", "moments", "--paths", "2000",
                            "--seed", "2", "--dt", "0.01", "--k", "1e-6")
        assert code == 1 and "FAIL" in text

    def test_scaling_needs_no_seed(self, capsys, atom_file):
        code, text, _ = run(capsys, "verify", "--model", atom_file, "--suite", "scaling", "--n-max", "10")
        assert code == 0 and "PASS" in text

    def test_martingale(self, capsys, atom_file):
        code, text, _ = run(capsys, "verify", "--model", atom_file, "--suite", "martingale", "--paths", "2000",
                            "--seed", "5", "--dt", "0.002")
        assert code == 0 and "M3" in text

    def test_cross(self, capsys, brownian_file):
        code, _, _ = run(capsys, "verify", "--model", brownian_file, "--suite", "cross", "--paths", "2000",
                         "--seed", "5", "--dt", "0.005")
        assert code == 0

    def test_cross_refuses_hitting_model(self, capsys, tmp_path):
        m = write_model(tmp_path, {"gamma": 1.0, "sigma2": 0.5, "jumps": {"atoms": [[-2.0, 1.0]]}})
        code, _, err = run(capsys, "verify", "--model", m, "--suite", "cross", "--paths", "10", "--seed", "1")
        assert code == 2 and "zero" in err

    def test_missing_seed(self, capsys, brownian_file):
        code, _, err = run(capsys, "verify", "--model", brownian_file, "--suite", "moments")
        assert code == 2 and "seed" in err

    def test_unknown_flag(self, brownian_file):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "--model", brownian_file, "--suite", "moments", "--seed", "1", "--bogus"])
        assert exc.value.code == 2

    def test_abbreviations_rejected(self, brownian_file):
        with pytest.raises(SystemExit):
            main(["verify", "--model", brownian_file, "--suite", "moments", "--see", "1"])
