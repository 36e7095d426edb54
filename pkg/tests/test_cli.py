import csv
import io
import json
import math

import numpy as np
import pytest

from delaygbm.cli import main


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def rows(text):
    return list(csv.reader(io.StringIO(text)))


class TestRegion:
    def test_all_kinds(self, tmp_path):
        path = tmp_path / "region.csv"
        code, _, _ = run(["region", "--tau-min", "0", "--tau-max", "0.7", "--n-points", "200",
                          "--out", str(path)])
        assert code == 0
        table = rows(path.read_text())
        assert table[0] == ["tau", "sigma_asymptotic", "sigma_ehs", "sigma_exponential"]
        body = np.array(table[1:], dtype=float)
        assert body.shape == (200, 4)
        assert body[0, 1] == pytest.approx(1.4142136, abs=1e-7)
        assert np.all(body[body[:, 0] >= 1 / math.e, 3] == 0)
        doc = json.loads((tmp_path / "region.csv.json").read_text())
        assert doc["schema"] == 1 and doc["manifest"]["subcommand"] == "region"

    def test_two_points(self):
        code, out, _ = run(["region", "--kinds", "asymptotic", "--tau-min", "0", "--tau-max", "1",
                            "--n-points", "2"])
        assert code == 0
        table = rows(out)
        assert table == [["tau", "sigma_asymptotic"], ["0", "1.4142135623730951"], ["1", "0"]]

    def test_seventeen_digits(self):
        _, out, _ = run(["region", "--kinds", "asymptotic", "--tau-min", "0.1", "--tau-max", "0.2",
                         "--n-points", "2"])
        value = rows(out)[1][1]
        assert float(value) == math.sqrt(1.9) - math.sqrt(0.1)

    def test_bad_points(self):
        assert run(["region", "--n-points", "1"])[0] == 2

    def test_unwritable(self, tmp_path):
        code, _, err = run(["region", "--out", str(tmp_path / "missing" / "x.csv")])
        assert code == 3 and "I/O" in err


class TestSimulate:
    def test_verdict(self, tmp_path):
        path = tmp_path / "sim.csv"
        code, _, _ = run(["simulate", "--tau", "0.1", "--sigma", "0.5", "--n-paths", "500",
                          "--T", "2", "--out", str(path)])
        assert code == 0
        verdict = json.loads((tmp_path / "sim.csv.json").read_text())["verdict"]
        assert verdict["asymptotic_ok"] and verdict["exponential_ok"] and verdict["appleby_ok"]
        assert verdict["witness_mu"] > 1
        assert verdict["fitted_rate"] < 0
        assert isinstance(verdict["monotone"], bool)

    def test_no_noise(self):
        code, out, _ = run(["simulate", "--tau", "0", "--sigma", "0", "--dt", "0.001", "--T", "1",
                            "--n-paths", "3"])
        assert code == 0
        body = np.array(rows(out)[1:], dtype=float)
        np.testing.assert_allclose(body[:, 1], np.exp(-2 * body[:, 0]) / 2, atol=1e-3)

    def test_mean_square_column(self):
        _, out, _ = run(["simulate", "--tau", "0", "--sigma", "0", "--T", "0.01", "--n-paths", "1",
                         "--mean-square"])
        table = rows(out)
        assert table[0][1] == "Ew2" and float(table[1][1]) == 1.0

    def test_byte_identical(self, tmp_path):
        args = ["simulate", "--tau", "0.2", "--sigma", "0.8", "--n-paths", "300", "--T", "1",
                "--seed", "77"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(args + ["--out", str(a)])
        run(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_replay(self, tmp_path):
        a = tmp_path / "a.csv"
        run(["simulate", "--tau", "0.2", "--sigma", "0.8", "--n-paths", "300", "--T", "1",
             "--seed", "5", "--out", str(a)])
        b = tmp_path / "b.csv"
        assert run(["replay", str(tmp_path / "a.csv.json"), "--out", str(b)])[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_divisor(self):
        code, _, err = run(["simulate", "--tau", "0.1", "--sigma", "0.5", "--dt-divisor", "0"])
        assert code == 2

    def test_missing_flag(self):
        assert run(["simulate", "--tau", "0.1"])[0] == 2


class TestFundamental:
    def test_stable(self):
        code, out, err = run(["fundamental", "--tau", "0.2", "--horizon", "4"])
        assert code == 0
        doc = json.loads(err)["result"]
        assert doc["regime"] == "monotone_stable" and doc["sign_changes"] == 0
        assert doc["l2_norm_sq"] == pytest.approx((1 + math.sin(0.2)) / (2 * math.cos(0.2)), abs=1e-9)
        body = np.array(rows(out)[1:], dtype=float)
        assert body[0, 1] == 1.0
        i = np.argmin(np.abs(body[:, 0] - 0.4))
        assert body[i, 1] == pytest.approx(0.8)

    def test_oscillatory(self):
        _, _, err = run(["fundamental", "--tau", "0.5", "--horizon", "20"])
        doc = json.loads(err)["result"]
        assert doc["regime"] == "oscillatory_stable" and doc["sign_changes"] >= 2

    def test_divergent_is_an_answer(self):
        code, _, err = run(["fundamental", "--tau", "1.6", "--horizon", "10"])
        assert code == 0
        doc = json.loads(err)["result"]
        assert doc["divergent"] and doc["l2_norm_sq"] is None and doc["regime"] == "unstable"


class TestVerify:
    def test_coarse_grid(self, tmp_path):
        path = tmp_path / "report.json"
        code, _, _ = run(["verify", "--tau", "0", "1", "5", "--sigma", "0", "1.4", "5",
                          "--n-paths", "200", "--T", "3", "--out", str(path)])
        assert code == 0
        report = json.loads(path.read_text())["report"]
        s = report["summary"]
        assert s["n_points"] == 25
        assert s["asymptotic_not_appleby"] == 0
        assert s["exponential_not_asymptotic"] == 0
        assert s["exponential_not_appleby"] == 0

    def test_empty(self):
        code, out, _ = run(["verify", "--tau", "0", "1", "0", "--sigma", "0", "1", "0"])
        assert code == 0
        report = json.loads(out)["report"]
        assert report["points"] == [] and report["summary"]["n_points"] == 0

    def test_single_point(self):
        _, out, _ = run(["verify", "--tau", "0.4", "0.4", "1", "--sigma", "0.1", "0.1", "1",
                         "--n-paths", "0"])
        point = json.loads(out)["report"]["points"][0]
        assert point["exponential_ok"] is False and point["asymptotic_ok"] is True

    def test_out_of_range(self):
        assert run(["verify", "--tau", "0", "3", "2"])[0] == 2
