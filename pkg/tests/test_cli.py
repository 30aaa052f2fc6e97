import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mbspovm.cli import main
from mbspovm.game import load_strategy, protocol_strategy, save_strategy, score, tables_to_csv
from mbspovm.quantum_core import matrix_to_json
from mbspovm.stats import golden_tables, load_counts


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_ok(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out), out


class TestScore:
    def test_builtin(self, capsys):
        doc, _ = run_ok(capsys, "score")
        assert doc["W"] == pytest.approx(62.6982, abs=1e-3)
        assert len(doc["proj"]) == 7

    def test_tables(self, capsys):
        doc, _ = run_ok(capsys, "score", "--tables", "builtin:experiment")
        assert doc["W"] == pytest.approx(62.6208, abs=5e-3)

    def test_csv_tables(self, capsys, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(tables_to_csv(golden_tables()["theory"]))
        doc, _ = run_ok(capsys, "score", "--tables", str(path))
        assert doc["sigma"] is None

    def test_strategy_file_round_trip(self, capsys, tmp_path):
        path = tmp_path / "s.json"
        save_strategy(protocol_strategy(), path)
        doc, _ = run_ok(capsys, "score", "--strategy", str(path))
        assert doc["W"] == score(protocol_strategy())

    def test_byte_identical(self, capsys):
        _, a = run_ok(capsys, "score")
        _, b = run_ok(capsys, "score")
        assert a == b


class TestErrors:
    def test_missing_file(self, capsys, tmp_path):
        code, out, err = run(capsys, "score", "--strategy", str(tmp_path / "nope.json"))
        assert code == 2 and out == ""
        assert json.loads(err)["error"] == "validation"

    def test_bad_json(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert run(capsys, "score", "--strategy", str(path))[0] == 2

    def test_invalid_config(self, capsys):
        assert run(capsys, "seesaw", "--restarts", "0")[0] == 2

    def test_solver_failure(self, capsys):
        with pytest.warns(Warning):
            code, _, err = run(capsys, "bound", "--samples", "60")
        assert code == 3
        doc = json.loads(err)
        assert doc["error"] == "solver_not_converged"
        assert "residuals" in doc

    def test_bad_seed_env(self, capsys, monkeypatch):
        monkeypatch.setenv("MBSPOVM_SEED", "abc")
        assert run(capsys, "seesaw", "--restarts", "1", "--max-iters", "2")[0] == 2


class TestSeesaw:
    def test_out_and_manifest(self, capsys, tmp_path):
        out = tmp_path / "best.json"
        doc, _ = run_ok(capsys, "seesaw", "--restarts", "2", "--max-iters", "30", "--seed", "4", "--out", str(out))
        assert doc["mode"] == "free" and doc["seed"] == 4
        assert score(load_strategy(out)) == pytest.approx(doc["score"], abs=1e-12)
        manifest = json.loads((tmp_path / "best.manifest.json").read_text())
        assert manifest["command"] == "seesaw"
        assert manifest["seed"] == 4 and manifest["wall_time_s"] >= 0
        assert manifest["outputs"] == [str(out)]

    def test_seed_env(self, capsys, monkeypatch):
        args = ("seesaw", "--restarts", "1", "--max-iters", "10")
        _, explicit = run_ok(capsys, *args, "--seed", "9")
        monkeypatch.setenv("MBSPOVM_SEED", "9")
        _, env = run_ok(capsys, *args)
        assert explicit == env

    def test_fixed_final_from_file(self, capsys, tmp_path):
        path = tmp_path / "p.json"
        save_strategy(protocol_strategy(), path)
        doc, _ = run_ok(capsys, "seesaw", "--mode", "fixed_final", "--restarts", "1", "--initial", str(path), "--final", str(path))
        assert doc["score"] >= score(protocol_strategy()) - 1e-9

    def test_byte_identical(self, capsys):
        args = ("seesaw", "--mode", "projective_relaxed", "--restarts", "2", "--max-iters", "20", "--seed", "1")
        assert run_ok(capsys, *args)[1] == run_ok(capsys, *args)[1]


class TestBound:
    def test_report(self, capsys, tmp_path):
        out = tmp_path / "bound.json"
        doc, _ = run_ok(capsys, "bound", "--seed", "0", "--out", str(out))
        assert doc["bound"] == pytest.approx(62.5152, abs=1e-3)
        assert doc["saturated"] and doc["matrix_size"] == 96
        assert json.loads(out.read_text()) == doc
        assert (tmp_path / "bound.manifest.json").exists()


class TestEnumerate:
    def test_builtin_u7(self, capsys, tmp_path):
        doc, _ = run_ok(capsys, "enumerate-povms", "--out", str(tmp_path))
        assert doc["count"] == 35
        assert doc["all_equivalent_to_builtin"]
        assert len(list(tmp_path.glob("povm_*.json"))) == 35
        assert (tmp_path / "manifest.json").exists()
        first = json.loads((tmp_path / "povm_1234.json").read_text())
        assert first["subset"] == [1, 2, 3, 4] and len(first["elements"]) == 7

    def test_u4(self, capsys, tmp_path):
        doc, _ = run_ok(capsys, "enumerate-povms", "--unitary", "builtin:U4", "--out", str(tmp_path))
        assert doc["count"] == 1

    def test_matrix_file(self, capsys, tmp_path, rng):
        from mbspovm.quantum_core import haar_unitary

        path = tmp_path / "u.json"
        path.write_text(json.dumps(matrix_to_json(haar_unitary(rng, 5))))
        doc, _ = run_ok(capsys, "enumerate-povms", "--unitary", str(path), "--dim", "2", "--out", str(tmp_path / "o"))
        assert doc["count"] == 10
        assert doc["max_completeness_residual"] < 1e-8

    def test_nonunitary_file_needs_cleanup(self, capsys, tmp_path, rng):
        path = tmp_path / "u.json"
        path.write_text(json.dumps(matrix_to_json(rng.standard_normal((5, 5)))))
        assert run(capsys, "enumerate-povms", "--unitary", str(path), "--out", str(tmp_path / "o"))[0] == 2
        doc, _ = run_ok(capsys, "enumerate-povms", "--unitary", str(path), "--nearest-unitary", "--out", str(tmp_path / "o"))
        assert doc["unitarity_deviation"] < 1e-12


class TestSimulateCertify:
    def test_pipeline(self, capsys, tmp_path):
        out = tmp_path / "counts.csv"
        doc, _ = run_ok(capsys, "simulate", "--visibility", "1.0", "--seed", "3", "--out", str(out))
        assert doc["settings"] == 56
        assert load_counts(out).metadata["seed"] == 3
        assert (tmp_path / "counts.manifest.json").exists()
        first = out.read_bytes()
        run_ok(capsys, "simulate", "--visibility", "1.0", "--seed", "3", "--out", str(out))
        assert out.read_bytes() == first
        cert, _ = run_ok(capsys, "certify", "--tables", str(out))
        assert cert["certified"] == (cert["p"] < 0.01)
        assert cert["W"] == pytest.approx(62.6982, abs=0.15)

    def test_certify_experiment(self, capsys):
        doc, _ = run_ok(capsys, "certify")
        assert doc["bound"] == 62.5152
        assert doc["z"] == pytest.approx(3.45, abs=0.05)
        assert doc["certified"]

    def test_certify_needs_sigmas(self, capsys):
        assert run(capsys, "certify", "--tables", "builtin:theory")[0] == 2


@pytest.mark.skipif(shutil.which("mbspovm") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["mbspovm", "certify"], capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["certified"]


def test_module_entry():
    res = subprocess.run([sys.executable, "-m", "mbspovm.cli", "score"], capture_output=True, text=True, check=True)
    assert np.isclose(json.loads(res.stdout)["W"], 62.6982, atol=1e-3)
