import json
import math

import numpy as np
import pytest

from cgnc_recourse.cli import EXIT_INPUT, EXIT_OK, EXIT_PRECONDITION, check_report, main
from cgnc_recourse.cgnc import make_model
from cgnc_recourse.data import write_csv
from cgnc_recourse.experiment import load_dataset
from cgnc_recourse.model_io import save_model
from cgnc_recourse.structure import structure_nb

from conftest import one_d_model


@pytest.fixture
def one_d_file(tmp_path):
    path = tmp_path / "one_d.json"
    save_model(one_d_model(), path)
    return str(path)


class TestFit:
    def test_tan_banknote(self, capsys, tmp_path):
        out = tmp_path / "m.json"
        assert main(["fit", "--data", "builtin:banknote_like", "--structure", "tan", "--out", str(out)]) == EXIT_OK
        assert "4 nodes, 3 edges" in capsys.readouterr().out
        assert json.loads(out.read_text())["n"] == 4

    def test_nb_pima(self, capsys):
        assert main(["fit", "--data", "builtin:pima_like", "--structure", "nb"]) == EXIT_OK
        assert "8 nodes, 0 edges" in capsys.readouterr().out

    def test_csv_round_trip(self, capsys, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(load_dataset("builtin:banknote_like"), path)
        assert main(["fit", "--data", str(path), "--structure", "tan"]) == EXIT_OK
        assert "4 nodes, 3 edges" in capsys.readouterr().out

    def test_missing_file(self, capsys, tmp_path):
        assert main(["fit", "--data", str(tmp_path / "nope.csv")]) == EXIT_INPUT
        assert capsys.readouterr().err

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--data", "x.csv", "--structure", "forest"])
        assert exc.value.code == EXIT_INPUT


class TestExplain:
    def test_one_d_local(self, capsys, one_d_file):
        code = main(["explain", "--model", one_d_file, "--x", "0", "--gamma", "0.01", "--backend", "local"])
        assert code == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["outcome"] == "robust" and doc["iterations"] <= 3
        assert doc["counterfactual"][0] == pytest.approx(1.01, abs=1e-4)

    def test_precondition_exit(self, capsys, one_d_file):
        assert main(["explain", "--model", one_d_file, "--x", "2.5", "--backend", "local"]) == EXIT_PRECONDITION
        assert "precondition" in capsys.readouterr().err

    def test_dump_lp_and_out(self, tmp_path, one_d_file):
        lp_dir, out = tmp_path / "lp", tmp_path / "r.json"
        code = main(["explain", "--model", one_d_file, "--x", "0", "--gamma", "0.01", "--backend", "milp",
                     "--dump-lp", str(lp_dir), "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        names = {p.name for p in lp_dir.iterdir()}
        for t in range(1, doc["iterations"] + 1):
            assert f"mp_t{t}.lp" in names and f"ap_t{t}.lp" in names

    def test_row_needs_data(self, capsys, one_d_file):
        assert main(["explain", "--model", one_d_file, "--row", "0"]) == EXIT_INPUT

    def test_missing_model(self, tmp_path):
        assert main(["explain", "--model", str(tmp_path / "m.json"), "--x", "0"]) == EXIT_INPUT


class TestCheck:
    def test_one_d_bounds(self, capsys, one_d_file):
        assert main(["check", "--model", one_d_file, "--radius", "3"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["G"] == pytest.approx(8.0)
        assert doc["T"] == pytest.approx(24000.0)
        assert doc["spectrum_hessian"] == pytest.approx([0.0], abs=1e-12)
        assert doc["R_raw"] is None

    def test_symmetric_model(self):
        m = make_model(structure_nb(3), None, np.ones((2, 3)), [[1, 2, 3], [1, 2, 3]])
        doc = check_report(m, 2.0)
        assert np.allclose(doc["spectrum_hessian"], 0.0, atol=1e-12)
        assert math.isfinite(doc["G"]) and doc["G"] >= 0.0

    def test_fitted_model_self_checks(self, tmp_path, capsys):
        path = tmp_path / "m.json"
        main(["fit", "--data", "builtin:banknote_like", "--structure", "tan", "--out", str(path)])
        capsys.readouterr()
        assert main(["check", "--model", str(path), "--data", "builtin:banknote_like"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["gradient_fd_max_error"] < 1e-6
        assert doc["dual_form_max_discrepancy"] <= 1e-9
        assert doc["expanded_form_max_discrepancy"] <= 1e-9
        assert doc["T"] is None or math.isfinite(doc["T"])
        assert doc["R"] > 0 and doc["R_raw"] > 0

    def test_needs_radius(self, one_d_file):
        assert main(["check", "--model", one_d_file]) == EXIT_INPUT
