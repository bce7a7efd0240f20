import json

import pytest

from convex_margins.cli import main


@pytest.fixture
def files(tmp_path):
    data = tmp_path / "d.csv"
    model = tmp_path / "m.json"
    assert main(["synth", "--kind", "two_gaussians", "--n", "60", "--seed", "1", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--rounds", "8", "--out", str(model)]) == 0
    return tmp_path, data, model


class TestCli:
    def test_margins(self, files, capsys):
        _, data, model = files
        assert main(["margins", "--model", str(model), "--data", str(data), "--grid", "linear:0.5"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "delta,margin_cdf" and len(out) == 3

    @pytest.mark.parametrize("measure", ["variance", "clusters", "covering", "sparsity"])
    def test_complexity(self, files, measure):
        tmp, data, model = files
        out, doc = tmp / "c.csv", tmp / "c.json"
        args = ["complexity", "--model", str(model), "--data", str(data), "--measure", measure,
                "--m-max", "2", "--out", str(out), "--doc", str(doc)]
        assert main(args) == 0
        assert out.read_text().count("\n") > 1
        if measure in ("clusters", "covering"):
            json.loads(doc.read_text())

    def test_bounds(self, files):
        tmp, data, model = files
        out = tmp / "b.json"
        assert main(["bounds", "--model", str(model), "--train", str(data), "--test", str(data),
                     "--which", "kp_nolog,gamma_dim", "--grid", "dyadic:4", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert [b["bound_name"] for b in doc["bounds"]] == ["kp_nolog", "gamma_dim"]
        assert "test_error" in doc

    @pytest.mark.parametrize("check", ["maurey", "cluster-variance", "sigma-hat", "bernstein"])
    def test_verify(self, files, check):
        tmp, data, model = files
        out = tmp / "v.json"
        assert main(["verify", "--model", str(model), "--data", str(data), "--check", check,
                     "--samples", "200", "--gamma", "0.25", "--delta", "0.25", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["check"] == check

    def test_experiment_and_plot(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 50, "rounds": 5, "bounds": ["kp_nolog"], "delta_kmax": 4}))
        rep = tmp_path / "r.json"
        assert main(["experiment", "--config", str(cfg), "--seed", "3", "--out", str(rep)]) == 0
        assert json.loads(rep.read_text())["config"]["seed"] == 3
        assert main(["plot-data", "--report", str(rep), "--which", "margin", "--out-dir", str(tmp_path / "p")]) == 0
        assert (tmp_path / "p" / "margin.csv").exists()

    def test_bad_input_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,label\n1,3\n")
        assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 2
        assert "row 1" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["margins", "--model", str(tmp_path / "none.json"), "--data", str(tmp_path / "x.csv")]) == 2

    def test_bad_grid_exit_2(self, files):
        _, data, model = files
        assert main(["margins", "--model", str(model), "--data", str(data), "--grid", "cubic"]) == 2
