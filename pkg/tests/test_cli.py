import json
import subprocess
import sys

import pytest

from synthcal.cli import render_table, run


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "d.json"
    assert run(["simulate", "--preset", "sharp-logistic", "--kappa", "10", "--m", "60",
                "--n", "200", "--k-max", "80", "--seed", "3", "--out", str(path)]) == 0
    return path


def _read(p):
    return json.loads(p.read_text())


def test_simulate_output(data):
    doc = _read(data)
    assert len(doc["questions"]) == 60 and doc["version"] == "1"
    assert len(doc["questions"][0]["synthetic_responses"]) == 80
    assert doc["simulation"]["source"] == {"kind": "mturk", "kappa": 10}


def test_calibrate_general_bernstein(data, tmp_path):
    out = tmp_path / "r.json"
    argv = ["calibrate", "--data", str(data), "--alpha", "0.05", "--gamma", "0.5", "--dilation",
            "2", "--budget", "80", "--method", "general", "--constructor", "bernstein",
            "--out", str(out)]
    assert run(argv) == 0
    doc = _read(out)
    (s,) = doc["summary"]
    assert s["kappa_hat"] == s["k_hat"] / 2 and s["threshold"] == pytest.approx(0.025)
    curve = [r for r in doc["rows"] if r["kind"] == "curve"]
    assert len(curve) == 81 and curve[0]["k"] == 0 and curve[0]["value"] == 0.0
    assert doc["config"]["constructor"] == "bernstein" and "out" not in doc["config"]


def test_calibrate_alpha_grid_and_csv(data, tmp_path):
    out, csv = tmp_path / "r.json", tmp_path / "r.csv"
    assert run(["calibrate", "--data", str(data), "--alpha-grid", "--constructor", "kl",
                "--out", str(out), "--csv", str(csv)]) == 0
    assert [s["alpha"] for s in _read(out)["summary"]] == [0.05, 0.1, 0.15, 0.2]
    assert csv.read_text().splitlines()[0] == "k,metric,value,split,question_id"


def test_evaluate(data, tmp_path):
    out = tmp_path / "e.json"
    assert run(["evaluate", "--data", str(data), "--splits", "5", "--train-frac", "0.6",
                "--seed", "7", "--alpha", "0.1", "--constructor", "kl", "--out", str(out)]) == 0
    doc = _read(out)
    kinds = [r["kind"] for r in doc["rows"]]
    assert kinds.count("split") == 5 and kinds.count("aggregate") == 6


def test_oracle_and_discrepancy(tmp_path):
    out = tmp_path / "o.json"
    assert run(["oracle", "--preset", "fixed-shift", "--dilation", "1", "--m", "1",
                "--mc-reps", "2000", "--k-max", "200", "--out", str(out)]) == 0
    cov = [r["value"] for r in _read(out)["rows"] if r["kind"] == "curve"]
    assert cov[0] == 1.0 and cov[200] < 0.05
    out2 = tmp_path / "q.json"
    assert run(["discrepancy", "--preset", "fixed-shift", "--m", "3", "--out", str(out2)]) == 0
    (row,) = _read(out2)["rows"]
    assert row["delta"] == pytest.approx(1 / 6)


def test_report(data, tmp_path, capsys):
    out = tmp_path / "r.json"
    run(["calibrate", "--data", str(data), "--alpha", "0.1", "--out", str(out)])
    capsys.readouterr()
    assert run(["report", "--data", str(out)]) == 0
    text = capsys.readouterr().out
    assert text == render_table(_read(out))
    assert "summary" in text and "curve (" in text and "k_hat=" in text


@pytest.mark.parametrize("argv", [["calibrate", "--out", "x.json"],
                                  ["calibrate", "--data", "d.json", "--bogus", "--out", "x"],
                                  ["nonsense"], []])
def test_usage_errors(argv, capsys):
    assert run(argv) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_domain_errors(data, tmp_path, capsys):
    assert run(["calibrate", "--data", str(tmp_path / "missing.json"), "--out", str(tmp_path / "r.json")]) == 1
    assert run(["calibrate", "--data", str(data), "--budget", "500", "--out", str(tmp_path / "r.json")]) == 1
    assert run(["report", "--data", str(tmp_path / "none.json")]) == 1
    assert "error" in capsys.readouterr().err


COMMANDS = {
    "calibrate": ["calibrate", "--data", "{data}", "--alpha", "0.1", "--constructor", "kl"],
    "evaluate": ["evaluate", "--data", "{data}", "--splits", "4", "--alpha", "0.1"],
    "simulate": ["simulate", "--m", "20", "--k-max", "30", "--seed", "2"],
    "oracle": ["oracle", "--m", "50", "--mc-reps", "20", "--k-max", "60", "--constructor", "kl"],
    "discrepancy": ["discrepancy", "--m", "50", "--kappa", "5"],
}


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_byte_identical_across_threads(name, data, tmp_path):
    outs = []
    for threads in ("1", "3", "1"):
        out = tmp_path / f"{name}-{len(outs)}.json"
        argv = [a.format(data=data) for a in COMMANDS[name]] + ["--threads", threads, "--out", str(out)]
        assert run(argv) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "synthcal", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synthcal" in proc.stdout
