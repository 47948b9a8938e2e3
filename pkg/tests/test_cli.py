import csv
import json

import pytest

from lpminkowski import cli


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_check_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path / "pair.txt", "dim 1\natom 1 0 0.5\natom -1 0 0.5\n")
    assert cli.main(["check", "--measure", bad, "--alpha", "1"]) == 2
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] is False
    sq = _write(tmp_path / "square.txt",
                "dim 1\natom 1 0 1\natom 0 1 1\natom -1 0 1\natom 0 -1 1\n")
    assert cli.main(["check", "--measure", sq, "--alpha", "1"]) == 0


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["solve", "--alpha", "2", "--density", "cos2", "--resolution", "128",
                     "--out", str(out)])
    assert code == 0
    assert "status      ok" in capsys.readouterr().out
    for name in ("history.csv", "entropy_trace.csv", "body.csv", "report.json"):
        assert (out / name).exists()


def test_solve_violation_exit_code(tmp_path):
    bad = _write(tmp_path / "pair.txt", "dim 1\natom 1 0 0.5\natom -1 0 0.5\n")
    assert cli.main(["solve", "--alpha", "1", "--measure", bad, "--mollify", "8"]) == 2


def test_bad_input_exit_code(tmp_path):
    assert cli.main(["solve", "--alpha", "0.2"]) == 1
    assert cli.main(["check", "--measure", str(tmp_path / "missing.txt"), "--alpha", "1"]) == 1
    assert cli.main(["solve", "--alpha", "1", "--density", "nosuch"]) == 1
    with pytest.raises(SystemExit):
        cli.main(["solve"])


def test_sweep_jobs_expand():
    jobs = cli.sweep_jobs({"base": {"dim": 1}, "grid": {"alpha": [1, 2], "resolution": [64, 128]}})
    assert len(jobs) == 4
    assert jobs[0][2] == {"alpha": 1, "resolution": 64}
    with pytest.raises(ValueError):
        cli.sweep_jobs({"grid": {"speed": [1]}})


def test_sweep_summary(tmp_path):
    spec = {"base": {"density": "cos2", "resolution": 64, "tol": 1e-4},
            "grid": {"alpha": [1.0, 2.0, 0.2]}, "out": str(tmp_path / "sw"), "workers": 2}
    cfg = _write(tmp_path / "sweep.json", json.dumps(spec))
    code = cli.main(["sweep", "--config", cfg])
    assert code == 1  # alpha 0.2 is invalid input
    with open(tmp_path / "sw" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok", "ok", "invalid"]
    assert (tmp_path / "sw" / "run_000" / "report.json").exists()
    assert float(rows[0]["residual"]) <= 1e-3
