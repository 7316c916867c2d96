import json
import subprocess
import sys

import pytest

from dgmvp.cli import main


def test_enumerate(capsys):
    assert main(["enumerate", "--n", "4", "--l", "3"]) == 0
    assert "feasible=120" in capsys.readouterr().out
    assert main(["enumerate", "--n", "2", "--l", "2", "--list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5


def test_verify_identities_json(capsys):
    assert main(["verify-identities", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert all(r["pass"] for r in data)


def test_run_fit_replay(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": [2, 3], "l": [1, 2], "p": [1], "instances": 2, "max_estimations": [30]}))
    out = tmp_path / "out"
    assert main(["run", "scaling", "--config", str(cfg), "--seed", "5", "--out", str(out)]) == 0
    assert (out / "records.csv").exists()
    capsys.readouterr()
    assert main(["fit", "--in", str(out / "plot_scaling.csv"), "--group", "maxbias"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["points"] == 4
    assert main(["fit", "--in", str(out / "plot_scaling.csv"), "--y", "no_such_column"]) == 2
    assert "no_such_column" in capsys.readouterr().err
    assert main(["replay", str(out), "--unit", "1"]) == 0
    assert "identical" in capsys.readouterr().out


def test_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"wrong_key": 1}))
    assert main(["run", "scaling", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "no-such-preset"])


def test_console_script_module():
    out = subprocess.run([sys.executable, "-m", "dgmvp.cli", "enumerate", "--n", "1", "--l", "3"],
                         capture_output=True, text=True, check=True)
    assert "feasible=1" in out.stdout
