import json
import subprocess
import sys

import numpy as np
import pytest

from regensim.cli import RunSpec, compare_modes, main, run, sweep_lambda
from regensim.errors import ModeUnavailable, Unstable
from regensim.network import shipped_config


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_run_mm1(capsys):
    assert main(["run", "--config", "builtin:mm1", "--horizon", "1e5", "--seed", "7"]) == 0
    doc = _json(capsys)
    pooled = doc["results"][0]["pooled"]
    assert pooled["ci_low"] <= 1.0 <= pooled["ci_high"]
    assert doc["schema"] == 1 and doc["traffic"]["rho"] == [0.5]
    for key in ("N_cycles", "beta", "ci_halfwidth", "tavc", "avsde", "mode", "lambda_choices"):
        assert key in pooled


def test_run_is_deterministic(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert main(["run", "--config", "builtin:table1_surrogate", "--horizon", "2e4", "--seed", "3",
                     "--reps", "4", "--workers", "1", "--out", str(path)]) == 0
        outs.append(path.read_text())
    assert outs[0] == outs[1]


def test_parallel_matches_serial():
    cfg = shipped_config("table1_surrogate")
    a = run(RunSpec(cfg, 2e4, seed=5, reps=3, workers=1))
    b = run(RunSpec(cfg, 2e4, seed=5, reps=3, workers=2))
    assert a["results"] == b["results"]


def test_alternative_unavailable(capsys):
    assert main(["run", "--config", "builtin:table1_surrogate", "--mode", "alternative", "--horizon", "100"]) == 3
    assert "ModeUnavailable" in capsys.readouterr().err
    with pytest.raises(ModeUnavailable):
        compare_modes(RunSpec(shipped_config("table1_surrogate"), 100))


def test_unstable_refused(tmp_path, capsys):
    d = shipped_config("mm1").to_dict()
    d["classes"][0]["service"]["rate"] = 0.4
    path = tmp_path / "hot.json"
    path.write_text(json.dumps(d))
    assert main(["run", "--config", str(path), "--horizon", "100"]) == 4
    capsys.readouterr()
    assert main(["run", "--config", str(path), "--horizon", "500", "--allow-unstable"]) == 0
    assert _json(capsys)["traffic"]["stable"] is False


def test_bad_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["validate", "--config", str(path)]) == 2


def test_cycles_csv(tmp_path, capsys):
    path = tmp_path / "cycles.csv"
    assert main(["run", "--config", "builtin:mm1", "--horizon", "1000", "--reps", "2", "--cycles-csv", str(path)]) == 0
    doc = _json(capsys)
    rows = path.read_text().splitlines()
    assert rows[0] == "replication,index,T,tau,R"
    n = sum(r["N_cycles"] for r in doc["results"][0]["replications"])
    assert len(rows) == n + 1
    first = rows[1].split(",")
    assert first[:3] == ["1", "1", "0.0"]


def test_validate(capsys):
    assert main(["validate", "--config", "builtin:table1_surrogate"]) == 0
    assert _json(capsys)["ok"] is True
    assert main(["validate", "--config", "builtin:table1_surrogate", "--mode", "alternative"]) == 1
    doc = _json(capsys)
    assert [c["class"] for c in doc["checks"] if c["ok"] is False] == [1]


def test_verify_mm1(capsys):
    assert main(["verify", "--config", "builtin:mm1", "--horizon", "1e5", "--seed", "2", "--samples", "20000"]) == 0
    doc = _json(capsys)
    names = [c["check"] for c in doc["checks"]]
    assert names == ["decomposition_law", "analytic_mean"]
    assert doc["passed"]


def test_sweep_shape(capsys):
    assert main(["sweep-lambda", "--config", "builtin:table1_surrogate", "--horizon", "2e4", "--factors", "2,1"]) == 0
    doc = _json(capsys)
    assert [r["factor"] for r in doc["table"]] == [2.0, 1.0]
    lam = [r["lambda_choices"]["class 2"]["factor"] for r in doc["results"]]
    assert lam == pytest.approx([2.0, 1.0])
    with pytest.raises(ValueError):
        sweep_lambda(RunSpec(shipped_config("mm1"), 100), [0.5])


def test_compare_modes_shape():
    doc = compare_modes(RunSpec(shipped_config("table1_class1_exp"), 2e4, seed=1))
    assert [r["mode"] for r in doc["table"]] == ["primary", "alternative"]
    assert doc["results"][1]["pooled"]["delay_prefix"] > 0


def test_h_and_level_flags(capsys):
    assert main(["run", "--config", "builtin:mm1", "--horizon", "2e4", "--h", "indicator:0", "--level", "0.9"]) == 0
    pooled = _json(capsys)["results"][0]["pooled"]
    # P(busy) = rho = 0.5
    assert abs(pooled["beta"] - 0.5) < 0.05
    assert pooled["z"] == pytest.approx(1.6448536, abs=1e-6)


def test_lambda_flag(capsys):
    assert main(["run", "--config", "builtin:table1_surrogate", "--horizon", "1e3", "--lambda", "scale:1.5"]) == 0
    lam = _json(capsys)["results"][0]["lambda_choices"]
    assert lam["class 2"]["factor"] == pytest.approx(1.5)
    with pytest.raises(SystemExit):
        main(["run", "--config", "builtin:mm1", "--lambda", "bogus"])


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "regensim.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
