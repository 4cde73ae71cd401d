import json

import numpy as np
import pandas as pd
import pytest

from jumplab.cli import main


def _run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr()


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out-dir", str(out), "--count", "2", "--seed", "3", "--steps", "4680",
                 "--jumps", "sparse", "--intensity", "3"]) == 0
    return out


def _tick_file(path, rng, jump=0.0, flat=False, day="2024-03-01"):
    ts = pd.date_range(f"{day} 09:00:00", f"{day} 16:30:00", freq="5s")
    lp = np.log(100.0) + np.cumsum(rng.normal(0, 0.3 / np.sqrt(4680), ts.size))
    lp[ts.size // 2 :] += jump
    price = np.full(ts.size, 100.0) if flat else np.exp(lp)
    pd.DataFrame({"timestamp": ts.strftime("%Y-%m-%dT%H:%M:%S"), "price": price}).to_csv(path, index=False)


def test_simulate_writes_days(sim_dir):
    files = sorted(sim_dir.glob("*.csv"))
    assert len(files) == 2
    df = pd.read_csv(files[0])
    assert "observed" in df.columns and len(df) == 4681


def test_simulate_honours_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("JUMPLAB_SEED", "11")
    main(["simulate", "--out-dir", str(tmp_path / "a"), "--steps", "1000", "--seed", "1"])
    main(["simulate", "--out-dir", str(tmp_path / "b"), "--steps", "1000", "--seed", "2"])
    a = pd.read_csv(tmp_path / "a" / "day_0000.csv")
    b = pd.read_csv(tmp_path / "b" / "day_0000.csv")
    pd.testing.assert_frame_equal(a, b)


def test_test_prints_json_report(sim_dir, capsys):
    f = sorted(sim_dir.glob("*.csv"))[0]
    code, out = _run(capsys, ["test", "--input", str(f), "--method", "aj", "--method", "lm", "--method", "cc"])
    assert code == 0
    rep = json.loads(out.out)
    assert set(rep["tests"]) == {"aj", "lm", "cc"} and rep["n"] == 4680
    for t in rep["tests"].values():
        assert 0 <= t["pvalue"] <= 1 and isinstance(t["reject"], bool)


def test_test_bootstrap_lm(sim_dir, capsys):
    f = sorted(sim_dir.glob("*.csv"))[0]
    code, out = _run(capsys, ["test", "--input", str(f), "--method", "lm", "--calibration", "bootstrap", "--b1", "19"])
    rep = json.loads(out.out)["tests"]["lm"]
    assert code == 0 and rep["bootstrap_pvalue"] in {i / 20 for i in range(1, 21)}


def test_test_noisy_methods(tmp_path, capsys):
    out = tmp_path / "noisy"
    main(["simulate", "--out-dir", str(out), "--steps", "4680", "--horizon-days", "5", "--noise", "gaussian"])
    capsys.readouterr()
    code, res = _run(capsys, ["test", "--input", str(out / "day_0000.csv"), "--method", "pa", "--method", "la",
                              "--method", "ccn", "--pa-k", "50", "--pa-r", "500"])
    assert code == 0
    assert set(json.loads(res.out)["tests"]) == {"pa", "la", "ccn"}


def test_bad_input_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("when,what\n1,2\n")
    code, res = _run(capsys, ["test", "--input", str(bad)])
    assert code == 2 and "ParseError" in res.err


def test_experiment_writes_csv_and_sidecar(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"design": "SIZE_NULL", "methods": [{"name": "AJ"}, {"name": "LM", "calibration": "asymptotic"}],
                               "kernel_mc_paths": 1_000_000}))
    monkeypatch.setenv("JUMPLAB_SEED", "99")
    out = tmp_path / "res.csv"
    code, _ = _run(capsys, ["experiment", "--config", str(cfg), "--out", str(out), "--replications", "2"])
    assert code == 0
    t = pd.read_csv(out)
    assert len(t) == 2 and (t["replications"] == 2).all()
    meta = json.loads((tmp_path / "res.csv.json").read_text())
    assert meta["config"]["base_seed"] == 99


def test_ingest_then_select(tmp_path, capsys):
    rng = np.random.default_rng(5)
    raw = tmp_path / "raw"
    raw.mkdir()
    for i in range(4):
        _tick_file(raw / f"d{i}.csv", rng, jump=0.03 if i == 2 else 0.0, day=f"2024-03-0{i + 1}")
    _tick_file(raw / "flat.csv", rng, flat=True)
    reports = tmp_path / "rep"
    code, res = _run(capsys, ["ingest", str(raw), "--out-dir", str(reports), "--method", "cc"])
    assert code == 0 and "flat session" in res.err
    rep = json.loads((reports / "d0.json").read_text())
    assert rep["n"] == 4680 and rep["delta"] == pytest.approx(5 / 23400)
    code, res = _run(capsys, ["select", str(reports), "--q", "0.1"])
    assert code == 0 and json.loads(res.out)["selected"] == ["d2"]
