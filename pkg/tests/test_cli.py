import csv
import json

import numpy as np
import pytest

from zisv.cli import main
from zisv.config import RunConfig, read_config
from zisv.exceptions import ConfigError

FAST = ["--n-iter", "60", "--burn-in", "20", "--thin", "4"]


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture()
def panel_csv(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out), "--seed", "3", "--T", "24", "--K", "2",
                 "--zero-prevalence", "0.5,0.1", "--theta0", "1.0"]) == 0
    return out / "panel.csv"


# config ------------------------------------------------------------------------------

def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("model = zucsv  # univariate\nseed = 4\nbetas = 50, 90\n")
    vals = read_config(p)
    assert vals == {"model": "zucsv", "seed": 4, "betas": (50.0, 90.0)}
    cfg = RunConfig.build(vals, {"seed": "9"})
    assert cfg["seed"] == 9 and cfg["n_iter"] == 12000


@pytest.mark.parametrize("text,msg", [("colour = red\n", "unknown"), ("[extra]\nseed = 1\n", "flat"),
                                      ("seed = x\n", "seed"), ("model = var\n", "model"),
                                      ("burn_in = 20000\n", "burn_in")])
def test_config_rejections(tmp_path, text, msg):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        RunConfig.build(read_config(p))


def test_hyper_from_config():
    cfg = RunConfig.build({}, {"nu_pi": "7", "c_prior_mean": "identity", "n_iter": "100", "burn_in": "0"})
    hp = cfg.hyper("zmucsv", 3)
    assert hp.nu_pi == 7 and hp.schedule.n_iter == 100
    assert np.array_equal(hp.resolve(3).c_mean, np.eye(3))
    assert cfg.hyper("ucsv", 3).pi_shape == 11.0


# simulate ------------------------------------------------------------------------------

def test_simulate_outputs_and_prevalence(tmp_path):
    out = tmp_path / "s"
    assert main(["simulate", "--out", str(out), "--seed", "1", "--T", "400", "--zero-prevalence", "0.3"]) == 0
    rows = _csv(out / "panel.csv")
    vals = np.array([float(r["y1"]) for r in rows])
    assert len(rows) == 400 and abs(np.mean(vals == 0) - 0.3) < 0.05
    truth = _csv(out / "truth.csv")
    assert {r["name"] for r in truth} == {"theta", "h", "pi", "ystar", "p", "gamma"}


def test_simulate_all_zero_and_iid(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "z"), "--seed", "2", "--T", "50",
                 "--zero-prevalence", "1"]) == 0
    assert all(float(r["y1"]) == 0.0 for r in _csv(tmp_path / "z" / "panel.csv"))
    assert main(["simulate", "--out", str(tmp_path / "g"), "--seed", "2", "--T", "4000", "--sigma2-theta", "0",
                 "--sigma2-h", "0", "--zero-prevalence", "0", "--theta0", "1.5", "--h0", "0.6931471805599453"]) == 0
    v = np.array([float(r["y1"]) for r in _csv(tmp_path / "g" / "panel.csv")])
    assert abs(v.mean() - 1.5) < 4 * np.sqrt(2 / v.size)
    assert abs(v.var() - 2.0) < 4 * 2 * np.sqrt(2 / v.size)


# fit / forecast ----------------------------------------------------------------------------

def test_fit_forecast_round_trip_and_determinism(tmp_path, panel_csv):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["fit", "--data", str(panel_csv), "--out", str(out), "--seed", "5", "--chains", "2",
                     "--model", "zmucsv", *FAST]) == 0
    for name in ("draws_chain1.csv", "draws_chain2.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "draws_chain1.csv").read_bytes() != (a / "draws_chain2.csv").read_bytes()
    rows = _csv(a / "summary.csv")
    assert {"p_mean", "p_q05", "p_q95", "theta_mean", "vol_mean"} <= set(rows[0])
    assert all(float(r["p_q05"]) <= float(r["p_mean"]) <= float(r["p_q95"]) for r in rows)
    man = json.loads((a / "fit.manifest.json").read_text())
    assert man["config"]["seed"] == 5 and str(panel_csv) in man["inputs"]

    for out in ("f1", "f2"):
        assert main(["forecast", "--draws", str(a), "--out", str(tmp_path / out), "--seed", "1",
                     "--horizon", "3"]) == 0
    f = _csv(tmp_path / "f1" / "forecast.csv")
    assert len(f) == 2 * 3 * 9
    assert all(float(r["lower"]) <= float(r["median"]) or float(r["beta"]) < 50 for r in f)
    assert (tmp_path / "f1" / "forecast.csv").read_bytes() == (tmp_path / "f2" / "forecast.csv").read_bytes()


def test_fit_plain_model_leaves_p_blank(tmp_path, panel_csv):
    assert main(["fit", "--data", str(panel_csv), "--out", str(tmp_path / "u"), "--seed", "1",
                 "--model", "ucsv", *FAST]) == 0
    rows = _csv(tmp_path / "u" / "summary.csv")
    assert rows[0]["p_mean"] == "" and rows[0]["theta_mean"] != ""


def test_threads_do_not_change_outputs(tmp_path, panel_csv, monkeypatch):
    monkeypatch.setenv("ZISV_THREADS", "2")
    assert main(["fit", "--data", str(panel_csv), "--out", str(tmp_path / "p"), "--seed", "5", "--chains", "2",
                 "--model", "zucsv", *FAST]) == 0
    monkeypatch.delenv("ZISV_THREADS")
    assert main(["fit", "--data", str(panel_csv), "--out", str(tmp_path / "s"), "--seed", "5", "--chains", "2",
                 "--model", "zucsv", "--threads", "1", *FAST]) == 0
    assert (tmp_path / "p" / "summary.csv").read_bytes() == (tmp_path / "s" / "summary.csv").read_bytes()
    assert json.loads((tmp_path / "p" / "fit.manifest.json").read_text())["config"]["threads"] == 2


# evaluate ------------------------------------------------------------------------------------

def test_evaluate_windows(tmp_path, panel_csv):
    out = tmp_path / "e"
    assert main(["evaluate", "--data", str(panel_csv), "--out", str(out), "--seed", "2", "--window0", "16",
                 "--horizon", "4", *FAST]) == 0
    man = json.loads((out / "evaluate.manifest.json").read_text())
    assert man["windows"] == [[16, 20], [20, 24]]
    assert {r["model"] for r in _csv(out / "calibration.csv")} == {"zmucsv", "mucsv"}


# geweke ----------------------------------------------------------------------------------------

def test_geweke_command(tmp_path):
    args = ["geweke", "--model", "zucsv", "--seed", "3", "--sweeps", "20000", "--marginal", "50000"]
    assert main([*args, "--out", str(tmp_path / "g1")]) == 0
    assert main([*args, "--out", str(tmp_path / "g2")]) == 0
    assert (tmp_path / "g1" / "geweke.csv").read_bytes() == (tmp_path / "g2" / "geweke.csv").read_bytes()
    assert main([*args, "--out", str(tmp_path / "g3"), "--mutate", "true"]) == 1
    z = [abs(float(r["z"])) for r in _csv(tmp_path / "g3" / "geweke.csv")]
    assert max(z) > 10


# errors ------------------------------------------------------------------------------------------

def test_exit_codes(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path), "--seed", "1"]) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["simulate", "--out", str(tmp_path)]) == 2  # seed is mandatory
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--bogus", "1"])
    assert exc.value.code == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("time,a\nt1,1\nt2,x\n")
    assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "o"), "--seed", "1"]) == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("horizon = 4\n")
    assert main(["fit", "--config", str(cfg), "--data", str(bad), "--out", str(tmp_path), "--seed", "1"]) == 2


def test_sampler_failure_exit_code(tmp_path, panel_csv, monkeypatch):
    from zisv import forecast
    from zisv.exceptions import NumericalError

    def boom(*a, **k):
        raise NumericalError("non-finite state", iteration=3, block="trend")

    monkeypatch.setattr(forecast, "run_chain_mv", boom, raising=False)
    monkeypatch.setattr("zisv.zmucsv.run_chain_mv", boom)
    assert main(["fit", "--data", str(panel_csv), "--out", str(tmp_path / "x"), "--seed", "1", *FAST]) == 1
