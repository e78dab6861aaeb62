import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from resdens.cli import main, resolve_config
from resdens.errors import ConfigError
from resdens.montecarlo import SimConfig

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


def _read(path):
    return Path(path).read_text()


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    assert resolve_config(p) == SimConfig()
    p.write_text("{}")
    assert resolve_config(p) == SimConfig()


def test_flags_override_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n": 80, "eps-step": 0.1}))
    cfg = resolve_config(p, {"n": 50})
    assert cfg.n == 50 and cfg.eps_step == 0.1


def test_invalid_values_name_the_field(tmp_path):
    with pytest.raises(ConfigError) as err:
        resolve_config(None, {"eps_step": 0})
    assert err.value.field == "eps-step"
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError) as err:
        resolve_config(p)
    assert err.value.field == "bogus"
    p.write_text(json.dumps({"global_b1": {"start": 0.1, "step": -1, "count": 3}}))
    with pytest.raises(ConfigError) as err:
        resolve_config(p)
    assert err.value.field == "global-b1"


def test_eps_step_zero_writes_error_record(tmp_path):
    code = main(["grid-search", "--config", str(SMOKE), "--eps-step", "0", "--out", str(tmp_path)])
    assert code != 0
    err = json.loads(_read(tmp_path / "error.json"))
    assert err["field"] == "eps-step" and err["error"] == "ConfigError"


def test_rates_output(tmp_path, capsys):
    assert main(["rates", "--n", "200", "--d", "1", "--b1", "0.2", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["b0_star"] == pytest.approx(0.46233, abs=1e-4)
    assert out["b1_star"] == pytest.approx(200 ** -0.2)
    assert json.loads(_read(tmp_path / "rates.json")) == out
    manifest = json.loads(_read(tmp_path / "manifest.json"))
    assert manifest["subcommand"] == "rates" and manifest["output_paths"] == ["rates.json"]


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code != 0


def test_simulate_is_reproducible_from_its_manifest(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", str(SMOKE), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert main(["simulate", "--config", str(SMOKE), "--threads", "3", "--out", str(c)]) == 0
    manifest = json.loads(_read(a / "manifest.json"))
    expected = {"table5_1.json", "aise_surface_f1.csv", "aise_surface_f2.csv", "bands_f1.csv",
                "bands_f2.csv", "pointwise.json", "delta.json", "normality.json"}
    assert expected <= set(manifest["output_paths"])
    assert any(p.startswith("qq_") for p in manifest["output_paths"])
    for name in manifest["output_paths"] + ["manifest.json"]:
        assert _read(a / name) == _read(b / name) == _read(c / name), name
    header, first = _read(a / "aise_surface_f1.csv").splitlines()[:2]
    assert header == "b1,b0,value"
    assert all(float(v) == float(repr(float(v))) for v in first.split(","))


def test_grid_search_outputs(tmp_path):
    out = tmp_path / "gs"
    assert main(["grid-search", "--config", str(SMOKE), "--mode", "ase", "--eps", "0",
                 "--estimator", "f2", "--out", str(out)]) == 0
    opt = json.loads(_read(out / "optimum.json"))
    rows = np.loadtxt(out / "surface.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 3
    i = int(np.argmin(rows[:, 2]))
    assert (rows[i, 0], rows[i, 1]) == pytest.approx((opt["b1"], opt["b0"]))
    assert main(["grid-search", "--config", str(SMOKE), "--mode", "ase", "--out", str(out)]) == 2


def _data(tmp_path):
    rs = np.random.default_rng(0)
    x = rs.uniform(-1, 1, 80)
    e = rs.normal(size=80)
    p = tmp_path / "d.csv"
    np.savetxt(p, np.c_[x, 3 * x**2 + 2 * x + 1 + e, e], delimiter=",", header="x1,y,eps",
               comments="")
    return p


@pytest.mark.parametrize("est", ["f1", "f1-oracle", "f2", "f2-oracle", "conditional"])
def test_estimate_writes_curve(tmp_path, est):
    data = _data(tmp_path)
    out = tmp_path / "curve.csv"
    assert main(["estimate", "--estimator", est, "--data", str(data), "--b0", "0.4",
                 "--b1", "0.5", "--eps-min", "-3", "--eps-max", "3", "--eps-step", "0.5",
                 "--out", str(out)]) == 0
    lines = _read(out).splitlines()
    assert lines[0] == "eps,value" and len(lines) == 14
    vals = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    assert np.all(vals[:, 1] >= 0) and vals[:, 1].max() > 0.1
    assert (tmp_path / "curve.csv.manifest.json").exists()


def test_estimate_missing_bandwidth(tmp_path):
    data = _data(tmp_path)
    code = main(["estimate", "--estimator", "f1", "--data", str(data), "--b1", "0.5",
                 "--out", str(tmp_path / "c.csv")])
    assert code == 2
    assert json.loads(_read(tmp_path / "error.json"))["field"] == "b0"


def test_normality_subcommand(tmp_path, capsys):
    z = tmp_path / "z.csv"
    np.savetxt(z, np.random.default_rng(1).normal(0.5, 1, 100), header="z", comments="")
    assert main(["normality", "--input", str(z), "--mc-reps", "500", "--seed", "4",
                 "--out", str(tmp_path / "nm")]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert {"lilliefors", "ks_standard_normal", "ks_decision"} <= set(rec)
    qq = _read(tmp_path / "nm" / "qq.csv").splitlines()
    assert qq[0] == "theoretical,empirical" and len(qq) == 101


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RESDENS_THREADS", "x")
    assert main(["simulate", "--config", str(SMOKE), "--out", str(tmp_path)]) == 2
    assert json.loads(_read(tmp_path / "error.json"))["field"] == "threads"


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "resdens.cli", "rates", "--n", "400"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["n"] == 400
