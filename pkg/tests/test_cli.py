import inspect
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cbgsense import cli, errors, sweep
from cbgsense.config import SIDECAR_NAME, parse_config
from cbgsense.io import read_grid

DATA = Path(__file__).resolve().parent.parent / "data"
COARSE = ["--set", "sim.spacing=50", "--set", "sim.ff_count=5", "--set", "sim.lateral_margin=1000",
          "--set", "sim.purcell=false"]


def _error(out: Path) -> dict:
    return json.loads((out / "error.json").read_text())["error"]


@pytest.fixture(scope="module")
def records(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--out-dir", str(out), "--set", "sim.duration=30000"] + COARSE) == 0
    return out / "records.npz"


@pytest.fixture(scope="module")
def bare_records(tmp_path_factory):
    out = tmp_path_factory.mktemp("bare")
    assert cli.main(["simulate", "--out-dir", str(out), "--no-farfield", "--set", "sim.duration=2000"] + COARSE) == 0
    return out / "records.npz"


def test_spectrum_outputs(records, tmp_path):
    assert cli.main(["spectrum", str(records), "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "wavelength_nm,value"
    lams = [float(x.split(",")[0]) for x in lines[1:]]
    assert lams == sorted(lams)
    rep = json.loads((tmp_path / "resonance.json").read_text())
    assert 700 < rep["resonance"]["wavelength_nm"] < 1000
    assert "window_limited" in rep


def test_farfield_outputs(records, tmp_path):
    assert cli.main(["farfield", str(records), "--out-dir", str(tmp_path), "--wavelength", "860"]) == 0
    grid = read_grid(tmp_path / "farfield.grid")
    side = json.loads((tmp_path / "farfield.grid.json").read_text())
    assert grid.data.shape == (len(side["theta_deg"]), len(side["phi_deg"]))
    assert side["theta_deg"][0] == 0 and side["theta_deg"][-1] == pytest.approx(90)
    assert (grid.data >= 0).all()
    eta = [float(x.split(",")[1]) for x in (tmp_path / "eta.csv").read_text().splitlines()[1:]]
    assert eta == sorted(eta) and eta[-1] == 1.0


def test_nearfield_outputs(records, tmp_path):
    assert cli.main(["nearfield", str(records), "--out-dir", str(tmp_path), "--wavelength", "860"]) == 0
    assert (tmp_path / "nearfield.csv").read_text().startswith("u_nm,v_nm,intensity")


@pytest.mark.parametrize("cmd", ["farfield", "nearfield"])
def test_missing_plane_monitor(bare_records, tmp_path, cmd):
    assert cli.main([cmd, str(bare_records), "--out-dir", str(tmp_path)]) == 1
    assert _error(tmp_path)["code"] == "E_NO_MONITOR"


def test_short_run_spectrum_is_domain_error(bare_records, tmp_path):
    assert cli.main(["spectrum", str(bare_records), "--out-dir", str(tmp_path)]) == 1
    assert _error(tmp_path)["code"] == "E_SERIES_TOO_SHORT"


def test_odmr_synth_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["odmr", "synth", "--seed", "7", "--out-dir", str(d)]) == 0
    for name in ("odmr.csv", "odmr-synth.json", SIDECAR_NAME):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    cli.main(["odmr", "synth", "--seed", "8", "--out-dir", str(c)])
    assert (c / "odmr.csv").read_bytes() != (a / "odmr.csv").read_bytes()


def test_odmr_synth_then_fit(tmp_path):
    assert cli.main(["odmr", "synth", "--seed", "3", "--out-dir", str(tmp_path)]) == 0
    assert cli.main(["odmr", "fit", str(tmp_path / "odmr.csv"), "--rate", "1e6", "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "odmr-fit.json").read_text())
    assert rep["fit"]["nu_minus"] == pytest.approx(3.3, rel=0.01)
    assert rep["sensitivity"]["eta_T_per_rtHz"] > 0
    for key in ("rate_counts_per_s", "gamma_e_mhz_per_mt", "prefactor", "contrast", "linewidth_ghz"):
        assert key in rep["inputs"]


def test_sense_steel(tmp_path):
    assert cli.main(["odmr", "sense-steel", str(DATA / "steel_shielding.csv"), "--out-dir", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "steel.json").read_text())["rows"]
    nine = next(r for r in rows if r["thickness_mm"] == 9.0)
    assert nine["delta_b_mt"] == pytest.approx(10.9, abs=0.05)


def test_sense_angle(tmp_path):
    assert cli.main(["odmr", "sense-angle", str(DATA / "rotation_series.csv"), "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "angle.json").read_text())
    assert rep["B_mt"] == pytest.approx(8.0, rel=0.02)


def test_wrong_scenario_kind_is_usage_error(tmp_path):
    assert cli.main(["odmr", "sense-angle", str(DATA / "steel_shielding.csv"), "--out-dir", str(tmp_path)]) == 2


def test_sidecar_reparses(tmp_path):
    args = ["--set", "design.R=700", "--set", "odmr.points=51", "--seed", "4"]
    assert cli.main(["odmr", "synth", "--out-dir", str(tmp_path)] + args) == 0
    sidecars = list(tmp_path.glob("*config*"))
    assert [p.name for p in sidecars] == [SIDECAR_NAME]
    assert parse_config(sidecars[0]) == parse_config(None, ["design.R=700", "odmr.points=51", "seed=4"])


def test_sweep_commands(tmp_path, monkeypatch):
    from test_sweep import fake_evaluator

    real = sweep.evaluate

    def fake(job, preset, objective, evaluator, attempts):
        return real(job, preset, objective, fake_evaluator, attempts)
    monkeypatch.setattr(sweep, "evaluate", fake)
    base = ["--out-dir", str(tmp_path), "--set", "sweep.axes.R=[600, 645, 700]", "--set", "sweep.axes.t=[200]"]
    assert cli.main(["sweep", "run", "--control"] + base) == 0
    store = tmp_path / "results.jsonl"
    n = len(store.read_text().splitlines())
    assert n == 4
    assert cli.main(["sweep", "run", "--control"] + base) == 0
    assert len(store.read_text().splitlines()) == n
    assert cli.main(["sweep", "export", str(store), "--out-dir", str(tmp_path)]) == 0
    assert cli.main(["sweep", "rank", str(store), "--out-dir", str(tmp_path)]) == 0
    ranked = json.loads((tmp_path / "ranked.json").read_text())
    assert ranked[0]["design"]["R"] == 645.0 and ranked[-1]["slab"] is True


def test_sweep_without_axes(tmp_path):
    assert cli.main(["sweep", "run", "--out-dir", str(tmp_path)]) == 2
    assert _error(tmp_path)["code"] == "E_MISSING_REQUIRED"


# --- exit-code mapping -----------------------------------------------------

ERROR_CLASSES = [c for _, c in inspect.getmembers(errors, inspect.isclass)
                 if issubclass(c, errors.CbgError) and c not in (errors.CbgError, errors.DomainError,
                                                                 errors.UsageError)]


@pytest.mark.parametrize("exc", ERROR_CLASSES, ids=lambda c: c.__name__)
def test_exit_code_mapping(tmp_path, monkeypatch, exc):
    def boom(*a, **k):
        raise exc("injected")
    monkeypatch.setitem(cli.COMMANDS, "odmr", boom)
    code = cli.main(["odmr", "synth", "--out-dir", str(tmp_path)])
    assert code == (2 if issubclass(exc, errors.UsageError) else 1)
    err = _error(tmp_path)
    assert err["code"] == exc.code and err["exit_code"] == code


@pytest.mark.parametrize("exc,code,tag", [(ValueError("x"), 1, "E_INVALID_INPUT"),
                                          (FileNotFoundError("x"), 2, "E_NO_INPUT")])
def test_non_package_errors(tmp_path, monkeypatch, exc, code, tag):
    def boom(*a, **k):
        raise exc
    monkeypatch.setitem(cli.COMMANDS, "odmr", boom)
    assert cli.main(["odmr", "synth", "--out-dir", str(tmp_path)]) == code
    assert _error(tmp_path)["code"] == tag


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["odmr"], ["odmr", "synth", "--seed", "x"],
                                  ["spectrum"]])
def test_bad_arguments(argv, capsys):
    assert cli.main(argv) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"]["code"] == "E_USAGE"


def test_config_errors(tmp_path):
    assert cli.main(["odmr", "synth", "--out-dir", str(tmp_path), "--set", "design.Q=5"]) == 2
    assert _error(tmp_path)["code"] == "E_UNKNOWN_KEY"
    bad = tmp_path / "bad.toml"
    bad.write_text("[odmr\n")
    assert cli.main(["odmr", "synth", "--out-dir", str(tmp_path), "--config", str(bad)]) == 2
    assert _error(tmp_path)["code"] == "E_PARSE"
    assert cli.main(["odmr", "fit", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path)]) == 2


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cbgsense.cli", "odmr", "synth", "--seed", "1", "--out-dir",
                        str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["points"] == 201
