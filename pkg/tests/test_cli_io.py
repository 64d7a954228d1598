import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from axmhd import Grid
from axmhd.cli_io import (
    EXIT,
    ConfigError,
    load_state,
    main,
    parse_config,
    read_series,
    read_snapshot,
    snapshot_state,
    state_fields,
    write_snapshot,
)
from axmhd.diagnostics import CSV_FIELDS
from axmhd.initial_data import preset

BASE = {
    "grid": {"Nr": 16, "Nz": 16},
    "physics": {"C0": 0.5, "lambda": 0.1, "delta": 0.1},
    "numerics": {"kappa": 4, "t_end": 0.04, "dt_max": 0.02},
    "initial_data": {"preset": "perturbed"},
    "output": {"formats": ["csv", "json", "npz"]},
}


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def _merge(base, **over):
    out = json.loads(json.dumps(base))
    for sec, vals in over.items():
        out.setdefault(sec, {}).update(vals)
    return out


def test_parse_defaults_and_lambda():
    cfg = parse_config(yaml.safe_dump(BASE))
    assert cfg.physics.lam == 0.1 and cfg.grid.Nr == 16 and cfg.numerics.cfl == 0.5


@pytest.mark.parametrize("text", [
    "grid: {Nr: 16, Nx: 3}",
    "bogus: 1",
    "physics: {lam: 0.1}",
    "grid: {Nr: 16.5}",
    "numerics: {cfl: 0.9}",
    "numerics: {kappa: -1}",
    "initial_data: {preset: nope}",
    "initial_data: {preset: rest, file: x.json}",
    "output: {formats: [csv, hdf5]}",
    "numerics: {kappa_sweep: []}",
    "grid: [1, 2]",
    "physics: {RS: 0.5}",
    ": : :",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("fmt", ["json", "npz"])
def test_snapshot_roundtrip_bit_exact(tmp_path, fmt):
    g = Grid(12, 20, R0=1.5, L=3.0)
    s = preset("perturbed", g, eps=0.123456789).to_state()
    s.map.R = s.map.R + s.vr * (1 / 3)
    s.t = 0.1 + 0.2
    path = snapshot_state(tmp_path / f"s.{fmt}", s, fmt)
    back = load_state(path)
    assert back.grid == g and back.t == s.t and back.vac.C == s.vac.C
    for name, f in state_fields(s).items():
        h = state_fields(back)[name]
        assert np.array_equal(f.values, h.values) and f.parity == h.parity and f.zslope == h.zslope


def test_snapshot_unknown_format(tmp_path):
    g = Grid(8, 8)
    with pytest.raises(ValueError):
        write_snapshot(tmp_path / "x", g, {}, fmt="xml")


def test_run_completed(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    code = main(["run", str(_write(tmp_path, BASE))])
    assert code == EXIT["completed"] == 0
    out = tmp_path / "out"
    rows = read_series(out / "series.csv")
    assert (out / "series.csv").read_text().splitlines()[0] == ",".join(CSV_FIELDS)
    assert rows[0]["t"] == 0.0 and rows[-1]["t"] == pytest.approx(0.04) and all(r["window_ok"] for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "completed"
    g, f, sc = read_snapshot(out / "snapshot.npz")
    g2, f2, sc2 = read_snapshot(out / "snapshot.json")
    assert sc == sc2 and all(np.array_equal(f[k].values, f2[k].values) for k in f)
    assert json.loads(capsys.readouterr().out)["status"] == "completed"


def test_output_directory_from_config(tmp_path, monkeypatch):
    monkeypatch.delenv("AXMHD_OUTPUT_DIR", raising=False)
    cfg = _merge(BASE, output={"directory": str(tmp_path / "cfgdir"), "formats": ["csv"]})
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    assert (tmp_path / "cfgdir" / "series.csv").exists()


def test_run_invalid_input(tmp_path, monkeypatch):
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    cfg = _merge(BASE, initial_data={"preset": "bad_divergence"})
    assert main(["run", str(_write(tmp_path, cfg))]) == EXIT["invalid_input"] == 4
    cfg = _merge(BASE, grid={"Nr": 16, "typo": 1})
    assert main(["run", str(_write(tmp_path, cfg))]) == 4
    assert main(["run", str(tmp_path / "missing.yaml")]) == 4


def test_rt_monitor_stops_run():
    from axmhd.cli_io import simulate

    rc = parse_config(yaml.safe_dump(_merge(BASE, numerics={"t_end": 0.1})))
    d = preset("perturbed", Grid(16, 16))
    mask = np.ones(16, dtype=bool)
    assert simulate(rc, d, 4.0, mask).status == "completed"
    # initial margin is about 0.75, so lambda/2 = 5 trips the monitor at once
    d.lam = 10.0
    out = simulate(rc, d, 4.0, mask)
    assert out.status == "window_stop" and "RT" in out.reason and not out.records[-1].window_ok
    assert out.steps == 0


def test_run_exit_code_window_stop(tmp_path, monkeypatch):
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    # large perturbation drives the map out of the geometry window quickly
    cfg = _merge(BASE, initial_data={"preset": "perturbed", "eps": 2.0}, numerics={"t_end": 2.0, "dt_max": 0.05})
    assert main(["run", str(_write(tmp_path, cfg))]) == EXIT["window_stop"] == 2
    rows = read_series(tmp_path / "out" / "series.csv")
    assert not rows[-1]["window_ok"]


def test_run_exit_code_solver_failure(tmp_path, monkeypatch):
    import axmhd.dynamics as dyn
    from axmhd.elliptic import SolverFailure

    calls = {"n": 0}
    real = dyn.solve_pressure

    def flaky(*a, **kw):
        calls["n"] += 1
        if calls["n"] > 2:
            raise SolverFailure("forced", 1.0, 1)
        return real(*a, **kw)

    monkeypatch.setattr(dyn, "solve_pressure", flaky)
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    assert main(["run", str(_write(tmp_path, BASE))]) == EXIT["solver_failure"] == 3


def test_kappa_sweep_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    cfg = _merge(BASE, grid={"Nz": 24}, numerics={"kappa_sweep": [2, 4, 8]}, output={"formats": ["csv"]})
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    out = tmp_path / "out"
    for m in (2, 4, 8):
        assert (out / f"series_k{m}.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["runs"]) == 3 and summary["energy_spread"] < 0.1


def test_run_from_file_initial_data(tmp_path, monkeypatch):
    g = Grid(16, 16)
    s = preset("axial", g).to_state()
    snapshot_state(tmp_path / "init.json", s)
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    cfg = _merge(BASE, initial_data={"preset": None, "file": str(tmp_path / "init.json")})
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    cfg = _merge(cfg, grid={"Nr": 20})
    assert main(["run", str(_write(tmp_path, cfg))]) == 4


def test_validate_command(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, BASE))]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["valid"] and rep["admissible"]
    cfg = _merge(BASE, initial_data={"preset": "bad_axis"})
    assert main(["validate", str(_write(tmp_path, cfg))]) == 4
    assert json.loads(capsys.readouterr().out)["axis_ok"] is False


def test_verify_command_via_module(tmp_path):
    env_out = tmp_path / "v"
    import os

    env = dict(os.environ, AXMHD_OUTPUT_DIR=str(env_out))
    res = subprocess.run([sys.executable, "-m", "axmhd", "verify", "mollifier"], capture_output=True, text=True,
                         env=env, timeout=300)
    assert res.returncode == 0, res.stderr
    rep = json.loads(res.stdout)
    assert rep["suite"] == "mollifier" and rep["passed"]
    assert json.loads((env_out / "verify_mollifier.json").read_text()) == rep


def test_verify_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        main(["verify", "nope"])


def test_rest_preset_energy_constant(tmp_path, monkeypatch):
    monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / "out"))
    cfg = _merge(BASE, initial_data={"preset": "rest"}, numerics={"t_end": 0.1}, output={"formats": ["csv"]})
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    rows = read_series(tmp_path / "out" / "series.csv")
    e = np.array([r["energy"] for r in rows])
    assert rows[-1]["t"] == pytest.approx(0.1) and np.max(np.abs(e - e[0])) <= 1e-10


def test_identical_config_gives_identical_files(tmp_path, monkeypatch):
    p = _write(tmp_path, BASE)
    outs = []
    for tag in ("a", "b"):
        monkeypatch.setenv("AXMHD_OUTPUT_DIR", str(tmp_path / tag))
        assert main(["run", str(p)]) == 0
        outs.append({f.name: f.read_bytes() for f in (tmp_path / tag).iterdir()})
    assert outs[0] == outs[1]
