"""Command line, run configuration and file formats.

``axmhd run <config>``       time-step a configured experiment
``axmhd validate <config>``  hypothesis report for the configured initial data
``axmhd verify <suite>``     identities | elliptic | mollifier | lemmas | all

Run exit codes: 0 completed, 2 window stop, 3 solver failure, 4 invalid input.
The output directory in the config is overridden by ``AXMHD_OUTPUT_DIR``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import CSV_FIELDS, DiagnosticsRecord, gamma_prime, make_record, rt_profile
from .dynamics import SimState, StepConfig, WindowStop, cfl_limit, run as run_dynamics
from .elliptic import SolverFailure
from .grid import Grid, ScalarField
from .initial_data import PRESETS, InitialData, MalformedDataError, preset, validate
from .kinematics import FlowMap, MagneticState
from .mollifier import InvalidParameterError, build_kernel
from .vacuum import VacuumState

log = logging.getLogger("axmhd")

OUTPUT_ENV = "AXMHD_OUTPUT_DIR"
EXIT = {"completed": 0, "window_stop": 2, "solver_failure": 3, "invalid_input": 4}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class GridCfg:
    Nr: int = 64
    Nz: int = 64
    R0: float = 1.0
    L: float = 2.0 * np.pi


@dataclass
class PhysicsCfg:
    C0: float | None = None
    RS: float | None = None
    # ``lambda`` in the file
    lam: float = 0.1
    delta: float = 0.1


@dataclass
class NumericsCfg:
    kappa: float = 4.0  # multiples of dz
    cfl: float = 0.5
    dt_max: float = 0.01
    krylov_tol: float = 1e-10
    t_end: float = 0.1
    diag_every: int = 1
    window_check_every: int = 1
    kappa_sweep: list | None = None


@dataclass
class InitialCfg:
    preset: str | None = "rest"
    file: str | None = None
    eps: float = 0.02
    beta: float = 1.0


@dataclass
class OutputCfg:
    directory: str = "axmhd_out"
    formats: list = field(default_factory=lambda: ["csv", "json"])


@dataclass
class RunConfig:
    grid: GridCfg = field(default_factory=GridCfg)
    physics: PhysicsCfg = field(default_factory=PhysicsCfg)
    numerics: NumericsCfg = field(default_factory=NumericsCfg)
    initial_data: InitialCfg = field(default_factory=InitialCfg)
    output: OutputCfg = field(default_factory=OutputCfg)
    name: str = "run"

    def check(self) -> None:
        g, p, n = self.grid, self.physics, self.numerics
        if g.Nr < 3 or g.Nz < 5:
            raise ConfigError("grid too small")
        if g.R0 <= 0 or g.L <= 0:
            raise ConfigError("R0 and L must be positive")
        if p.RS is not None and p.RS <= g.R0:
            raise ConfigError("RS must exceed R0")
        if p.C0 is not None and p.C0 < 0:
            raise ConfigError("C0 must be non-negative")
        if p.lam <= 0 or p.delta <= 0:
            raise ConfigError("lambda and delta must be positive")
        if not 0 < n.cfl <= 0.5:
            raise ConfigError("cfl must lie in (0, 0.5]")
        if n.kappa_sweep is not None and (not isinstance(n.kappa_sweep, list) or not n.kappa_sweep or not all(
                isinstance(k, (int, float)) and not isinstance(k, bool) for k in n.kappa_sweep)):
            raise ConfigError("kappa_sweep must be a non-empty list of numbers")
        if not isinstance(self.output.formats, list):
            raise ConfigError("output.formats must be a list")
        for k in [n.kappa] + list(n.kappa_sweep or []):
            if not k > 0 or k * g.L / g.Nz >= g.L / 2:
                raise ConfigError(f"kappa multiple {k} out of range")
        if n.dt_max <= 0 or n.t_end < 0 or n.krylov_tol <= 0:
            raise ConfigError("dt_max, krylov_tol must be positive and t_end non-negative")
        if n.diag_every < 1 or n.window_check_every < 1:
            raise ConfigError("diag_every and window_check_every must be >= 1")
        if (self.initial_data.preset is None) == (self.initial_data.file is None):
            raise ConfigError("initial_data needs exactly one of preset or file")
        if self.initial_data.preset is not None and self.initial_data.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.initial_data.preset!r}")
        bad = set(self.output.formats) - {"csv", "json", "npz"}
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")


_SECTIONS = {"grid": GridCfg, "physics": PhysicsCfg, "numerics": NumericsCfg,
             "initial_data": InitialCfg, "output": OutputCfg}
_RENAME = {("physics", "lambda"): "lam"}


def _coerce(cls, section: str, raw) -> object:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in raw.items():
        attr = _RENAME.get((section, key), key)
        if attr not in names or (attr == "lam" and key != "lambda"):
            raise ConfigError(f"unknown key {section}.{key}")
        kwargs[attr] = val
    try:
        obj = cls(**kwargs)
    except TypeError as exc:  # pragma: no cover - guarded above
        raise ConfigError(str(exc)) from exc
    for f in dataclasses.fields(cls):
        v = getattr(obj, f.name)
        if v is None:
            continue
        if f.type in ("int",) and not isinstance(v, int):
            raise ConfigError(f"{section}.{f.name} must be an integer")
        if f.type in ("float", "float | None") and not isinstance(v, (int, float)):
            raise ConfigError(f"{section}.{f.name} must be a number")
        if f.type in ("float", "float | None"):
            setattr(obj, f.name, float(v))
    return obj


def parse_config(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    cfg = RunConfig()
    for key, val in raw.items():
        if key == "name":
            cfg.name = str(val)
        elif key in _SECTIONS:
            setattr(cfg, key, _coerce(_SECTIONS[key], key, val))
        else:
            raise ConfigError(f"unknown key {key}")
    cfg.check()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def output_dir(cfg: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output.directory)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def state_fields(state: SimState) -> dict[str, ScalarField]:
    return {
        "R": state.map.R, "Z": state.map.Z, "ThetaHat": state.map.ThetaHat,
        "vr": state.vr, "vth": state.vth, "vz": state.vz,
        "b0r": state.mag.b0r, "b0th": state.mag.b0th, "b0z": state.mag.b0z,
    }


def _meta(grid: Grid, scalars: dict, fields: dict[str, ScalarField]) -> dict:
    return {
        "grid": {"Nr": grid.Nr, "Nz": grid.Nz, "R0": grid.R0, "L": grid.L},
        "scalars": {k: float(v) for k, v in scalars.items()},
        "fields": {k: {"shape": list(f.values.shape), "parity": f.parity, "zslope": f.zslope}
                   for k, f in fields.items()},
    }


def write_snapshot(path: str | Path, grid: Grid, fields: dict[str, ScalarField], scalars: dict | None = None,
                   fmt: str = "json") -> Path:
    """Row-major field values plus grid metadata; JSON floats use ``repr`` so
    the round trip is bit exact."""
    path = Path(path)
    meta = _meta(grid, scalars or {}, fields)
    if fmt == "json":
        for k, f in fields.items():
            meta["fields"][k]["values"] = f.values.ravel(order="C").tolist()
        path.write_text(json.dumps(meta))
    elif fmt == "npz":
        arrays = {k: np.ascontiguousarray(f.values) for k, f in fields.items()}
        np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)
        if path.suffix != ".npz":
            path = path.with_name(path.name + ".npz")
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return path


def read_snapshot(path: str | Path) -> tuple[Grid, dict[str, ScalarField], dict]:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            values = {k: z[k] for k in meta["fields"]}
    else:
        meta = json.loads(path.read_text())
        values = {k: np.array(v["values"], dtype=float).reshape(v["shape"]) for k, v in meta["fields"].items()}
    g = meta["grid"]
    grid = Grid(int(g["Nr"]), int(g["Nz"]), float(g["R0"]), float(g["L"]))
    fields = {k: ScalarField(grid, values[k], m["parity"], m["zslope"]) for k, m in meta["fields"].items()}
    return grid, fields, meta["scalars"]


def snapshot_state(path, state: SimState, fmt: str = "json") -> Path:
    return write_snapshot(path, state.grid, state_fields(state),
                          {"t": state.t, "C": state.vac.C, "RS": state.vac.RS}, fmt)


def load_state(path) -> SimState:
    grid, f, sc = read_snapshot(path)
    return SimState(FlowMap(f["R"], f["Z"], f["ThetaHat"]), f["vr"], f["vth"], f["vz"],
                    VacuumState(sc["C"], sc["RS"]), sc["t"], MagneticState(f["b0r"], f["b0th"], f["b0z"]))


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


def write_series(path: str | Path, records: list[DiagnosticsRecord]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(CSV_FIELDS))
        w.writeheader()
        for r in records:
            row = r.row()
            row = {k: (repr(float(v)) if not isinstance(v, bool) else str(v).lower()) for k, v in row.items()}
            w.writerow(row)
    return path


def read_series(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (r[k] == "true") if k == "window_ok" else float(r[k]) for k in CSV_FIELDS})
    return out


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def build_initial_data(cfg: RunConfig) -> InitialData:
    grid = Grid(cfg.grid.Nr, cfg.grid.Nz, cfg.grid.R0, cfg.grid.L)
    p, ic = cfg.physics, cfg.initial_data
    if ic.preset is not None:
        return preset(ic.preset, grid, C0=p.C0, RS=p.RS, lam=p.lam, delta=p.delta, eps=ic.eps, beta=ic.beta)
    fgrid, f, sc = read_snapshot(ic.file)
    if fgrid != grid:
        raise ConfigError("initial-data file grid does not match the config grid")
    names = ("vr", "vth", "vz", "b0r", "b0th", "b0z")
    missing = [n for n in names if n not in f]
    if missing:
        raise ConfigError(f"initial-data file lacks fields {missing}")
    C0 = p.C0 if p.C0 is not None else float(sc.get("C", 0.0))
    RS = p.RS if p.RS is not None else float(sc.get("RS", 2.0 * grid.R0))
    return InitialData(f["vr"], f["vth"], f["vz"], f["b0r"], f["b0th"], f["b0z"], C0, RS, p.lam, p.delta)


@dataclass
class RunOutcome:
    status: str
    reason: str
    steps: int
    t: float
    records: list[DiagnosticsRecord]
    state: SimState | None = None


def simulate(cfg: RunConfig, data: InitialData, kappa_mult: float, rt_mask: np.ndarray | None) -> RunOutcome:
    """Single run at ``kappa = kappa_mult * dz`` with per-flush diagnostics."""
    grid = data.grid
    kernel = build_kernel(kappa_mult * grid.dz, grid)
    state = data.to_state()
    n = cfg.numerics
    dt = min(n.dt_max, cfl_limit(state, n.cfl))
    step_cfg = StepConfig(dt=dt, kappa=kernel.kappa, cfl=n.cfl, krylov_tol=n.krylov_tol,
                          window_check_every=n.window_check_every)
    records: list[DiagnosticsRecord] = []
    lam = data.lam

    def monitor(i, st, k):
        rec = make_record(st, k.geom, k.q, kernel)
        if rec.req_residual > 1e-12:
            log.warning("boundary transfer residual %.2e at t=%.4f", rec.req_residual, st.t)
        if rt_mask is not None and np.any(rt_mask):
            prof = rt_profile(k.q, st.vac.C, k.geom.Rk)
            if np.min(prof[rt_mask]) < 0.5 * lam:
                rec.window_ok = False
                records.append(rec)
                raise WindowStop(f"RT margin {np.min(prof[rt_mask]):.4f} below lambda/2")
        records.append(rec)
        if not rec.window_ok:
            raise WindowStop("geometry window left")

    res = run_dynamics(state, step_cfg, kernel, n.t_end, monitor=monitor, diag_every=n.diag_every)
    if res.status == "window_stop" and (not records or records[-1].window_ok):
        if res.last is not None:
            rec = make_record(res.state, res.last.geom, res.last.q, kernel)
            rec.window_ok = False
            records.append(rec)
    return RunOutcome(res.status, res.reason, res.steps, res.state.t, records, res.state)


def _rt_mask(data: InitialData, report) -> np.ndarray | None:
    if report.rt_everywhere:
        return np.ones(data.grid.Nz, dtype=bool)
    if report.rt_near_gamma:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return gamma_prime(data.magnetic(), data.delta)
    return None


def run_config(cfg: RunConfig, outdir: Path | None = None) -> tuple[int, dict]:
    outdir = output_dir(cfg) if outdir is None else outdir
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        data = build_initial_data(cfg)
        report = validate(data, kappa=cfg.numerics.kappa * cfg.grid.L / cfg.grid.Nz)
    except (ConfigError, MalformedDataError, InvalidParameterError, OSError, KeyError) as exc:
        summary = {"status": "invalid_input", "reason": str(exc)}
        (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
        return EXIT["invalid_input"], summary
    (outdir / "validation.json").write_text(json.dumps(report.as_dict(), indent=2, default=float))
    if not report.valid:
        summary = {"status": "invalid_input", "reason": "; ".join(report.messages), "validation": report.as_dict()}
        (outdir / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
        return EXIT["invalid_input"], summary
    if not (report.rt_everywhere or report.rt_near_gamma):
        log.warning("initial data satisfies neither stability route; RT is not monitored")
    mask = _rt_mask(data, report)
    mults = cfg.numerics.kappa_sweep or [cfg.numerics.kappa]
    sweep = cfg.numerics.kappa_sweep is not None
    runs = []
    worst = 0
    for m in mults:
        tag = f"_k{m:g}" if sweep else ""
        out = simulate(cfg, data, float(m), mask)
        if "csv" in cfg.output.formats:
            write_series(outdir / f"series{tag}.csv", out.records)
        for fmt in ("json", "npz"):
            if fmt in cfg.output.formats and out.state is not None:
                snapshot_state(outdir / f"snapshot{tag}.{fmt}", out.state, fmt)
        runs.append({"kappa_multiple": float(m), "status": out.status, "reason": out.reason, "steps": out.steps,
                     "t": out.t, "energy_final": out.records[-1].energy if out.records else None})
        worst = max(worst, EXIT[out.status])
    summary = {"status": runs[0]["status"] if len(runs) == 1 else
               next((r["status"] for r in runs if EXIT[r["status"]] == worst), "completed"),
               "runs": runs}
    if sweep:
        e = np.array([r["energy_final"] for r in runs], dtype=float)
        summary["energy_spread"] = float((e.max() - e.min()) / e.mean())
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    return worst, summary


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(json.dumps({"status": "invalid_input", "reason": str(exc)}))
        return EXIT["invalid_input"]
    try:
        code, summary = run_config(cfg)
    except SolverFailure as exc:  # pragma: no cover - caught inside run
        summary, code = {"status": "solver_failure", "reason": str(exc)}, EXIT["solver_failure"]
    print(json.dumps(summary, indent=2, default=float))
    return code


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        data = build_initial_data(cfg)
        rep = validate(data, kappa=cfg.numerics.kappa * cfg.grid.L / cfg.grid.Nz)
    except (ConfigError, MalformedDataError, OSError) as exc:
        print(json.dumps({"valid": False, "reason": str(exc)}))
        return EXIT["invalid_input"]
    print(json.dumps(rep.as_dict(), indent=2, default=float))
    return 0 if rep.valid else EXIT["invalid_input"]


def _cmd_verify(args) -> int:
    from .verification import run_suite

    try:
        rep = run_suite(args.suite)
    except KeyError as exc:
        print(json.dumps({"passed": False, "reason": str(exc)}))
        return EXIT["invalid_input"]
    text = json.dumps(rep, indent=2, default=float)
    out = os.environ.get(OUTPUT_ENV)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"verify_{args.suite}.json").write_text(text)
    print(text)
    return 0 if rep["passed"] else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="axmhd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="time-step a configured experiment")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="report on the configured initial data")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=["identities", "elliptic", "mollifier", "lemmas", "all"])
    p.set_defaults(func=_cmd_verify)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
