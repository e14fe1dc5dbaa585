"""Experiment configuration, sweep orchestration and result files."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from uavnoma.model import SchemeKind
from uavnoma.sca import Locks, ScaOptions, SolveReport, run
from uavnoma.scenario import (
    Scenario,
    ScenarioError,
    ScenarioParams,
    dbm_to_mw,
    generate_scenario,
    validate_scenario,
)
from uavnoma.solver import SolverOptions

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("bandwidth", "noise_density")
MODES = ("full", "fixed", "equal-allocation")
TRACE_COLUMNS = ["iter", "objective_nats", "objective_mbps", "min_user", "wall_ms"]
SUMMARY_COLUMNS = [
    "scheme", "sweep_parameter", "sweep_value", "mode", "final_mbps", "final_nats",
    "iters", "altitude_m", "beamwidth_rad", "termination",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""


@dataclass(frozen=True)
class Sweep:
    """``values`` are in internal units: Hz for bandwidth, mW/Hz for noise density."""

    parameter: str
    values: tuple

    def scenario_changes(self, value: float) -> dict:
        name = "total_bandwidth" if self.parameter == "bandwidth" else "noise_density"
        return {name: float(value)}


@dataclass(frozen=True)
class Mode:
    kind: str = "full"
    altitude: Optional[float] = None
    beamwidth: Optional[float] = None

    def locks(self, cell_radius: float) -> Locks:
        if self.kind == "fixed":
            beam = self.beamwidth
            if beam is None:
                beam = math.atan(cell_radius / self.altitude)
            return Locks(altitude=self.altitude, beamwidth=beam)
        if self.kind == "equal-allocation":
            return Locks(equal_allocation=True)
        return Locks()


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    scenario_file: Optional[str] = None
    schemes: tuple = tuple(SchemeKind)
    sweep: Optional[Sweep] = None
    mode: Mode = field(default_factory=Mode)
    output_dir: str = "results"
    sca: ScaOptions = field(default_factory=ScaOptions)
    workers: int = 1

    def base_scenario(self) -> Scenario:
        if self.scenario_file:
            try:
                s = Scenario.from_json(Path(self.scenario_file).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"scenario_file: {exc}") from None
            bad = validate_scenario(s)
            if bad:
                raise ScenarioError("; ".join(bad))
            return s
        return generate_scenario(self.scenario)

    def effective_sweep(self, s: Scenario) -> Sweep:
        return self.sweep or Sweep("bandwidth", (s.params.total_bandwidth,))


# ---------------------------------------------------------------- parsing

_SCENARIO_KEYS = {
    "seed", "num_users", "cell_radius", "ref_gain", "bandwidth_hz", "noise_dbm_per_hz",
    "noise_mw_per_hz", "power_dbm", "power_mw", "altitude_min", "altitude_max",
    "beamwidth_min", "beamwidth_max", "near_annulus", "far_annulus",
}
_TOP_KEYS = {"scenario", "scenario_file", "schemes", "sweep", "mode", "output_dir", "sca", "workers"}
_SCA_KEYS = {"max_outer_iters", "rel_tol", "initial_beamwidth", "solver"}
_SOLVER_KEYS = set(SolverOptions.__dataclass_fields__)


def _strict(obj, allowed: set, path: str, required=()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}.{key}: missing required key")
    return obj


def _number(value, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return float(value)


def _exclusive(obj: dict, a: str, b: str, path: str):
    if a in obj and b in obj:
        raise ConfigError(f"{path}.{b}: conflicts with {a}")


def parse_scenario_params(obj: dict, base: ScenarioParams = ScenarioParams(), path="scenario") -> ScenarioParams:
    """Map config keys to ScenarioParams, converting dBm inputs to mW."""
    _strict(obj, _SCENARIO_KEYS, path)
    _exclusive(obj, "power_dbm", "power_mw", path)
    _exclusive(obj, "noise_dbm_per_hz", "noise_mw_per_hz", path)
    ch = {}
    for key in ("seed", "num_users"):
        if key in obj:
            val = obj[key]
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{path}.{key}: expected an integer, got {val!r}")
            ch[key] = val
    simple = {
        "cell_radius": "cell_radius", "ref_gain": "ref_gain", "bandwidth_hz": "total_bandwidth",
        "noise_mw_per_hz": "noise_density", "power_mw": "total_power", "altitude_min": "altitude_min",
        "altitude_max": "altitude_max", "beamwidth_min": "beamwidth_min", "beamwidth_max": "beamwidth_max",
    }
    for key, name in simple.items():
        if key in obj:
            ch[name] = _number(obj[key], f"{path}.{key}")
    if "power_dbm" in obj:
        ch["total_power"] = dbm_to_mw(_number(obj["power_dbm"], f"{path}.power_dbm"))
    if "noise_dbm_per_hz" in obj:
        ch["noise_density"] = dbm_to_mw(_number(obj["noise_dbm_per_hz"], f"{path}.noise_dbm_per_hz"))
    for key in ("near_annulus", "far_annulus"):
        if key in obj:
            val = obj[key]
            if not isinstance(val, list) or len(val) != 2:
                raise ConfigError(f"{path}.{key}: expected [r_lo, r_hi]")
            ch[key] = tuple(_number(x, f"{path}.{key}") for x in val)
    if "cell_radius" in ch and base.near_annulus == (10.0, base.cell_radius / 2):
        # default annuli follow the radius unless given explicitly
        ch.setdefault("near_annulus", None)
        ch.setdefault("far_annulus", None)
    params = base.replace(**ch)
    bad = params.violations()
    if bad:
        raise ConfigError(f"{path}: {bad[0]}")
    return params


def parse_sca(obj: dict, base: ScaOptions = ScaOptions(), path="sca") -> ScaOptions:
    _strict(obj, _SCA_KEYS, path)
    ch = {}
    if "max_outer_iters" in obj:
        val = obj["max_outer_iters"]
        if isinstance(val, bool) or not isinstance(val, int) or val <= 0:
            raise ConfigError(f"{path}.max_outer_iters: expected a positive integer")
        ch["max_outer_iters"] = val
    for key in ("rel_tol", "initial_beamwidth"):
        if key in obj:
            ch[key] = _number(obj[key], f"{path}.{key}", positive=True)
    if "solver" in obj:
        sv = _strict(obj["solver"], _SOLVER_KEYS, f"{path}.solver")
        try:
            ch["solver"] = replace(base.solver, **{k: _number(v, f"{path}.solver.{k}", True) for k, v in sv.items()})
        except ValueError as exc:
            raise ConfigError(f"{path}.solver: {exc}") from None
        if "max_newton" in sv:
            ch["solver"] = replace(ch["solver"], max_newton=int(sv["max_newton"]))
    return replace(base, **ch)


def parse_sweep(obj: dict, path="sweep") -> Sweep:
    """Noise-density points may be given in dBm/Hz via ``values_dbm_per_hz``."""
    _strict(obj, {"parameter", "values", "values_dbm_per_hz"}, path, required=("parameter",))
    param = obj["parameter"]
    if param not in SWEEP_PARAMETERS:
        raise ConfigError(f"{path}.parameter: expected one of {SWEEP_PARAMETERS}, got {param!r}")
    _exclusive(obj, "values", "values_dbm_per_hz", path)
    key = "values_dbm_per_hz" if "values_dbm_per_hz" in obj else "values"
    if key not in obj:
        raise ConfigError(f"{path}.values: missing required key")
    if key == "values_dbm_per_hz" and param != "noise_density":
        raise ConfigError(f"{path}.values_dbm_per_hz: only valid for noise_density")
    raw = obj[key]
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}.{key}: expected a non-empty list")
    vals = [_number(v, f"{path}.{key}[{i}]", positive=key == "values") for i, v in enumerate(raw)]
    if key == "values_dbm_per_hz":
        vals = [dbm_to_mw(v) for v in vals]
    if vals != sorted(vals):
        raise ConfigError(f"{path}.{key}: must be sorted ascending")
    return Sweep(param, tuple(vals))


def parse_mode(obj, params: ScenarioParams, path="mode") -> Mode:
    if isinstance(obj, str):
        obj = {"kind": obj}
    _strict(obj, {"kind", "altitude", "beamwidth"}, path, required=("kind",))
    kind = obj["kind"]
    if kind not in MODES:
        raise ConfigError(f"{path}.kind: expected one of {MODES}, got {kind!r}")
    if kind != "fixed":
        if "altitude" in obj or "beamwidth" in obj:
            raise ConfigError(f"{path}: altitude/beamwidth only apply to kind 'fixed'")
        return Mode(kind)
    if "altitude" not in obj:
        raise ConfigError(f"{path}.altitude: missing required key")
    alt = _number(obj["altitude"], f"{path}.altitude", positive=True)
    if not params.altitude_min <= alt <= params.altitude_max:
        raise ConfigError(f"{path}.altitude: {alt} outside [{params.altitude_min}, {params.altitude_max}]")
    beam = None
    if obj.get("beamwidth") is not None:
        beam = _number(obj["beamwidth"], f"{path}.beamwidth", positive=True)
        if not params.beamwidth_min <= beam <= params.beamwidth_max:
            raise ConfigError(
                f"{path}.beamwidth: {beam} outside [{params.beamwidth_min}, {params.beamwidth_max}]")
    return Mode(kind, alt, beam)


def config_from_dict(data: dict, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    """Strictly parse a config mapping layered over ``base``."""
    _strict(data, _TOP_KEYS, "config")
    ch = {}
    params = base.scenario
    if "scenario" in data:
        params = parse_scenario_params(data["scenario"], base.scenario)
        ch["scenario"] = params
    if "scenario_file" in data:
        val = data["scenario_file"]
        if val is not None and not isinstance(val, str):
            raise ConfigError("config.scenario_file: expected a path string")
        ch["scenario_file"] = val
    if "schemes" in data:
        val = data["schemes"]
        if not isinstance(val, list) or not val:
            raise ConfigError("config.schemes: expected a non-empty list")
        try:
            ch["schemes"] = tuple(SchemeKind.parse(str(x)) for x in val)
        except ValueError as exc:
            raise ConfigError(f"config.schemes: {exc}") from None
    if "sweep" in data:
        ch["sweep"] = None if data["sweep"] is None else parse_sweep(data["sweep"], "config.sweep")
    if "mode" in data:
        ch["mode"] = parse_mode(data["mode"], params, "config.mode")
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            raise ConfigError("config.output_dir: expected a path string")
        ch["output_dir"] = data["output_dir"]
    if "sca" in data:
        ch["sca"] = parse_sca(data["sca"], base.sca, "config.sca")
    if "workers" in data:
        val = data["workers"]
        if isinstance(val, bool) or not isinstance(val, int) or val < 1:
            raise ConfigError("config.workers: expected an integer >= 1")
        ch["workers"] = val
    return replace(base, **ch)


def parse_config(text: str, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from None
    return config_from_dict(data, base)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {
        "scenario": asdict(cfg.scenario),
        "scenario_file": cfg.scenario_file,
        "schemes": [s.value for s in cfg.schemes],
        "sweep": None if cfg.sweep is None else {"parameter": cfg.sweep.parameter, "values": list(cfg.sweep.values)},
        "mode": asdict(cfg.mode),
        "output_dir": cfg.output_dir,
        "sca": asdict(cfg.sca),
        "workers": cfg.workers,
    }
    return out


# ---------------------------------------------------------------- running

def _value_label(value: float) -> str:
    return format(value, "g").replace("+", "")


def _job(args):
    s, scheme, sca, locks = args
    return run(s, scheme, sca, locks)


def write_trace(path: Path, report: SolveReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in report.trace:
            w.writerow([rec.iteration, repr(rec.objective_nats), repr(rec.objective_mbps),
                        rec.min_user, f"{rec.wall_ms:.3f}"])


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every (scheme, sweep value) pair and write traces, summary.csv and report.json."""
    base = cfg.base_scenario()
    sweep = cfg.effective_sweep(base)
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output_dir: cannot write to {out} ({exc.strerror})") from None

    jobs = []
    for value in sweep.values:
        s = base.with_params(**sweep.scenario_changes(value))
        locks = cfg.mode.locks(s.params.cell_radius)
        for scheme in cfg.schemes:
            jobs.append((value, scheme, (s, scheme, cfg.sca, locks)))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, os.cpu_count() or 1)) as pool:
            reports = list(pool.map(_job, [j[2] for j in jobs]))
    else:
        reports = [_job(j[2]) for j in jobs]

    rows, runs = [], []
    for (value, scheme, _), rep in zip(jobs, reports):
        write_trace(out / f"trace_{scheme.value}_{_value_label(value)}.csv", rep)
        row = {
            "scheme": scheme.value,
            "sweep_parameter": sweep.parameter,
            "sweep_value": value,
            "mode": cfg.mode.kind,
            "final_mbps": rep.final_mbps,
            "final_nats": rep.final_nats,
            "iters": rep.iterations,
            "altitude_m": rep.v_final.altitude,
            "beamwidth_rad": rep.v_final.beamwidth,
            "termination": rep.termination,
        }
        rows.append(row)
        runs.append({"sweep_parameter": sweep.parameter, "sweep_value": value, **rep.to_dict()})
        log.info("%s %s=%s: %.4f Mbps after %d iterations (%s)", scheme.value, sweep.parameter,
                 _value_label(value), rep.final_mbps, rep.iterations, rep.termination)

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in SUMMARY_COLUMNS])
    report = {"config": config_to_dict(cfg), "scenario": base.to_dict(), "runs": runs}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    return {"rows": rows, "reports": reports, "output_dir": str(out)}


def read_summary(path) -> list[dict]:
    """Parse summary.csv back into typed rows."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("sweep_value", "final_mbps", "final_nats", "altitude_m", "beamwidth_rad"):
            row[key] = float(row[key])
        row["iters"] = int(row["iters"])
    return rows
