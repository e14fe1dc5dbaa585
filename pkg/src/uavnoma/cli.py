"""Command-line entry point: ``uavnoma {run,sweep,oracle,validate,generate}``.

Exit codes: 0 success, 2 configuration error, 3 infeasible or invalid scenario.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from uavnoma.experiment import (
    MODES,
    SWEEP_PARAMETERS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    parse_config,
    run_experiment,
)
from uavnoma.model import to_mbps
from uavnoma.oracle import brute_force_oracle
from uavnoma.sca import InfeasibleScenario, run
from uavnoma.scenario import Scenario, ScenarioError, generate_scenario, validate_scenario

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3

# flag dest -> config key, grouped by config section
_SCENARIO_FLAGS = {
    "seed": "seed", "num_users": "num_users", "cell_radius": "cell_radius", "ref_gain": "ref_gain",
    "bandwidth_hz": "bandwidth_hz", "noise_dbm_per_hz": "noise_dbm_per_hz", "power_dbm": "power_dbm",
    "power_mw": "power_mw", "altitude_min": "altitude_min", "altitude_max": "altitude_max",
    "beamwidth_min": "beamwidth_min", "beamwidth_max": "beamwidth_max",
}
_SCA_FLAGS = {"max_outer_iters": "max_outer_iters", "rel_tol": "rel_tol", "initial_beamwidth": "initial_beamwidth"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    g = p.add_argument_group("scenario")
    g.add_argument("--scenario-file", help="load a scenario JSON instead of generating one")
    g.add_argument("--seed", type=int)
    g.add_argument("--num-users", type=int)
    g.add_argument("--cell-radius", type=float, help="m")
    g.add_argument("--ref-gain", type=float)
    g.add_argument("--bandwidth-hz", type=float)
    g.add_argument("--noise-dbm-per-hz", type=float)
    pw = g.add_mutually_exclusive_group()
    pw.add_argument("--power-dbm", type=float)
    pw.add_argument("--power-mw", type=float)
    g.add_argument("--altitude-min", type=float, help="m")
    g.add_argument("--altitude-max", type=float, help="m")
    g.add_argument("--beamwidth-min", type=float, help="rad")
    g.add_argument("--beamwidth-max", type=float, help="rad")
    p.add_argument("--schemes", nargs="+", metavar="SCHEME", help="subset of NOMA DPC OMA1 OMA2")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--altitude", type=float, help="fixed-mode altitude (m)")
    p.add_argument("--beamwidth", type=float, help="fixed-mode beamwidth (rad); default is the narrowest covering one")
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    s = p.add_argument_group("sca")
    s.add_argument("--max-outer-iters", type=int)
    s.add_argument("--rel-tol", type=float)
    s.add_argument("--initial-beamwidth", type=float, help="rad")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavnoma", description="Max-min rate allocation for a UAV base station.")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", help="solve each scheme once and write results")
    _add_common(p)
    p = sub.add_parser("sweep", help="solve each scheme over a bandwidth or noise sweep")
    _add_common(p)
    p.add_argument("--sweep-parameter", choices=SWEEP_PARAMETERS)
    p.add_argument("--sweep-values", type=float, nargs="+", help="Hz for bandwidth, mW/Hz for noise_density")
    p.add_argument("--sweep-values-dbm-per-hz", type=float, nargs="+", help="noise_density points in dBm/Hz")
    p = sub.add_parser("oracle", help="compare SCA with an exhaustive grid search (K=2 only)")
    _add_common(p)
    p.add_argument("--resolution", type=int, default=60, help="grid points per axis (>= 50)")
    p.add_argument("--refine", type=int, default=3)
    p = sub.add_parser("validate", help="lint a scenario JSON file")
    p.add_argument("scenario", help="scenario JSON path")
    p = sub.add_parser("generate", help="write a generated scenario as JSON")
    _add_common(p)
    p.add_argument("--out", required=True, help="destination path")
    return parser


def _flag_overrides(args: argparse.Namespace, base: ExperimentConfig) -> dict:
    """Translate explicitly given flags into a config mapping."""
    ns = vars(args)
    out: dict = {}
    scen = {key: ns[dest] for dest, key in _SCENARIO_FLAGS.items() if ns.get(dest) is not None}
    if scen:
        out["scenario"] = scen
    sca = {key: ns[dest] for dest, key in _SCA_FLAGS.items() if ns.get(dest) is not None}
    if sca:
        out["sca"] = sca
    for key in ("scenario_file", "output_dir", "workers"):
        if ns.get(key) is not None:
            out[key] = ns[key]
    if ns.get("schemes"):
        out["schemes"] = ns["schemes"]
    if any(ns.get(k) is not None for k in ("mode", "altitude", "beamwidth")):
        mode = {"kind": ns.get("mode") or base.mode.kind}
        if mode["kind"] == "fixed":
            alt = ns.get("altitude") if ns.get("altitude") is not None else base.mode.altitude
            beam = ns.get("beamwidth") if ns.get("beamwidth") is not None else base.mode.beamwidth
            if alt is not None:
                mode["altitude"] = alt
            if beam is not None:
                mode["beamwidth"] = beam
        elif ns.get("altitude") is not None or ns.get("beamwidth") is not None:
            raise ConfigError("mode: --altitude/--beamwidth require --mode fixed")
        out["mode"] = mode
    if ns.get("sweep_parameter") or ns.get("sweep_values") or ns.get("sweep_values_dbm_per_hz"):
        param = ns.get("sweep_parameter") or (base.sweep.parameter if base.sweep else None)
        sweep = {"parameter": param}
        if ns.get("sweep_values"):
            sweep["values"] = ns["sweep_values"]
        if ns.get("sweep_values_dbm_per_hz"):
            sweep["values_dbm_per_hz"] = ns["sweep_values_dbm_per_hz"]
        if "values" not in sweep and "values_dbm_per_hz" not in sweep and base.sweep:
            sweep["values"] = list(base.sweep.values)
        if param is None:
            raise ConfigError("sweep.parameter: missing required key")
        out["sweep"] = sweep
    return out


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config} ({exc.strerror})") from None
        cfg = parse_config(text, cfg)
    return config_from_dict(_flag_overrides(args, cfg), cfg)


def _cmd_experiment(args, cfg: ExperimentConfig) -> int:
    if args.verb == "run":
        cfg = replace(cfg, sweep=None)
    elif cfg.sweep is None:
        raise ConfigError("sweep: missing required key (give --sweep-parameter and --sweep-values)")
    result = run_experiment(cfg)
    for row in result["rows"]:
        print(f"{row['scheme']:5s} {row['sweep_parameter']}={row['sweep_value']:<12.6g} "
              f"{row['final_mbps']:9.4f} Mbps  iters={row['iters']:<4d} "
              f"altitude={row['altitude_m']:.2f} m  beamwidth={row['beamwidth_rad']:.4f} rad")
    print(f"wrote {result['output_dir']}")
    return EXIT_OK


def _cmd_oracle(args, cfg: ExperimentConfig) -> int:
    if cfg.scenario_file is None and cfg.scenario.num_users != 2 and args.num_users is None:
        cfg = replace(cfg, scenario=cfg.scenario.replace(num_users=2))
    s = cfg.base_scenario()
    if s.num_users != 2:
        raise ConfigError(f"scenario.num_users: oracle needs K=2, got {s.num_users}")
    if args.resolution < 50:
        raise ConfigError("resolution: must be >= 50")
    B = s.params.total_bandwidth
    rows = []
    for scheme in cfg.schemes:
        orc = brute_force_oracle(s, scheme, args.resolution, args.refine)
        rep = run(s, scheme, cfg.sca, cfg.mode.locks(s.params.cell_radius))
        gap = (orc.min_rate - rep.final_nats) / orc.min_rate if orc.min_rate > 0 else 0.0
        rows.append({
            "scheme": scheme.value,
            "oracle_mbps": to_mbps(orc.min_rate, B),
            "sca_mbps": rep.final_mbps,
            "relative_gap": gap,
            "oracle_point": orc.point.to_dict(),
            "evaluations": orc.evaluations,
        })
    print(json.dumps({"scenario_digest": s.digest(), "results": rows}, indent=1))
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        s = Scenario.from_json(Path(args.scenario).read_text())
    except OSError as exc:
        raise ConfigError(f"scenario: cannot read {args.scenario} ({exc.strerror})") from None
    problems = validate_scenario(s)
    for msg in problems:
        print(msg)
    if problems:
        return EXIT_INFEASIBLE
    print(f"ok: K={s.num_users} R={s.params.cell_radius} digest={s.digest()}")
    return EXIT_OK


def _cmd_generate(args, cfg: ExperimentConfig) -> int:
    s = generate_scenario(cfg.scenario)
    Path(args.out).write_text(s.to_json())
    print(f"wrote {args.out} (digest {s.digest()})")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "validate":
            return _cmd_validate(args)
        cfg = load_config(args)
        if args.verb == "oracle":
            return _cmd_oracle(args, cfg)
        if args.verb == "generate":
            return _cmd_generate(args, cfg)
        return _cmd_experiment(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleScenario, ScenarioError) as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
