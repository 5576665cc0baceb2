"""Command line interface.

Stage commands (simulate, sound, estimate, localize) recompute the earlier
deterministic stages from (config, trial), so each artifact can be produced
in isolation and pipelines may skip intermediate files. ``experiment`` runs
the full Monte-Carlo sweep and ``cdf`` post-processes a records file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, RislocError
from .experiment import (
    MODES,
    ExperimentConfig,
    build_sources,
    build_training,
    build_trial_geometry,
    empirical_cdf,
    estimate_trial,
    localize_trial,
    read_errors_csv,
    read_estimates_csv,
    run_experiment,
    sound_trial,
    write_cdf_csv,
    write_estimates_csv,
    write_fixes_csv,
    write_records_csv,
)
from .scene import write_paths_csv
from .sounding import (
    load_observation_binary,
    save_observation_binary,
    save_observation_csv,
)


def _load_config(args) -> ExperimentConfig:
    cfg = (
        ExperimentConfig.load_json(args.config)
        if getattr(args, "config", None)
        else ExperimentConfig()
    )
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "trials", None):
        overrides["trials"] = args.trials
    if getattr(args, "ris_size", None):
        overrides["ris_array"] = (args.ris_size, args.ris_size)
    if getattr(args, "ratio", None):
        overrides["ratios"] = (args.ratio,) * 3
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    geom = build_trial_geometry(cfg, args.trial)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    geom.scene.save_json(out / "scene.json")
    rows = (
        [("bm", p) for p in geom.bm_paths]
        + [("br", p) for p in geom.br_paths]
        + [("rm", p) for p in geom.rm_paths]
    )
    write_paths_csv(out / "paths.csv", rows)
    _emit(
        {
            "scene": str(out / "scene.json"),
            "paths": str(out / "paths.csv"),
            "clock_offset_s": geom.clock_offset,
            "bm_paths": len(geom.bm_paths),
            "br_paths": len(geom.br_paths),
            "rm_paths": len(geom.rm_paths),
            "blockage": geom.scene.blockage,
        }
    )
    return 0


def _cmd_sound(args) -> int:
    cfg = _load_config(args)
    geom = build_trial_geometry(cfg, args.trial)
    training = build_training(cfg, args.trial, geom)
    noisy, clean = sound_trial(cfg, args.trial, geom, training)
    out = Path(args.out)
    if out.suffix == ".csv":
        save_observation_csv(out, noisy)
    else:
        save_observation_binary(out, noisy)
    payload = {
        "observation": str(out),
        "rows": noisy.matrix.shape[0],
        "cols": noisy.matrix.shape[1],
        "mode": cfg.mode,
    }
    if args.clean_out:
        clean_path = Path(args.clean_out)
        if clean_path.suffix == ".csv":
            save_observation_csv(clean_path, clean)
        else:
            save_observation_binary(clean_path, clean)
        payload["clean"] = str(clean_path)
    _emit(payload)
    return 0


def _cmd_estimate(args) -> int:
    cfg = _load_config(args)
    geom = build_trial_geometry(cfg, args.trial)
    training = build_training(cfg, args.trial, geom)
    if args.observation:
        obs = load_observation_binary(args.observation)
    else:
        obs, _ = sound_trial(cfg, args.trial, geom, training)
    sources = build_sources(cfg, geom, training)
    result, estimates = estimate_trial(cfg, geom, sources, obs)
    write_estimates_csv(args.out, estimates)
    _emit(
        {
            "estimates": str(args.out),
            "paths": len(estimates),
            "iterations": result.iterations,
            "residual_norms": [float(v) for v in result.residual_norms],
        }
    )
    return 0


def _cmd_localize(args) -> int:
    cfg = _load_config(args)
    geom = build_trial_geometry(cfg, args.trial)
    if args.estimates:
        estimates = read_estimates_csv(args.estimates)
    else:
        training = build_training(cfg, args.trial, geom)
        obs, _ = sound_trial(cfg, args.trial, geom, training)
        sources = build_sources(cfg, geom, training)
        _, estimates = estimate_trial(cfg, geom, sources, obs)
    fix = localize_trial(cfg, geom, estimates)
    error = float(np.linalg.norm(fix.position - geom.scene.ms))
    if args.out:
        write_fixes_csv(args.out, [(args.trial, fix, error)])
    _emit(
        {
            "method": fix.method,
            "position": [float(v) for v in fix.position],
            "clock_offset_s": fix.clock_offset,
            "error_m": error,
            "residual": fix.residual,
        }
    )
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load_config(args)
    records, summary = run_experiment(cfg)
    if args.out:
        write_records_csv(args.out, records)
        summary["records"] = str(args.out)
    _emit(summary)
    return 0


def _cmd_cdf(args) -> int:
    errors = read_errors_csv(args.records)
    pairs = empirical_cdf(errors)
    write_cdf_csv(args.out, pairs)
    _emit({"cdf": str(args.out), "samples": int(errors.size)})
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment configuration JSON")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--mode", choices=MODES, help="override the sounding mode")
    p.add_argument("--ris-size", type=int, help="override the RIS to ris-size x ris-size")
    p.add_argument("--ratio", type=float, help="override all dictionary oversampling ratios")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risloc",
        description="RIS-aided wideband channel sounding, sparse recovery and localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a trial scene and trace its paths")
    _add_config_flags(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out", default="trial-out", help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sound", help="simulate the whitened observation of one trial")
    _add_config_flags(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out", default="observation.bin", help=".bin or .csv output")
    p.add_argument("--clean-out", help="also write the noiseless observation")
    p.set_defaults(func=_cmd_sound)

    p = sub.add_parser("estimate", help="recover sparse paths from an observation")
    _add_config_flags(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--observation", help="binary observation dump (default: re-simulate)")
    p.add_argument("--out", default="estimates.csv")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("localize", help="position fix from path estimates")
    _add_config_flags(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--estimates", help="estimates CSV (default: run the full chain)")
    p.add_argument("--out", help="append-style fixes CSV")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("experiment", help="full Monte-Carlo sweep")
    _add_config_flags(p)
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--out", help="records CSV")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("cdf", help="empirical error CDF of a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default="cdf.csv")
    p.set_defaults(func=_cmd_cdf)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RislocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
