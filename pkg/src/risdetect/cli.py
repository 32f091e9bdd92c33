"""Command-line entry points.

Subcommands: gen-data, train, calibrate, run, montecarlo, report.  Every
artifact-producing command also writes ``<out>.manifest.json`` recording the
config snapshot, seed, and package versions; result files reference their
manifest in a leading comment line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import io as artifact_io
from .config import Config, parse_config
from .errors import ConfigError, ContractError, FormatError, TrainingDiverged
from .harness import (DETECTOR_KINDS, calibrate_threshold, episode_rng,
                      generate_training_set, monte_carlo, run_episode)
from .svdd import train_dsvdd


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None,
                        help="key=value config file (defaults used if omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed; wins over the config rng_seed")
    parser.add_argument("--k", default=None,
                        help="subcarrier count; montecarlo accepts a comma list")
    parser.add_argument("--noise-db", default=None,
                        help="noise variance in dB; montecarlo accepts a comma list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risdetect",
        description="Simulated detection of non-cooperative RIS activity "
                    "in a MIMO-OFDM uplink")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a RIS-free training dataset")
    _add_common(p)
    p.add_argument("--size", type=int, default=None, help="number of observations")
    p.add_argument("--out", required=True, help="output dataset file")

    p = sub.add_parser("train", help="train the deep-SVDD scorer")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="training dataset file")
    p.add_argument("--out", required=True, help="output model file")

    p = sub.add_parser("calibrate", help="calibrate detection thresholds")
    _add_common(p)
    p.add_argument("--detector", default="dsvdd",
                   help=f"comma list from {DETECTOR_KINDS}")
    p.add_argument("--model", default=None, help="model file (needed for dsvdd)")
    p.add_argument("--episodes", type=int, default=None,
                   help="no-change calibration episodes")
    p.add_argument("--out", required=True, help="output thresholds manifest (json)")

    p = sub.add_parser("run", help="run one episode and export its statistic trace")
    _add_common(p)
    p.add_argument("--detector", default="dsvdd", choices=DETECTOR_KINDS)
    p.add_argument("--model", default=None, help="model file (needed for dsvdd)")
    p.add_argument("--theta", type=float, default=None,
                   help="alarm threshold (default +inf: trace only)")
    p.add_argument("--thresholds", default=None,
                   help="thresholds manifest from the calibrate command")
    p.add_argument("--out", required=True, help="output trace CSV")

    p = sub.add_parser("montecarlo", help="paired Monte-Carlo benchmark")
    _add_common(p)
    p.add_argument("--detector", default=",".join(DETECTOR_KINDS),
                   help=f"comma list from {DETECTOR_KINDS}")
    p.add_argument("--model", default=None,
                   help="model file; only valid for a single-K sweep "
                        "(otherwise dsvdd models are trained inline per K)")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--traces", action="store_true",
                   help="also write per-episode JSON-lines traces")
    p.add_argument("--out", required=True, help="output results CSV")

    p = sub.add_parser("report", help="print a summary table from a results CSV")
    p.add_argument("--results", dest="results", required=True, help="results CSV file")
    return parser


def _load_config(args, k_is_sweep: bool = False) -> Config:
    overrides: dict[str, str] = {}
    if getattr(args, "k", None) is not None:
        overrides["k_sweep" if k_is_sweep else "n_subcarriers"] = args.k
    if getattr(args, "noise_db", None) is not None:
        overrides["noise_db_sweep" if k_is_sweep else "noise_var_db"] = args.noise_db
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = str(args.seed)
    if getattr(args, "episodes", None) is not None:
        overrides["episodes"] = str(args.episodes)
    if args.config is not None:
        return parse_config(args.config, overrides)
    from .config import config_from_items
    return config_from_items(overrides, source="<flags>")


def _detector_list(text: str) -> list[str]:
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    for kind in kinds:
        if kind not in DETECTOR_KINDS:
            raise ConfigError(f"unknown detector {kind!r}; choose from {DETECTOR_KINDS}")
    if not kinds:
        raise ConfigError("need at least one detector")
    return kinds


def _maybe_model(args, cfg: Config, kinds) -> dict:
    models = {}
    if "dsvdd" in kinds:
        if args.model is None:
            raise ConfigError(
                "the dsvdd detector needs a trained model; pass --model "
                "(train one with the train subcommand)")
        models["dsvdd"] = artifact_io.load_model(args.model, cfg.training)
    return models


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    size = args.size if args.size is not None else cfg.training.train_size
    rng = episode_rng(cfg.system.rng_seed, 0, 0)
    generate_training_set(cfg, size, rng, out_path=args.out)
    manifest = artifact_io.write_manifest(
        args.out + ".manifest.json", "gen-data", cfg, cfg.system.rng_seed,
        outputs={"dataset": args.out}, extra={"size": size})
    print(f"wrote {size} observations to {args.out} (manifest {manifest})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    data = artifact_io.load_dataset(args.dataset,
                                    expected_dim=cfg.system.feature_dim)
    rng = episode_rng(cfg.system.rng_seed, 3, 0)
    model = train_dsvdd(data, cfg.training, rng)
    artifact_io.save_model(args.out, model)
    manifest = artifact_io.write_manifest(
        args.out + ".manifest.json", "train", cfg, cfg.system.rng_seed,
        inputs={"dataset": args.dataset}, outputs={"model": args.out})
    print(f"trained on {data.shape[0]} observations; model -> {args.out} "
          f"(manifest {manifest})")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    kinds = _detector_list(args.detector)
    models = _maybe_model(args, cfg, kinds)
    thetas = {}
    for kind in kinds:
        thetas[kind] = calibrate_threshold(
            cfg, kind, cfg.system.rng_seed, model=models.get(kind),
            n_episodes=args.episodes)
        print(f"{kind}: theta = {thetas[kind]:.9g}")
    artifact_io.write_manifest(
        args.out, "calibrate", cfg, cfg.system.rng_seed,
        inputs={"model": args.model}, extra={"thresholds": thetas})
    print(f"thresholds -> {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    kinds = _detector_list(args.detector)
    models = _maybe_model(args, cfg, kinds)
    kind = kinds[0]
    if args.theta is not None:
        theta = args.theta
    elif args.thresholds is not None:
        recorded = artifact_io.read_manifest(args.thresholds).get("thresholds", {})
        if kind not in recorded:
            raise ConfigError(f"{args.thresholds} has no threshold for {kind!r}")
        theta = float(recorded[kind])
    else:
        theta = math.inf
    result = run_episode(cfg, kind, theta, episode_rng(cfg.system.rng_seed, 4, 0),
                         model=models.get(kind), collect_trace=True)
    manifest = artifact_io.write_manifest(
        args.out + ".manifest.json", "run", cfg, cfg.system.rng_seed,
        inputs={"model": args.model}, outputs={"trace": args.out},
        extra={"theta": theta, "first_alarm": result.first_alarm,
               "stream_hash": result.stream_hash})
    artifact_io.write_trace_csv(args.out, result.trace, manifest_path=manifest)
    outcome = ("false alarm" if result.false_alarm else
               "detected" if result.detected else
               "missed" if result.missed else "clean")
    print(f"{kind}: first_alarm={result.first_alarm} ({outcome}); "
          f"trace -> {args.out}")
    return 0


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args, k_is_sweep=True)
    kinds = _detector_list(args.detector)
    if args.model is not None and len(cfg.sweep.k_sweep) != 1:
        raise ConfigError("--model is only valid for a single-K sweep")
    seed = cfg.system.rng_seed
    rows = []
    trace_fh = open(args.out + ".traces.jsonl", "w") if args.traces else None
    try:
        for k in cfg.sweep.k_sweep:
            for noise_db in cfg.sweep.noise_db_sweep:
                cell = Config(
                    system=_replace(cfg.system, n_subcarriers=int(k),
                                    noise_var_db=float(noise_db)),
                    surfaces=cfg.surfaces, active_surface=cfg.active_surface,
                    active_ris_count=cfg.active_ris_count, detector=cfg.detector,
                    training=cfg.training, sweep=cfg.sweep)
                models = {}
                if "dsvdd" in kinds:
                    if args.model is not None:
                        models["dsvdd"] = artifact_io.load_model(args.model,
                                                                 cell.training)
                    else:
                        print(f"[K={k} noise={noise_db}dB] training dsvdd model "
                              f"({cell.training.train_size} observations)")
                        data = generate_training_set(
                            cell, cell.training.train_size, episode_rng(seed, 0, k))
                        models["dsvdd"] = train_dsvdd(data, cell.training,
                                                      episode_rng(seed, 3, k))
                thetas = {kind: calibrate_threshold(cell, kind, seed,
                                                    model=models.get(kind))
                          for kind in kinds}
                reports = monte_carlo(cell, kinds, thetas, cfg.sweep.episodes,
                                      seed, models=models, workers=args.workers,
                                      collect_traces=args.traces)
                for kind, report in reports.items():
                    rows.append(_report_row(report, k, noise_db))
                    print(f"[K={k} noise={noise_db}dB] {kind}: "
                          f"delay={report.avg_delay} miss={report.miss_rate} "
                          f"fa={report.false_alarm_rate}")
                    if trace_fh is not None:
                        for i, res in enumerate(report.results):
                            trace_fh.write(json.dumps(
                                {"detector": kind, "k": int(k),
                                 "noise_db": float(noise_db), "episode": i,
                                 "first_alarm": res.first_alarm,
                                 "stream_hash": res.stream_hash,
                                 "trace": res.trace}) + "\n")
    finally:
        if trace_fh is not None:
            trace_fh.close()
    manifest = artifact_io.write_manifest(
        args.out + ".manifest.json", "montecarlo", cfg, seed,
        inputs={"model": args.model}, outputs={"results": args.out},
        extra={"detectors": kinds, "episodes": cfg.sweep.episodes})
    artifact_io.write_results_csv(args.out, rows, manifest_path=manifest)
    print(f"results -> {args.out}")
    return 0


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def _report_row(report, k, noise_db) -> dict:
    return {
        "detector": report.detector, "k": int(k), "noise_db": float(noise_db),
        "theta": report.theta, "episodes": report.episodes,
        "detected": report.detected, "false_alarms": report.false_alarms,
        "missed": report.missed, "avg_delay": report.avg_delay,
        "censored_avg_delay": report.censored_avg_delay,
        "false_alarm_rate": report.false_alarm_rate,
        "miss_rate": report.miss_rate,
        "avg_update_time_us": None if report.avg_update_time is None
        else report.avg_update_time * 1e6,
        "avg_stat_time_us": None if report.avg_stat_time is None
        else report.avg_stat_time * 1e6,
    }


def cmd_report(args) -> int:
    rows = artifact_io.read_results_csv(args.results)
    if not rows:
        print("no rows")
        return 0
    cols = ("detector", "k", "noise_db", "episodes", "avg_delay",
            "censored_avg_delay", "false_alarm_rate", "miss_rate",
            "avg_update_time_us")
    widths = {c: max(len(c), *(len(str(r.get(c) or "-")) for r in rows))
              for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for row in rows:
        print("  ".join(str(row.get(c) if row.get(c) is not None else "-")
                        .ljust(widths[c]) for c in cols))
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "montecarlo": cmd_montecarlo,
    "report": cmd_report,
}


def dispatch(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FormatError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
