#!/usr/bin/env python3
"""Desk-scale benchmark: the three detectors on identical episode streams.

Trains the one-class scorer once, calibrates every detector to the same
false-alarm budget on no-change episodes, then runs paired Monte-Carlo
episodes (episode i sees the same simulated observations for all
detectors).  Prints a comparison table and writes a results CSV plus a
manifest next to it.

    python3 scripts/desk_benchmark.py --config configs/desk.cfg --out desk.csv
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from risdetect import io as artifact_io
from risdetect.config import parse_config
from risdetect.harness import (calibrate_threshold, episode_rng,
                               generate_training_set, monte_carlo)
from risdetect.svdd import train_dsvdd

DETECTORS = ("dsvdd", "scanb-raw", "hotelling")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.cfg")
    ap.add_argument("--out", default="desk_benchmark.csv")
    ap.add_argument("--episodes", type=int, default=None,
                    help="override the configured episode count")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = parse_config(args.config)
    seed = cfg.system.rng_seed
    episodes = args.episodes or cfg.sweep.episodes

    t0 = time.perf_counter()
    print(f"training scorer ({cfg.training.train_size} observations)")
    data = generate_training_set(cfg, cfg.training.train_size,
                                 episode_rng(seed, 0, 0))
    model = train_dsvdd(data, cfg.training, episode_rng(seed, 3, 0))
    print(f"  done in {time.perf_counter() - t0:.1f}s, radius={model.radius:.4f}")

    models = {"dsvdd": model}
    thetas = {}
    for kind in DETECTORS:
        t1 = time.perf_counter()
        thetas[kind] = calibrate_threshold(cfg, kind, seed,
                                           model=models.get(kind))
        print(f"calibrated {kind}: theta={thetas[kind]:.4g} "
              f"({time.perf_counter() - t1:.1f}s)")

    reports = monte_carlo(cfg, DETECTORS, thetas, episodes, seed,
                          models=models, workers=args.workers)

    cols = ("detector", "theta", "detected", "missed", "false_alarms",
            "avg_delay", "censored_avg_delay", "miss_rate",
            "false_alarm_rate", "stat_us_per_symbol")
    print()
    print("  ".join(f"{c:>18}" for c in cols))
    rows = []
    for kind in DETECTORS:
        r = reports[kind]
        row = {
            "detector": kind, "theta": float(f"{r.theta:.6g}"),
            "detected": r.detected, "missed": r.missed,
            "false_alarms": r.false_alarms,
            "avg_delay": None if r.avg_delay is None else round(r.avg_delay, 2),
            "censored_avg_delay": None if r.censored_avg_delay is None
            else round(r.censored_avg_delay, 2),
            "miss_rate": r.miss_rate, "false_alarm_rate": r.false_alarm_rate,
            "stat_us_per_symbol": None if r.avg_stat_time is None
            else round(r.avg_stat_time * 1e6, 2),
        }
        rows.append(row)
        print("  ".join(f"{'-' if row[c] is None else row[c]!s:>18}"
                        for c in cols))

    manifest = artifact_io.write_manifest(
        args.out + ".manifest.json", "desk-benchmark", cfg, seed,
        inputs={"config": args.config}, outputs={"results": args.out},
        extra={"episodes": episodes, "thetas": thetas})
    artifact_io.write_results_csv(args.out, rows, manifest_path=manifest)
    print(f"\ntotal {time.perf_counter() - t0:.1f}s, results -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
