#!/usr/bin/env python3
"""Detection delay and per-symbol cost versus subcarrier count.

For each K in the sweep a fresh scorer is trained and calibrated at that
bandwidth, then paired Monte-Carlo episodes measure detection delay and
the time spent per statistic update.  The latent scorer compresses every
K to the same embedding size, so its delay and update cost should stay
flat while the raw kernel detector's cost grows with the feature width.

    python3 scripts/bandwidth_sweep.py --config configs/desk.cfg --k 16,32,64
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from risdetect import io as artifact_io
from risdetect.config import parse_config
from risdetect.harness import (calibrate_threshold, episode_rng,
                               generate_training_set, monte_carlo)
from risdetect.svdd import train_dsvdd


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.cfg")
    ap.add_argument("--k", default="16,32,64",
                    help="comma-separated subcarrier counts")
    ap.add_argument("--detector", default="dsvdd,scanb-raw",
                    help="comma-separated detector kinds")
    ap.add_argument("--episodes", type=int, default=None)
    ap.add_argument("--out", default="bandwidth_sweep.csv")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    base = parse_config(args.config)
    seed = base.system.rng_seed
    episodes = args.episodes or base.sweep.episodes
    kinds = [k.strip() for k in args.detector.split(",") if k.strip()]
    k_values = [int(k) for k in args.k.split(",")]

    rows = []
    t0 = time.perf_counter()
    for k in k_values:
        cfg = replace(base, system=replace(base.system, n_subcarriers=k))
        models = {}
        if "dsvdd" in kinds:
            print(f"[K={k}] training scorer")
            data = generate_training_set(cfg, cfg.training.train_size,
                                         episode_rng(seed, 0, k))
            models["dsvdd"] = train_dsvdd(data, cfg.training,
                                          episode_rng(seed, 3, k))
        thetas = {kind: calibrate_threshold(cfg, kind, seed,
                                            model=models.get(kind))
                  for kind in kinds}
        reports = monte_carlo(cfg, kinds, thetas, episodes, seed,
                              models=models, workers=args.workers)
        for kind in kinds:
            r = reports[kind]
            rows.append({
                "k": k, "detector": kind, "theta": float(f"{r.theta:.6g}"),
                "episodes": r.episodes, "detected": r.detected,
                "missed": r.missed, "false_alarms": r.false_alarms,
                "avg_delay": None if r.avg_delay is None
                else round(r.avg_delay, 2),
                "miss_rate": r.miss_rate,
                "false_alarm_rate": r.false_alarm_rate,
                "stat_us_per_symbol": None if r.avg_stat_time is None
                else round(r.avg_stat_time * 1e6, 2),
            })
            print(f"[K={k}] {kind}: delay={r.avg_delay} miss={r.miss_rate} "
                  f"stat={r.avg_stat_time * 1e6:.1f}us/symbol")

    print(f"\n{'k':>5}  {'detector':<10} {'avg_delay':>10} {'miss_rate':>10} "
          f"{'stat_us':>10}")
    for row in rows:
        print(f"{row['k']:>5}  {row['detector']:<10} "
              f"{'-' if row['avg_delay'] is None else row['avg_delay']:>10} "
              f"{row['miss_rate']:>10} {row['stat_us_per_symbol']:>10}")

    manifest = artifact_io.write_manifest(
        args.out + ".manifest.json", "bandwidth-sweep", base, seed,
        inputs={"config": args.config}, outputs={"results": args.out},
        extra={"k_values": k_values, "detectors": kinds,
               "episodes": episodes})
    artifact_io.write_results_csv(args.out, rows, manifest_path=manifest)
    print(f"\ntotal {time.perf_counter() - t0:.1f}s, results -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
