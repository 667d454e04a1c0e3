#!/usr/bin/env python3
"""Multi-seed desk experiment: training curves, strategy totals, per-slot series.

    python3 scripts/reproduce.py --seeds 0 1 2 3 4 --out results/desk

Writes, under ``--out``:
  curves.csv      episode, then the 100-episode moving average of each seed
  summary.csv     seed, strategy, cumulative reward, ratio to Fixed
  timeseries.csv  slot, each strategy's reward averaged over seeds and episodes
  oracle.csv      seed, share of states within 90% of the exhaustive best
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np

from daahm import experiments as ex
from daahm.config import load_config
from daahm.results import emit_table

log = logging.getLogger("reproduce")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--config", help="YAML config (default: desk preset)")
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--window", type=int, default=100)
    ap.add_argument("--oracle-samples", type=int, default=1000)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)

    curves, summary, series, oracle = {}, [], [], []
    for seed in args.seeds:
        start = time.perf_counter()
        cfg = load_config(args.config, None if args.config else "desk")
        cfg.seed = seed
        agent, hist = ex.train_agent(cfg)
        cmp = ex.compare(cfg, agent)
        curves[seed] = ex.moving_average(hist.mean_reward, args.window)
        summary += [(seed, *row) for row in cmp.summary()]
        series.append(np.array(cmp.timeseries())[:, 1:])
        share = ex.oracle_proximity(ex.oracle_samples(cfg, agent, args.oracle_samples))
        oracle.append((seed, share))
        rep = ex.convergence_report(hist.mean_reward, args.window)
        log.info("seed %d: ratio to fixed %.3f, oracle %.3f, converged %s (%.0fs)", seed,
                 cmp.ratio("daahm", "fixed"), share, rep.converged,
                 time.perf_counter() - start)
        names = list(cmp.totals)

    n = min(len(c) for c in curves.values())
    emit_table(["episode", *(f"seed_{s}" for s in curves)],
               [(i + args.window - 1, *(float(c[i]) for c in curves.values()))
                for i in range(n)], out / "curves.csv")
    emit_table(["seed", "strategy", "cumulative_reward", "mean_slot_reward", "ratio_to_fixed"],
               summary, out / "summary.csv")
    mean_series = np.mean(series, axis=0)
    emit_table(["slot", *names], [(t, *map(float, row)) for t, row in enumerate(mean_series)],
               out / "timeseries.csv")
    emit_table(["seed", "oracle_proximity"], oracle, out / "oracle.csv")

    totals = {s: np.mean([r[2] for r in summary if r[1] == s]) for s in names}
    print(f"{'strategy':<10} {'mean cumulative':>16}")
    for s in names:
        print(f"{s:<10} {totals[s]:>16.2f}")
    print(f"DAAHM / Fixed = {totals['daahm'] / totals['fixed']:.3f}")


if __name__ == "__main__":
    main()
