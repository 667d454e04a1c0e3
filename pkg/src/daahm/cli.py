"""Command line entry point: ``daahm <train|evaluate|compare|oracle|gradcheck>``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import experiments as ex
from .agents import History
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config, save_config
from .nn import gradcheck_suite
from .results import emit_history, emit_results, emit_table

log = logging.getLogger("daahm")

CHECKPOINT_NAME = "agent.json"
GRADCHECK_TOL = 1e-4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--preset", choices=("desk", "full"),
                        help="base parameter set (default: full, or the config's preset)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--mode", choices=("static", "dynamic"),
                        help="static holds each episode's activity fixed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--episodes", type=int,
                        help="training episodes (evaluation episodes for `evaluate`)")
    common.add_argument("--eval-episodes", type=int, help="evaluation episodes")
    common.add_argument("--checkpoint", help="agent checkpoint to load instead of training")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="daahm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("train", parents=[common], help="train the DDPG agent")
    p = sub.add_parser("evaluate", parents=[common], help="evaluate one strategy")
    p.add_argument("--strategy", default="daahm", choices=ex.STRATEGIES)
    sub.add_parser("compare", parents=[common],
                   help="train, then evaluate all strategies on shared traces")
    p = sub.add_parser("oracle", parents=[common],
                       help="score strategies against brute-force best selections")
    p.add_argument("--samples", type=int, default=1000)
    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of the backprop code")
    p.add_argument("--nets", type=int, default=100)
    return parser


def _resolve(args):
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode:
        cfg.mode = args.mode
    if args.out:
        cfg.out = args.out
    if args.episodes is not None:
        if args.command == "evaluate":
            cfg.eval_episodes = args.episodes
        else:
            cfg.episodes = args.episodes
    if args.eval_episodes is not None:
        cfg.eval_episodes = args.eval_episodes
    return cfg


def _progress(episodes: int):
    every = max(episodes // 10, 1)
    start = time.perf_counter()

    def report(ep: int, hist: History):
        if (ep + 1) % every == 0 or ep + 1 == episodes:
            recent = hist.mean_reward[-every:]
            log.info("episode %d/%d  mean slot reward %.4f  noise %.3f  (%.0fs)", ep + 1,
                     episodes, sum(recent) / len(recent), hist.noise[-1],
                     time.perf_counter() - start)
    return report


def _trained_agent(cfg, args, out: Path):
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    agent, hist = ex.train_agent(cfg, _progress(cfg.episodes))
    save_checkpoint(agent, out / CHECKPOINT_NAME)
    emit_history(hist, out / "training.csv")
    if len(hist) >= 100:
        rep = ex.convergence_report(hist.mean_reward)
        log.info("convergence: late std %.4g vs spread %.4g, late mean %.4f vs early %.4f",
                 rep.late_std, rep.spread, rep.late_mean, rep.early_mean)
    return agent


def cmd_train(cfg, args, out: Path) -> int:
    args.checkpoint = None
    _trained_agent(cfg, args, out)
    print(f"checkpoint: {out / CHECKPOINT_NAME}\ntraining curve: {out / 'training.csv'}")
    return 0


def cmd_evaluate(cfg, args, out: Path) -> int:
    agent = None
    if args.strategy == "daahm":
        agent = load_checkpoint(args.checkpoint or out / CHECKPOINT_NAME)
    total, rows = ex.run_strategy(cfg, args.strategy, agent)
    path = out / f"eval_{args.strategy}.csv"
    emit_results(rows, path)
    print(f"{args.strategy}: cumulative reward {total:.6f} over {len(rows)} slots -> {path}")
    return 0


def cmd_compare(cfg, args, out: Path) -> int:
    agent = _trained_agent(cfg, args, out)
    cmp = ex.compare(cfg, agent)
    emit_results([r for name in cmp.rows for r in cmp.rows[name]], out / "results.csv")
    summary = cmp.summary()
    emit_table(("strategy", "cumulative_reward", "mean_slot_reward", "ratio_to_fixed"),
               summary, out / "summary.csv")
    emit_table(("slot", *cmp.totals), cmp.timeseries(), out / "timeseries.csv")
    print(f"{'strategy':<10} {'cumulative':>12} {'per slot':>10} {'vs fixed':>9}")
    for name, total, mean, ratio in summary:
        print(f"{name:<10} {total:>12.3f} {mean:>10.5f} {ratio:>9.3f}")
    return 0


def cmd_oracle(cfg, args, out: Path) -> int:
    agent = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if agent is None and (out / CHECKPOINT_NAME).exists():
        agent = load_checkpoint(out / CHECKPOINT_NAME)
    if agent is None:
        log.warning("no checkpoint found; scoring the baselines only")
    samples = ex.oracle_samples(cfg, agent, args.samples)
    names = list(samples[0].utilities) if samples else []
    header = ["sample", "device", "activity", "oracle_mask", "oracle_utility"]
    for n in names:
        header += [f"{n}_mask", f"{n}_utility"]
    rows = []
    for i, s in enumerate(samples):
        row = [i, s.device, s.activity, s.oracle_mask, s.oracle_utility]
        for n in names:
            row += [s.masks[n], s.utilities[n]]
        rows.append(row)
    emit_table(header, rows, out / "oracle.csv")
    for n in names:
        print(f"{n:<10} within 90% of the oracle on "
              f"{100 * ex.oracle_proximity(samples, n):.1f}% of {len(samples)} states")
    return 0


def cmd_gradcheck(cfg, args, out: Path) -> int:
    start = time.perf_counter()
    errors = gradcheck_suite(args.nets, seed=cfg.seed)
    worst = max(errors) if errors else 0.0
    ok = worst < GRADCHECK_TOL
    print(f"{len(errors)} networks, max relative error {worst:.3e} "
          f"({'ok' if ok else 'FAIL'}, tolerance {GRADCHECK_TOL:g}, "
          f"{time.perf_counter() - start:.1f}s)")
    return 0 if ok else 1


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
    "gradcheck": cmd_gradcheck,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("train", "compare"):
            save_config(cfg, out / "config.yaml")
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, CheckpointError, OSError) as exc:
        print(f"daahm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, don't dump a traceback at users
        log.debug("failure", exc_info=True)
        print(f"daahm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command())
