"""CSV output for per-slot results, summaries, time series and training curves."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from .agents import History, Row

HEADER = ("strategy", "episode", "slot", "activity", "reward", "relevance", "cost",
          "alpha_mask")


def _f(x: float) -> str:
    # 17 significant digits round-trips every float64
    return format(x, ".17g")


def _open(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


def emit_results(rows: Iterable[Row], path) -> None:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([r.strategy, r.episode, r.slot, r.activity, _f(r.reward),
                        _f(r.relevance), _f(r.cost), r.alpha_mask])


def read_results(path) -> list[Row]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [Row(s, int(e), int(sl), int(a), float(r), float(rel), float(c), int(m))
                for s, e, sl, a, r, rel, c, m in reader]


def emit_history(hist: History, path) -> None:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "mean_reward", "total_reward", "critic_loss",
                    "actor_objective", "noise"])
        for i in range(len(hist)):
            w.writerow([i, _f(hist.mean_reward[i]), _f(hist.total_reward[i]),
                        _f(hist.critic_loss[i]), _f(hist.actor_objective[i]),
                        _f(hist.noise[i])])


def emit_table(header: Sequence[str], rows: Iterable[Sequence], path) -> None:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(x) if isinstance(x, float) else x for x in row])
