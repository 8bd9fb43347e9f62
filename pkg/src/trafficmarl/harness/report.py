"""Metrics persistence, plots and the action-chain feasibility report."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..mdp import estimate_transition_matrix, reach_probability, transience_check
from .experiment import AgentEpisodeStats, EpisodeMetrics

METRICS_HEADER = ["episode", "agent_id", "mean_reward", "mean_waiting_cars", "mean_loss"]
ACTIONS_HEADER = ["episode", "step", "agent_id", "action"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics(metrics: Sequence[EpisodeMetrics], path) -> None:
    if not metrics:
        raise ValueError("refusing to write empty metrics")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for m in metrics:
            for a, s in m.agents.items():
                w.writerow([m.episode, a, _fmt(s.mean_reward), _fmt(s.mean_waiting_cars), _fmt(s.mean_loss)])


def read_metrics(path) -> list[EpisodeMetrics]:
    by_episode: dict[int, EpisodeMetrics] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            ep = int(row["episode"])
            m = by_episode.setdefault(ep, EpisodeMetrics(ep, {}))
            m.agents[int(row["agent_id"])] = AgentEpisodeStats(
                float(row["mean_reward"]), float(row["mean_waiting_cars"]), float(row["mean_loss"]))
    return [by_episode[k] for k in sorted(by_episode)]


def write_action_log(log: Iterable[tuple[int, int, int, int]], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACTIONS_HEADER)
        w.writerows(log)


def read_action_log(path) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["agent_id"]), []).append(int(row["action"]))
    return out


def emit_plots(metrics: Sequence[EpisodeMetrics], out_dir, title: str = "") -> list[Path]:
    """Reward-vs-episode and waiting-cars-vs-episode SVGs, one line per agent."""
    if not metrics:
        raise ValueError("refusing to plot empty metrics")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    episodes = [m.episode for m in metrics]
    agent_ids = list(metrics[0].agents)
    written = []
    for attr, label, name in (("mean_reward", "Average reward", "reward_vs_episode.svg"),
                              ("mean_waiting_cars", "Average waiting cars", "waiting_vs_episode.svg")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for a in agent_ids:
            ax.plot(episodes, [getattr(m.agents[a], attr) for m in metrics], label=f"agent {a}")
        ax.set_xlabel("Episode")
        ax.set_ylabel(label)
        if title:
            ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        # fixed metadata keeps the SVG bytes reproducible
        fig.savefig(out_dir / name, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(out_dir / name)
    return written


def diagnose_feasibility(action_log: Mapping[int, Sequence[int]], horizon: int = 20,
                         transience_horizon: int = 200, tolerance: float = 1e-6) -> dict:
    """Per-agent empirical action chain, q_ij(horizon) table and transience per action."""
    report = {}
    for agent, actions in action_log.items():
        if len(actions) < 2:
            report[str(agent)] = {"notice": "insufficient data: fewer than 2 actions"}
            continue
        p = estimate_transition_matrix(list(actions))
        n = len(p)
        q = [[reach_probability(p, i, j, horizon) for j in range(n)] for i in range(n)]
        trans = {}
        for j in range(n):
            t = transience_check(p, j, transience_horizon, tolerance)
            trans[str(j)] = {"visit_sum": t.visit_sum, "converged": t.converged}
        report[str(agent)] = {
            "n_actions_logged": len(actions),
            "transition_matrix": p.tolist(),
            "reach_probability": q,
            "horizon": horizon,
            "transience": trans,
        }
    return report


def write_feasibility(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def summary_line(metrics: Sequence[EpisodeMetrics]) -> str:
    last = metrics[-1]
    vals = [s.mean_waiting_cars for s in last.agents.values() if not math.isnan(s.mean_waiting_cars)]
    return f"{len(metrics)} episodes; final-episode mean waiting cars {sum(vals) / len(vals):.3f}"
