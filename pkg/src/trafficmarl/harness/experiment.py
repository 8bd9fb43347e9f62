"""Episode loop for learning and fixed-period runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import FixedPolicy
from ..dqn import DQNAgent
from ..env import SignalEnv
from ..sim import SimulationError, build_grid
from .config import ExperimentConfig
from .flows import FlowSchedule, load_flow_schedule, reference_schedule

log = logging.getLogger(__name__)


@dataclass
class AgentEpisodeStats:
    mean_reward: float
    mean_waiting_cars: float
    mean_loss: float


@dataclass
class EpisodeMetrics:
    episode: int
    agents: dict[int, AgentEpisodeStats]
    losses: dict[int, list[float]] = field(default_factory=dict)
    aborted: bool = False
    step_log: list[tuple[int, ...]] | None = None

    @property
    def global_mean_waiting_cars(self) -> float:
        vals = [s.mean_waiting_cars for s in self.agents.values()]
        return sum(vals) / len(vals) if vals else 0.0


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: list[EpisodeMetrics]
    # (episode, step, agent_id, action)
    action_log: list[tuple[int, int, int, int]]
    agents: dict[int, DQNAgent]

    def waiting_matrix(self) -> np.ndarray:
        """Mean waiting cars indexed [episode, agent] in config agent order."""
        ids = self.config.agent_ids
        return np.array([[m.agents[a].mean_waiting_cars for a in ids] for m in self.metrics])

    def actions_by_agent(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {a: [] for a in self.config.agent_ids}
        for _, _, a, act in self.action_log:
            out[a].append(act)
        return out


def load_schedule_for(config: ExperimentConfig, path=None) -> FlowSchedule:
    net = build_grid(config.grid_rows, config.grid_cols, config.road_length_m)
    path = path or config.schedule
    schedule = load_flow_schedule(path, net) if path else reference_schedule(net)
    schedule.check_horizon(config.episode_length_s)
    return schedule


def run_experiment(config: ExperimentConfig, schedule: FlowSchedule | None = None,
                   out_dir=None, debug: bool = False) -> RunResult:
    """Run every episode of ``config``; deterministic for a fixed seed.

    With ``out_dir`` set, per-agent checkpoints are written to
    ``out_dir/checkpoints``. ``debug`` keeps the raw per-step waiting log.
    """
    net = build_grid(config.grid_rows, config.grid_cols, config.road_length_m)
    if schedule is None:
        schedule = load_schedule_for(config)
    schedule.check_horizon(config.episode_length_s)
    ids = tuple(config.agent_ids)
    fixed = config.fixed_phase_s
    env = SignalEnv(net, schedule.vehicle_specs(), ids, config.reward_spec(), config.env_settings(),
                    agent_policy=FixedPolicy(fixed) if fixed else None, record_steps=debug)

    hp = config.hyperparams()
    agents: dict[int, DQNAgent] = {}
    if fixed is None:
        seeds = np.random.SeedSequence(config.seed).spawn(len(ids))
        agents = {a: DQNAgent(hp, np.random.default_rng(s), state_scale=config.w_sum)
                  for a, s in zip(ids, seeds)}

    metrics: list[EpisodeMetrics] = []
    action_log: list[tuple[int, int, int, int]] = []
    sim_seconds = 0

    for ep in range(config.episodes):
        env.reset(ep)
        losses: dict[int, list[float]] = {a: [] for a in ids}

        def policy(a, state):
            agent = agents[a]
            agent.steps = sim_seconds + env.world.clock.step
            action = agent.act(state)
            action_log.append((ep, env.world.clock.step, a, action))
            return action

        aborted = False
        try:
            while True:
                for a, tr in env.decision_cycle(policy if agents else None):
                    if agents:
                        agents[a].remember(tr)
                        loss = agents[a].learn()
                        if loss is not None:
                            losses[a].append(loss)
                if env.done:
                    break
        except SimulationError as exc:
            log.error("episode %d aborted: %s", ep, exc)
            aborted = True
        sim_seconds += env.world.clock.step

        stats = {a: AgentEpisodeStats(env.mean_reward(a), env.mean_waiting_cars(a),
                                      float(np.mean(losses[a])) if losses[a] else math.nan)
                 for a in ids}
        metrics.append(EpisodeMetrics(ep, stats, losses, aborted,
                                      list(env.step_log) if debug else None))
        log.info("episode %d: mean waiting cars %.3f", ep, metrics[-1].global_mean_waiting_cars)

    if out_dir is not None and agents:
        ckpt = Path(out_dir) / "checkpoints"
        ckpt.mkdir(parents=True, exist_ok=True)
        for a, agent in agents.items():
            agent.save(ckpt / f"agent_{a}.npz")
    return RunResult(config, metrics, action_log, agents)


def peak_after(result: RunResult, first_episode: int = 15) -> float:
    """Largest per-agent episode mean of waiting cars from ``first_episode`` on."""
    w = result.waiting_matrix()[first_episode:]
    return float(w.max())


def final_mean(result: RunResult, last: int = 10) -> float:
    """Mean waiting cars averaged over agents and the last ``last`` episodes."""
    return float(result.waiting_matrix()[-last:].mean())
