"""Multi-agent signal-control environment built on the grid simulator.

Each agent owns one intersection. It decides at the start of every
signal cycle of its own light; agents that reach a boundary on the
same step decide together from one world snapshot. The reward for a
decision is evaluated when that cycle ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

from .baselines import FixedPolicy, fixed_controller
from .dqn import Transition
from .mdp import ActionSpec, RewardCase, apply_action, reward
from .sim import (CRUISE_SPEED, MIN_GAP, WAIT_SPEED_THRESHOLD, RoadNetwork, SimClock,
                  TrafficLight, World, make_vehicles)
from .v2x import (DEFAULT_COVERAGE_AREA_M2, CoverageRegion, StateVector, agent_wait_stats,
                  region_for, sense_state, wait_snapshot)

Policy = Callable[[int, StateVector], int]


class AgentTransition(NamedTuple):
    agent_id: int
    transition: Transition


@dataclass
class EnvSettings:
    coverage_area_m2: float = DEFAULT_COVERAGE_AREA_M2
    episode_length_s: int = 500
    increment_s: int = 5
    min_phase_s: int = 10
    max_phase_s: int = 40
    base_phase_s: int = 10
    other_phase_s: int = 30
    cruise_speed: float = CRUISE_SPEED
    min_gap: float = MIN_GAP


@dataclass
class _AgentTrack:
    region: CoverageRegion
    state: StateVector | None = None
    action: int | None = None
    since: dict = field(default_factory=dict)
    reward_sum: float = 0.0
    decisions: int = 0
    waiting_sum: float = 0.0


class SignalEnv:
    """Episodic environment for a set of agent intersections.

    ``routes`` holds ``(vehicle_id, lane_ids, depart_step)`` triples.
    With ``agent_policy`` set, agent lights follow that fixed policy
    instead of actions, which is how baselines are measured on the same
    monitored intersections.
    """

    def __init__(self, network: RoadNetwork, routes: Sequence[tuple[int, Sequence[int], int]],
                 agent_ids: Sequence[int], case: RewardCase, settings: EnvSettings | None = None,
                 agent_policy: FixedPolicy | None = None, record_steps: bool = False):
        self.network = network
        self.routes = list(routes)
        self.agent_ids = tuple(agent_ids)
        self.case = case
        self.settings = settings or EnvSettings()
        self.agent_policy = agent_policy
        self.record_steps = record_steps
        self.other_policy = FixedPolicy(self.settings.other_phase_s)
        self.world: World | None = None
        self.tracks: dict[int, _AgentTrack] = {}
        self.step_log: list[tuple[int, ...]] = []

    # -- episode lifecycle -------------------------------------------------

    def reset(self, episode: int = 0) -> None:
        s = self.settings
        lights = {}
        for k in self.network.intersections:
            light = TrafficLight(k)
            if k in self.agent_ids:
                if self.agent_policy is not None:
                    fixed_controller(light, self.agent_policy)
                else:
                    light.phase_durations_s = [s.base_phase_s] * 4
            else:
                fixed_controller(light, self.other_policy)
            lights[k] = light
        self.world = World(self.network, make_vehicles(self.routes), lights,
                           SimClock(0, episode), s.cruise_speed, s.min_gap)
        self.tracks = {a: _AgentTrack(region_for(self.world, a, s.coverage_area_m2))
                       for a in self.agent_ids}
        self.step_log = []

    @property
    def done(self) -> bool:
        return self.world.clock.step >= self.settings.episode_length_s

    def ready_agents(self) -> list[int]:
        if self.done:
            return []
        return [a for a in self.agent_ids if self.world.lights[a].at_cycle_boundary]

    def observe(self, agent: int) -> StateVector:
        return sense_state(agent, self.tracks[agent].region, self.world)

    def waiting_cars(self, agent: int) -> int:
        """Waiting vehicles sensed on the agent's approaches right now."""
        region = self.tracks[agent].region
        lanes = self.network.lanes
        n = 0
        for lane_id in self.network.approaches[agent]:
            lane = lanes[lane_id]
            for v in self.world.queues[lane_id]:
                if v.speed_mps < WAIT_SPEED_THRESHOLD and region.contains(lane.point_at(v.lane_pos_m)):
                    n += 1
        return n

    # -- decisions -----------------------------------------------------------

    def _decide(self, ready: list[int], policy: Policy | None) -> None:
        states = {a: self.observe(a) for a in ready}
        snapshot = wait_snapshot(self.world)
        actions = {a: (policy(a, states[a]) if policy is not None else None) for a in ready}
        s = self.settings
        for a in ready:
            tr = self.tracks[a]
            light = self.world.lights[a]
            if actions[a] is None:
                if self.agent_policy is not None:
                    fixed_controller(light, self.agent_policy)
            else:
                apply_action(light, ActionSpec(actions[a], s.increment_s, s.min_phase_s, s.max_phase_s))
            tr.state, tr.action, tr.since = states[a], actions[a], snapshot

    def _step(self) -> None:
        self.world.step()
        counts = tuple(self.waiting_cars(a) for a in self.agent_ids)
        for a, n in zip(self.agent_ids, counts):
            self.tracks[a].waiting_sum += n
        if self.record_steps:
            self.step_log.append(counts)

    def _close(self, finishers: list[int], done: bool) -> list[AgentTransition]:
        """Rewards and next states for agents whose decision window just ended."""
        out = []
        for a in finishers:
            tr = self.tracks[a]
            own = agent_wait_stats(a, tr.region, self.world, tr.since)
            others = []
            if self.case.shared:
                others = [agent_wait_stats(b, self.tracks[b].region, self.world, tr.since)
                          for b in self.agent_ids if b != a]
            r = reward(self.case, own, others)
            tr.reward_sum += r
            tr.decisions += 1
            out.append(AgentTransition(a, Transition(tuple(tr.state), tr.action, r,
                                                     tuple(self.observe(a)), done)))
            tr.state = tr.action = None
        return out

    def decision_cycle(self, policy: Policy | None = None) -> list[AgentTransition]:
        """Let ready agents act, then simulate until some decision window closes.

        Returns one ``<s, a, r, s'>`` record per agent whose cycle ended
        (or every open window at episode end, marked terminal).
        """
        ready = self.ready_agents()
        if ready:
            self._decide(ready, policy)
        while not self.done:
            self._step()
            if self.done:
                break
            finishers = [a for a in self.agent_ids
                         if self.tracks[a].state is not None and self.world.lights[a].at_cycle_boundary]
            if finishers:
                return self._close(finishers, done=False)
        open_ = [a for a in self.agent_ids if self.tracks[a].state is not None]
        return self._close(open_, done=True)

    # -- per-episode summaries ------------------------------------------------

    def mean_waiting_cars(self, agent: int) -> float:
        steps = self.world.clock.step
        return self.tracks[agent].waiting_sum / steps if steps else 0.0

    def mean_reward(self, agent: int) -> float:
        tr = self.tracks[agent]
        return tr.reward_sum / tr.decisions if tr.decisions else 0.0
