"""Experiment configuration: a flat YAML mapping validated into :class:`ExperimentConfig`.

Every key is optional; missing keys take the defaults below. Unknown
keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..dqn import Hyperparams
from ..env import EnvSettings
from ..mdp import DEFAULT_AGENT_IDS, AgentSet, RewardCase
from ..sim import ConfigurationError

CONTROLLERS = ("fixed30", "fixed40", "dqn")


@dataclass
class ExperimentConfig:
    grid_rows: int = 6
    grid_cols: int = 6
    road_length_m: float = 150.0
    num_agents: int = 8
    agent_ids: list[int] | None = None
    reward_case: int = 1
    episodes: int = 60
    episode_length_s: int = 500
    seed: int = 0
    controller: str = "dqn"
    schedule: str | None = None  # CSV path; None means the bundled 128-vehicle scenario
    coverage_area_m2: float = 45_216.0
    w_sum: float = 50.0
    increment_s: int = 5
    min_phase_s: int = 10
    max_phase_s: int = 40
    base_phase_s: int = 10
    other_phase_s: int = 30
    # learner
    learning_rate: float = 0.001
    gamma: float = 0.95
    epsilon_initial: float = 0.95
    epsilon_final: float = 0.01
    epsilon_decay: float = 0.001
    minibatch: int = 32
    memory_size: int = 10000
    target_sync: float = 0.01
    target_mode: str = "soft"
    target_hard_every: int = 100
    prioritized_replay: bool = False
    hidden_layers: list[int] = field(default_factory=lambda: [24, 24, 24])

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigurationError("grid dimensions must be positive")
        if not self.road_length_m > 0:
            raise ConfigurationError("road_length_m must be positive")
        if self.num_agents not in DEFAULT_AGENT_IDS:
            raise ConfigurationError(f"num_agents must be one of 2, 4, 8, got {self.num_agents}")
        if self.agent_ids is None:
            self.agent_ids = list(DEFAULT_AGENT_IDS[self.num_agents])
        self.agent_ids = [int(a) for a in self.agent_ids]
        if len(self.agent_ids) != self.num_agents:
            raise ConfigurationError(
                f"agent_ids has {len(self.agent_ids)} entries but num_agents is {self.num_agents}")
        AgentSet(tuple(self.agent_ids)).validate(self.grid_rows * self.grid_cols)
        if self.reward_case not in (1, 2, 3, 4):
            raise ConfigurationError(f"reward_case must be 1..4, got {self.reward_case}")
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if self.episode_length_s < 1:
            raise ConfigurationError("episode_length_s must be >= 1")
        if not self.coverage_area_m2 > 0:
            raise ConfigurationError("coverage_area_m2 must be positive")
        if not self.w_sum > 0:
            raise ConfigurationError("w_sum must be positive")
        if not 0 < self.min_phase_s <= self.base_phase_s <= self.max_phase_s:
            raise ConfigurationError("need 0 < min_phase_s <= base_phase_s <= max_phase_s")
        if self.increment_s < 1 or self.other_phase_s < 1:
            raise ConfigurationError("increment_s and other_phase_s must be >= 1")
        try:
            self.hyperparams()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            learning_rate=self.learning_rate, gamma=self.gamma,
            epsilon_initial=self.epsilon_initial, epsilon_final=self.epsilon_final,
            epsilon_decay=self.epsilon_decay, minibatch=self.minibatch,
            memory_size=self.memory_size, target_sync=self.target_sync,
            target_mode=self.target_mode, target_hard_every=self.target_hard_every,
            prioritized_replay=self.prioritized_replay, hidden=tuple(self.hidden_layers))

    def env_settings(self) -> EnvSettings:
        return EnvSettings(
            coverage_area_m2=self.coverage_area_m2, episode_length_s=self.episode_length_s,
            increment_s=self.increment_s, min_phase_s=self.min_phase_s,
            max_phase_s=self.max_phase_s, base_phase_s=self.base_phase_s,
            other_phase_s=self.other_phase_s)

    def reward_spec(self) -> RewardCase:
        return RewardCase(self.reward_case, self.w_sum)

    @property
    def fixed_phase_s(self) -> int | None:
        return {"fixed30": 30, "fixed40": 40}.get(self.controller)

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_mapping(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    if "agent_ids" in data and "num_agents" not in data and data["agent_ids"] is not None:
        data["num_agents"] = len(data["agent_ids"])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a key-value mapping")
    return config_from_mapping(data)
