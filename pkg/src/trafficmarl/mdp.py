"""Per-agent MDP pieces: phase-duration actions, rewards and action-chain analysis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .sim import ConfigurationError, TrafficLight
from .v2x import LaneWaitStats

N_ACTIONS = 4
DEFAULT_AGENT_IDS = {
    2: (8, 10),
    4: (8, 10, 15, 17),
    8: (8, 10, 15, 17, 20, 22, 27, 29),
}


@dataclass(frozen=True)
class ActionSpec:
    action: int
    increment_s: int = 5
    min_phase_s: int = 10
    max_phase_s: int = 40

    def __post_init__(self):
        if not 0 <= self.action < N_ACTIONS:
            raise ValueError(f"action must be in [0, {N_ACTIONS}), got {self.action}")
        if not 0 < self.min_phase_s <= self.max_phase_s:
            raise ValueError("need 0 < min_phase_s <= max_phase_s")


def apply_action(light: TrafficLight, spec: ActionSpec) -> list[int]:
    """Set the durations of the cycle that starts now.

    The chosen phase grows by ``increment_s`` and every other phase
    shrinks by the same amount, each clamped to the phase bounds.
    """
    if not light.at_cycle_boundary:
        raise RuntimeError(f"light {light.intersection} is mid-cycle; actions apply at cycle boundaries")
    lo, hi, d = spec.min_phase_s, spec.max_phase_s, spec.increment_s
    durations = [
        min(hi, max(lo, dur + d)) if p == spec.action else min(hi, max(lo, dur - d))
        for p, dur in enumerate(light.phase_durations_s)
    ]
    light.phase_durations_s = durations
    return durations


@dataclass(frozen=True)
class RewardCase:
    case: int
    w_sum_threshold: float = 50

    def __post_init__(self):
        if self.case not in (1, 2, 3, 4):
            raise ValueError(f"reward case must be 1..4, got {self.case}")
        if not self.w_sum_threshold > 0:
            raise ValueError("w_sum_threshold must be positive")

    @property
    def shared(self) -> bool:
        return self.case in (3, 4)

    @property
    def uses_time(self) -> bool:
        return self.case in (2, 4)


def _checked(stats: Iterable[LaneWaitStats]) -> list[LaneWaitStats]:
    stats = list(stats)
    for s in stats:
        if s.waiting_count < 0 or s.waiting_time_s < 0:
            raise ValueError(f"negative waiting statistic on lane {s.lane}: {s}")
    return stats


def reward(case: RewardCase, own: Sequence[LaneWaitStats],
           others: Sequence[Sequence[LaneWaitStats]] = ()) -> float:
    own = _checked(own)
    others = [_checked(o) for o in others] if case.shared else []
    pick = (lambda s: s.waiting_time_s) if case.uses_time else (lambda s: s.waiting_count)
    own_sum = sum(pick(s) for s in own)
    if case.case == 1 and own_sum >= case.w_sum_threshold:
        return 0.0
    total = own_sum + sum(pick(s) for o in others for s in o)
    return 1.0 / (1.0 + total)


@dataclass(frozen=True)
class AgentSet:
    agent_ids: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.agent_ids)) != len(self.agent_ids):
            raise ConfigurationError(f"duplicate agent ids in {self.agent_ids}")
        if len(self.agent_ids) not in DEFAULT_AGENT_IDS:
            raise ConfigurationError(f"number of agents must be one of 2, 4, 8, got {len(self.agent_ids)}")

    @property
    def count(self) -> int:
        return len(self.agent_ids)

    def validate(self, n_intersections: int) -> None:
        bad = [a for a in self.agent_ids if not 0 <= a < n_intersections]
        if bad:
            raise ConfigurationError(f"agent ids {bad} are not intersections of the grid")


# --- action-chain analysis -------------------------------------------------

def check_stochastic(p, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ConfigurationError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise ConfigurationError("transition probabilities must lie in [0, 1]")
    if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise ConfigurationError("transition matrix rows must sum to 1")
    return p


def _powers(p: np.ndarray, n: int) -> list[np.ndarray]:
    """[P^0, P^1, ..., P^n]."""
    out = [np.eye(len(p))]
    for _ in range(n):
        out.append(out[-1] @ p)
    return out


def first_passage_series(p, i: int, j: int, n: int) -> np.ndarray:
    """First-passage probabilities f_ij(1..n) by the renewal recursion."""
    p = check_stochastic(p)
    if n < 1:
        raise ValueError("n must be >= 1")
    pw = _powers(p, n)
    f = np.zeros(n + 1)
    for m in range(1, n + 1):
        f[m] = pw[m][i, j] - sum(f[k] * pw[m - k][j, j] for k in range(1, m))
    return f[1:]


def first_passage(p, i: int, j: int, n: int) -> float:
    """Probability that the chain started at ``i`` first hits ``j`` at step ``n``."""
    return float(first_passage_series(p, i, j, n)[-1])


def reach_probability(p, i: int, j: int, m: int) -> float:
    """Probability of visiting ``j`` at least once within ``m`` steps from ``i``."""
    return float(first_passage_series(p, i, j, m).sum())


class TransienceReport(NamedTuple):
    visit_sum: float
    converged: bool


def transience_check(p, j: int, horizon: int, tolerance: float = 1e-9,
                     window: int = 10) -> TransienceReport:
    """Partial expected number of returns to ``j`` over ``horizon`` steps.

    ``converged`` is True when the last ``window`` increments P_jj^(n)
    all fall below ``tolerance``, i.e. the visit sum looks finite and
    ``j`` is transient.
    """
    p = check_stochastic(p)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    incs = np.empty(horizon)
    pk = np.eye(len(p))
    for n in range(horizon):
        pk = pk @ p
        incs[n] = pk[j, j]
    tail = incs[-min(window, horizon):]
    return TransienceReport(float(incs.sum()), bool(np.all(tail < tolerance)))


def estimate_transition_matrix(actions: Sequence[int], n_actions: int = N_ACTIONS) -> np.ndarray:
    """Empirical action-to-action frequencies.

    Rows for actions never left from get add-one smoothing, which makes
    them uniform.
    """
    counts = np.zeros((n_actions, n_actions))
    for a, b in zip(actions[:-1], actions[1:]):
        counts[a, b] += 1
    empty = counts.sum(axis=1) == 0
    counts[empty] += 1
    return counts / counts.sum(axis=1, keepdims=True)
