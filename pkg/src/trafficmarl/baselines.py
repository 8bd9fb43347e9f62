"""Fixed-period signal control."""

from __future__ import annotations

from dataclasses import dataclass

from .sim import TrafficLight


@dataclass(frozen=True)
class FixedPolicy:
    phase_duration_s: int = 30

    def __post_init__(self):
        if self.phase_duration_s <= 0:
            raise ValueError(f"phase duration must be positive, got {self.phase_duration_s}")

    @property
    def cycle_length_s(self) -> int:
        return 4 * self.phase_duration_s


def fixed_controller(light: TrafficLight, policy: FixedPolicy) -> list[int]:
    """Give every phase of ``light`` the policy's duration; reads no traffic state."""
    light.phase_durations_s = [policy.phase_duration_s] * 4
    return light.phase_durations_s


def phase_schedule(policy: FixedPolicy, horizon_s: int) -> list[int]:
    """Active phase at each second ``0..horizon_s-1`` under the fixed policy."""
    light = TrafficLight(-1)
    fixed_controller(light, policy)
    phases = []
    for _ in range(horizon_s):
        phases.append(light.current_phase)
        light.tick()
    return phases
