import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import first_passage_by_paths, random_stochastic, reach_by_paths
from trafficmarl.mdp import (ActionSpec, AgentSet, RewardCase, apply_action, check_stochastic,
                             estimate_transition_matrix, first_passage, first_passage_series,
                             reach_probability, reward, transience_check)
from trafficmarl.sim import ConfigurationError, TrafficLight
from trafficmarl.v2x import LaneWaitStats


def _light(durations):
    return TrafficLight(0, list(durations))


@pytest.mark.parametrize("before,action,after", [
    ((10, 10, 10, 10), 0, [15, 10, 10, 10]),
    ((40, 10, 10, 10), 0, [40, 10, 10, 10]),
    ((15, 15, 10, 10), 2, [10, 10, 15, 10]),
])
def test_apply_action_examples(before, action, after):
    light = _light(before)
    assert apply_action(light, ActionSpec(action, 5, 10, 40)) == after
    assert light.phase_durations_s == after


def test_apply_action_mid_cycle_rejected():
    light = _light((10, 10, 10, 10))
    light.tick()
    with pytest.raises(RuntimeError):
        apply_action(light, ActionSpec(0))


@settings(max_examples=200)
@given(st.lists(st.integers(0, 3), max_size=40), st.integers(1, 15))
def test_apply_action_stays_in_bounds(actions, inc):
    light = _light((10, 10, 10, 10))
    for a in actions:
        d = apply_action(light, ActionSpec(a, inc, 10, 40))
        assert all(10 <= x <= 40 for x in d)


def test_action_spec_validation():
    with pytest.raises(ValueError):
        ActionSpec(4)


def _stats(counts, times=None):
    times = times or [0.0] * len(counts)
    return [LaneWaitStats(i, c, t) for i, (c, t) in enumerate(zip(counts, times))]


def test_reward_examples():
    assert reward(RewardCase(1, 50), _stats([0, 0, 0, 0])) == 1.0
    assert reward(RewardCase(1, 50), _stats([3, 2, 4, 1])) == pytest.approx(1 / 11)
    assert reward(RewardCase(1, 10), _stats([3, 2, 4, 1])) == 0.0
    assert reward(RewardCase(1, 11), _stats([3, 2, 4, 1])) == pytest.approx(1 / 11)
    assert reward(RewardCase(3), _stats([5, 0, 0, 0]), [_stats([3, 4, 0, 0])]) == pytest.approx(1 / 13)
    assert reward(RewardCase(2), _stats([1, 1, 0, 0], [4.0, 6.0, 0, 0])) == pytest.approx(1 / 11)
    assert reward(RewardCase(4), _stats([0] * 4, [1.0, 0, 0, 0]),
                  [_stats([0] * 4, [2.0, 0, 0, 0])]) == pytest.approx(1 / 4)


def test_unshared_cases_ignore_others():
    others = [_stats([9, 9, 9, 9], [9.0] * 4)]
    assert reward(RewardCase(1), _stats([1, 0, 0, 0]), others) == 0.5
    assert reward(RewardCase(2), _stats([0] * 4, [1.0, 0, 0, 0]), others) == 0.5


def test_reward_rejects_negative():
    with pytest.raises(ValueError):
        reward(RewardCase(1), _stats([-1, 0, 0, 0]))


def test_reward_case_validation():
    with pytest.raises(ValueError):
        RewardCase(5)
    with pytest.raises(ValueError):
        RewardCase(1, 0)


def test_agent_set():
    assert AgentSet((8, 10)).count == 2
    with pytest.raises(ConfigurationError):
        AgentSet((1, 2, 3))
    with pytest.raises(ConfigurationError):
        AgentSet((8, 8))
    with pytest.raises(ConfigurationError):
        AgentSet((8, 99)).validate(36)


def test_first_passage_examples():
    uniform = [[0.5, 0.5], [0.5, 0.5]]
    # paths 0->1 (0.5) and 0->0->1 (0.25)
    assert first_passage(uniform, 0, 1, 1) == 0.5
    assert first_passage(uniform, 0, 1, 2) == 0.25
    assert reach_probability(uniform, 0, 1, 2) == 0.75
    absorbing = np.array([[1.0, 0.0], [0.5, 0.5]])
    assert all(f == 0 for f in first_passage_series(absorbing, 0, 1, 10))
    assert reach_probability(absorbing, 0, 1, 10) == 0
    assert first_passage(np.eye(3), 1, 1, 1) == 1.0


def test_non_stochastic_rejected():
    with pytest.raises(ConfigurationError):
        first_passage([[0.5, 0.6], [0.5, 0.5]], 0, 1, 2)
    with pytest.raises(ConfigurationError):
        check_stochastic([[1.0, 0.0]])


def test_reach_probability_approaches_one_for_irreducible_chain():
    rng = np.random.default_rng(3)
    p = random_stochastic(rng, 3, zeros=0.0)
    assert reach_probability(p, 0, 2, 10) == pytest.approx(reach_by_paths(p, 0, 2, 10), abs=1e-12)
    assert reach_probability(p, 0, 2, 200) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_first_passage_identity(seed):
    # P_ij^(n) = sum_k f_ij(k) P_jj^(n-k)
    rng = np.random.default_rng(seed)
    p = random_stochastic(rng, 4)
    for i in range(4):
        for j in range(4):
            f = first_passage_series(p, i, j, 10)
            for n in range(1, 11):
                pn = np.linalg.matrix_power(p, n)[i, j]
                recon = sum(f[k - 1] * np.linalg.matrix_power(p, n - k)[j, j] for k in range(1, n + 1))
                assert abs(recon - pn) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_reach_matches_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_stochastic(rng, 3)
    for i in range(3):
        for j in range(3):
            qs = [reach_probability(p, i, j, m) for m in range(1, 9)]
            assert all(b >= a - 1e-15 for a, b in zip(qs, qs[1:]))
            assert qs[-1] <= 1 + 1e-9
            for m, q in enumerate(qs, start=1):
                assert abs(q - reach_by_paths(p, i, j, m)) < 1e-12


def test_enumeration_oracle_sanity():
    assert first_passage_by_paths([[0.5, 0.5], [0.5, 0.5]], 0, 1, 2) == 0.25


def test_transience_examples():
    t = transience_check(np.eye(2), 0, 50)
    assert t.visit_sum == 50 and not t.converged
    no_return = np.array([[0.0, 1.0], [0.0, 1.0]])
    t = transience_check(no_return, 0, 50)
    assert t.visit_sum == 0 and t.converged
    leaky = np.array([[0.9, 0.1], [0.0, 1.0]])
    t = transience_check(leaky, 0, 400, tolerance=1e-12)
    assert t.visit_sum == pytest.approx(9.0, abs=1e-9)  # sum_n 0.9^n
    assert t.converged


def test_estimate_transition_matrix():
    p = estimate_transition_matrix([0, 0, 0, 0])
    assert p[0].tolist() == [1, 0, 0, 0]
    assert np.allclose(p[1:], 0.25)
    alt = estimate_transition_matrix([0, 1] * 20)
    assert alt[0, 1] == 1.0 and alt[1, 0] == 1.0
    check_stochastic(alt)
