"""Acceptance suite. Each test records one PASS/FAIL line shown in the terminal summary.

Run with ``pytest tests/test_acceptance.py -s`` to also see the lines as they happen.
"""
import time
from fractions import Fraction

import numpy as np

from oracles import first_passage_by_paths, random_stochastic, reach_by_paths, reward_by_formula, value_iteration
from trafficmarl.dqn import DQNAgent, Hyperparams, QNetwork, Transition, minibatch_loss_and_grads
from trafficmarl.env import SignalEnv
from trafficmarl.harness.config import ExperimentConfig
from trafficmarl.harness.experiment import final_mean, peak_after, run_experiment
from trafficmarl.harness.report import write_metrics
from trafficmarl.mdp import RewardCase, first_passage, reach_probability, reward
from trafficmarl.v2x import LaneWaitStats


def _report(record, number, name, checks, elapsed, budget=None):
    """Record every named check plus the runtime budget, then assert them all."""
    checks = dict(checks)
    if budget is not None:
        checks[f"runtime {elapsed:.2f}s < {budget}s"] = elapsed < budget
    failed = [k for k, ok in checks.items() if not ok]
    detail = "; ".join(f"{k}={'ok' if ok else 'FAILED'}" for k, ok in checks.items())
    record(number, name, not failed, f"({detail})")
    print(f"criterion {number}: {'PASS' if not failed else 'FAIL'} {detail}")
    assert not failed, f"criterion {number} failed: {failed}"


def test_criterion_1_gradient_oracle(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        net = QNetwork((4, 3, 4), rng=rng)
        for p in net.params:
            p[...] = rng.normal(size=p.shape)
        batch = int(rng.integers(1, 9))
        states = rng.normal(size=(batch, 4))
        actions = rng.integers(0, 4, size=batch)
        targets = rng.normal(size=batch)
        _, grads, _ = minibatch_loss_and_grads(net, states, actions, targets)
        for p, g in zip(net.params, grads):
            for idx in np.ndindex(p.shape):
                keep = p[idx]
                p[idx] = keep + h
                up = minibatch_loss_and_grads(net, states, actions, targets)[0]
                p[idx] = keep - h
                down = minibatch_loss_and_grads(net, states, actions, targets)[0]
                p[idx] = keep
                numeric = (up - down) / (2 * h)
                rel = abs(numeric - g[idx]) / max(abs(numeric), abs(g[idx]), 1e-8)
                worst = max(worst, rel)
    _report(acceptance_report, 1, "gradient oracle",
            {f"max rel err {worst:.2e} < 1e-4": worst < 1e-4}, time.perf_counter() - t0, 10)


def _random_lanes(rng):
    counts = rng.integers(0, 15, size=4)
    times = rng.integers(0, 60, size=4) * counts
    return [(int(c), int(t)) for c, t in zip(counts, times)]


def _as_stats(raw):
    return [LaneWaitStats(i, c, float(t)) for i, (c, t) in enumerate(raw)]


def test_criterion_2_reward_functions(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    w_sum = 50
    exact = bounded = monotone = True
    for case in (1, 2, 3, 4):
        spec = RewardCase(case, w_sum)
        for _ in range(50):
            own = _random_lanes(rng)
            others = [_random_lanes(rng) for _ in range(int(rng.integers(0, 4)))]
            got = reward(spec, _as_stats(own), [_as_stats(o) for o in others])
            want = reward_by_formula(case, own, others, w_sum)
            exact &= abs(Fraction(got) - want) <= Fraction(1, 10**15)
            bounded &= 0.0 <= got <= 1.0
            # raising any single statistic never raises the reward
            for lane in range(4):
                for field in (0, 1):
                    bumped = [list(x) for x in own]
                    bumped[lane][field] += 1
                    after = reward(spec, _as_stats(bumped), [_as_stats(o) for o in others])
                    monotone &= after <= got
    guard = True
    for total in range(0, 80):
        counts = [total // 4 + (1 if k < total % 4 else 0) for k in range(4)]
        r = reward(RewardCase(1, w_sum), _as_stats([(c, 0) for c in counts]))
        guard &= (r == 0.0) if total >= w_sum else (r == 1.0 / (1 + total))
    _report(acceptance_report, 2, "reward functions",
            {"exact values": exact, "bounds [0,1]": bounded, "monotone": monotone, "W_sum guard": guard},
            time.perf_counter() - t0, 1)


def test_criterion_3_first_passage_oracle(acceptance_report):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(5)
    for n_states in (3, 4):
        for _ in range(3):
            p = random_stochastic(rng, n_states)
            for i in range(n_states):
                for j in range(n_states):
                    for n in range(1, 9):
                        worst = max(worst, abs(first_passage(p, i, j, n) - first_passage_by_paths(p, i, j, n)),
                                    abs(reach_probability(p, i, j, n) - reach_by_paths(p, i, j, n)))
    _report(acceptance_report, 3, "first-passage oracle",
            {f"max abs err {worst:.1e} < 1e-12": worst < 1e-12}, time.perf_counter() - t0, 10)


# s0: a0 stays (0.1), a1 -> s1 (0); s1: a0 -> s0 (1), a1 stays (0.2); optimum s0->a1, s1->a0
TOY = {(0, 0): (0, 0.1), (0, 1): (1, 0.0), (1, 0): (0, 1.0), (1, 1): (1, 0.2)}


def test_criterion_4_bellman_fixed_point(acceptance_report):
    t0 = time.perf_counter()
    gamma = 0.9
    q = value_iteration(TOY, 2, 2, gamma)
    residual = max(abs(q[s, a] - (r + gamma * q[s2].max())) for (s, a), (s2, r) in TOY.items())
    optimal = q.argmax(axis=1).tolist()

    hp = Hyperparams(gamma=gamma, memory_size=64, minibatch=16)
    agent = DQNAgent(hp, np.random.default_rng(0), state_dim=2, n_actions=2)
    one_hot = np.eye(2)
    for _ in range(16):
        for (s, a), (s2, r) in TOY.items():
            agent.remember(Transition(tuple(one_hot[s]), a, r, tuple(one_hot[s2])))
    for _ in range(4000):
        agent.learn()
    learned = [agent.act(one_hot[s], greedy=True) for s in (0, 1)]
    _report(acceptance_report, 4, "Bellman fixed point",
            {f"residual {residual:.1e} <= 1e-10": residual <= 1e-10,
             f"value-iteration policy {optimal} == [1, 0]": optimal == [1, 0],
             f"DQN policy {learned} == {optimal}": learned == optimal},
            time.perf_counter() - t0, 60)


def test_criterion_5_baselines_congested(acceptance_report, ref_schedule):
    t0 = time.perf_counter()
    checks = {}
    for controller in ("fixed30", "fixed40"):
        result = run_experiment(ExperimentConfig(controller=controller, episodes=60), ref_schedule)
        per_agent = result.waiting_matrix().mean(axis=0)
        checks[f"{controller} min agent mean {per_agent.min():.3f} > 1"] = bool(np.all(per_agent > 1))
    _report(acceptance_report, 5, "baselines congested", checks, time.perf_counter() - t0, 120)


def test_criterion_6_headline_improvement(acceptance_report, ref_schedule):
    t0 = time.perf_counter()
    baseline = peak_after(run_experiment(ExperimentConfig(controller="fixed40", episodes=60), ref_schedule), 15)
    reductions = []
    for seed in range(5):
        cfg = ExperimentConfig(controller="dqn", num_agents=8, reward_case=2, episodes=60, seed=seed)
        peak = peak_after(run_experiment(cfg, ref_schedule), 15)
        reductions.append(1 - peak / baseline)
    med = float(np.median(reductions))
    _report(acceptance_report, 6, "headline improvement",
            {f"median reduction {med:.1%} (fixed40 peak {baseline:.3f}, per-seed "
             f"{[round(x, 3) for x in reductions]}) >= 25%": med >= 0.25},
            time.perf_counter() - t0, 1800)


def test_criterion_7_case_ordering(acceptance_report, ref_schedule):
    t0 = time.perf_counter()
    medians = {}
    for case in (1, 2, 3, 4):
        finals = [final_mean(run_experiment(
            ExperimentConfig(controller="dqn", num_agents=2, reward_case=case, episodes=60, seed=seed),
            ref_schedule), 10) for seed in range(5)]
        medians[case] = float(np.median(finals))
    _report(acceptance_report, 7, "case ordering",
            {f"case1 {medians[1]:.3f} <= case3 {medians[3]:.3f}": medians[1] <= medians[3],
             f"case2 {medians[2]:.3f} <= case4 {medians[4]:.3f}": medians[2] <= medians[4]},
            time.perf_counter() - t0)


class _CountingEnv(SignalEnv):
    def _step(self):
        super()._step()
        self.totals.append(sum(self.world.counts()))


def test_criterion_8_determinism_and_conservation(acceptance_report, ref_schedule, grid6, tmp_path):
    t0 = time.perf_counter()
    checks = {}
    for controller, case in (("dqn", 2), ("dqn", 3), ("fixed30", 1)):
        cfg = ExperimentConfig(controller=controller, num_agents=4, reward_case=case, episodes=5, seed=9)
        blobs = []
        for k in range(2):
            path = tmp_path / f"{controller}_{case}_{k}.csv"
            write_metrics(run_experiment(cfg, ref_schedule).metrics, path)
            blobs.append(path.read_bytes())
        checks[f"{controller} case {case} byte-identical"] = blobs[0] == blobs[1]

    env = _CountingEnv(grid6, ref_schedule.vehicle_specs(), (8, 10, 15, 17, 20, 22, 27, 29), RewardCase(1))
    env.totals = []
    env.reset()
    env.totals.append(sum(env.world.counts()))
    rng = np.random.default_rng(0)
    while not env.done:
        env.decision_cycle(lambda a, s: int(rng.integers(4)))
    checks[f"pending+active+exited == 128 over {len(env.totals)} steps"] = set(env.totals) == {128}
    _report(acceptance_report, 8, "determinism and conservation", checks, time.perf_counter() - t0)
