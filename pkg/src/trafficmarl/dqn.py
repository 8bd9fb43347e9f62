"""Deep Q-learning in plain NumPy.

A fully connected ReLU network trained with Adam on minibatches from an
experience-replay ring buffer, bootstrapping from a slowly tracking
target network.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass
class Hyperparams:
    learning_rate: float = 0.001
    gamma: float = 0.95
    epsilon_initial: float = 0.95
    epsilon_final: float = 0.01
    epsilon_decay: float = 0.001
    minibatch: int = 32
    memory_size: int = 10000
    target_sync: float = 0.01
    target_mode: str = "soft"      # "soft" or "hard"
    target_hard_every: int = 100   # train steps between hard copies
    prioritized_replay: bool = False
    hidden: tuple[int, ...] = (24, 24, 24)

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 <= self.epsilon_final <= self.epsilon_initial <= 1:
            raise ValueError("need 0 <= epsilon_final <= epsilon_initial <= 1")
        if self.target_mode not in ("soft", "hard"):
            raise ValueError(f"target_mode must be 'soft' or 'hard', got {self.target_mode!r}")
        if self.minibatch < 1 or self.memory_size < self.minibatch:
            raise ValueError("need 1 <= minibatch <= memory_size")
        self.hidden = tuple(int(h) for h in self.hidden)


class Adam:
    def __init__(self, shapes: Sequence[tuple[int, ...]], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class QNetwork:
    """MLP with ReLU hidden layers and a linear output layer.

    Parameters are stored as ``[W1, b1, W2, b2, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)``.
    """

    def __init__(self, sizes: Sequence[int] = (4, 24, 24, 24, 4),
                 rng: np.random.Generator | None = None, lr: float = 0.001):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))
        self.optimizer = Adam([p.shape for p in self.params], lr=lr)

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite network input")
        h = x
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            if cache is not None:
                cache.append(h)
            h = h @ W + b
            if layer < n_layers - 1:
                h = np.maximum(h, 0.0)
        return h

    def backward(self, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of the parameters given dLoss/dOutput for a batch.

        ``cache`` holds the inputs to each layer as recorded by ``forward``.
        """
        grads: list[np.ndarray] = [None] * len(self.params)
        g = grad_out
        for layer in reversed(range(len(self.params) // 2)):
            h_in = cache[layer]
            grads[2 * layer] = h_in.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                g = (g @ self.params[2 * layer].T) * (h_in > 0)
        return grads

    def copy(self) -> "QNetwork":
        clone = QNetwork.__new__(QNetwork)
        clone.sizes = self.sizes
        clone.params = [p.copy() for p in self.params]
        clone.optimizer = Adam([p.shape for p in self.params], lr=self.optimizer.lr)
        return clone

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.params:
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


class Transition(NamedTuple):
    state: tuple
    action: int
    reward: float
    next_state: tuple
    done: bool = False


class ReplayMemory:
    """Fixed-capacity ring buffer of transitions."""

    def __init__(self, capacity: int = 10000, state_dim: int = 4,
                 prioritized: bool = False, priority_eps: float = 1e-3):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.prioritized = prioritized
        self.priority_eps = priority_eps
        self.priorities = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def store(self, t: Transition) -> None:
        s = np.asarray(t.state, dtype=float)
        s2 = np.asarray(t.next_state, dtype=float)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(s2)) and math.isfinite(t.reward)):
            raise ValueError("transition contains non-finite values")
        i = self.cursor
        self.states[i], self.actions[i], self.rewards[i] = s, t.action, t.reward
        self.next_states[i], self.dones[i] = s2, t.done
        self.priorities[i] = self.priorities[:self.size].max() if self.size else 1.0
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray | None:
        """Indices of a minibatch, or None while the memory holds fewer than ``batch``."""
        if self.size < batch:
            return None
        if self.prioritized:
            pr = self.priorities[:self.size]
            return rng.choice(self.size, size=batch, p=pr / pr.sum())
        return rng.integers(0, self.size, size=batch)

    def update_priorities(self, idx: np.ndarray, td_errors: np.ndarray) -> None:
        self.priorities[idx] = np.abs(td_errors) + self.priority_eps

    def get(self, i: int) -> Transition:
        return Transition(tuple(self.states[i]), int(self.actions[i]), float(self.rewards[i]),
                          tuple(self.next_states[i]), bool(self.dones[i]))


def epsilon_at(step: int, hp: Hyperparams) -> float:
    """Exponentially decaying exploration rate."""
    return hp.epsilon_final + (hp.epsilon_initial - hp.epsilon_final) * math.exp(-hp.epsilon_decay * step)


def select_action(net: QNetwork, state, epsilon: float, rng: np.random.Generator) -> int:
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(net.forward(state)))  # argmax takes the lowest index on ties


def td_target(target_net: QNetwork, r, s_next, gamma: float, done=False):
    """r + gamma * max_a' Q_target(s', a'); no bootstrap on terminal transitions.

    Works on a single transition or on a batch (2-D ``s_next``).
    """
    q_next = target_net.forward(s_next).max(axis=-1)
    return np.asarray(r) + gamma * q_next * (1.0 - np.asarray(done, dtype=float))


def sync_target(net: QNetwork, target_net: QNetwork, beta: float = 1.0) -> None:
    """Blend target parameters toward the online network; ``beta=1`` copies."""
    if net.sizes != target_net.sizes:
        raise ValueError(f"shape mismatch: {net.sizes} vs {target_net.sizes}")
    for t, p in zip(target_net.params, net.params):
        t *= 1.0 - beta
        t += beta * p


def minibatch_loss_and_grads(net: QNetwork, states, actions, targets):
    """Mean squared TD error at the taken actions and its parameter gradients."""
    cache: list = []
    q = net.forward(states, cache)
    rows = np.arange(len(actions))
    err = targets - q[rows, actions]
    loss = float(np.mean(err ** 2))
    grad_q = np.zeros_like(q)
    grad_q[rows, actions] = -2.0 * err / len(actions)
    return loss, net.backward(cache, grad_q), err


def train_step(net: QNetwork, target_net: QNetwork, memory: ReplayMemory,
               hp: Hyperparams, rng: np.random.Generator, step: int = 0) -> float | None:
    """One Adam update on a replay minibatch; returns the pre-update loss.

    Returns None (and changes nothing) while memory holds fewer than
    ``hp.minibatch`` transitions. ``step`` counts train steps and only
    matters for the hard target-copy schedule.
    """
    idx = memory.sample_indices(hp.minibatch, rng)
    if idx is None:
        return None
    targets = td_target(target_net, memory.rewards[idx], memory.next_states[idx], hp.gamma,
                        memory.dones[idx])
    loss, grads, err = minibatch_loss_and_grads(net, memory.states[idx], memory.actions[idx], targets)
    if memory.prioritized:
        memory.update_priorities(idx, err)
    net.optimizer.step(net.params, grads)
    if hp.target_mode == "soft":
        sync_target(net, target_net, hp.target_sync)
    elif (step + 1) % hp.target_hard_every == 0:
        sync_target(net, target_net, 1.0)
    return loss


class DQNAgent:
    """One intersection's learner: private online/target networks and memory."""

    def __init__(self, hp: Hyperparams, rng: np.random.Generator, state_dim: int = 4,
                 n_actions: int = 4, state_scale: float = 1.0):
        self.hp = hp
        self.rng = rng
        self.state_scale = state_scale
        self.net = QNetwork((state_dim, *hp.hidden, n_actions), rng=rng, lr=hp.learning_rate)
        self.target = self.net.copy()
        self.memory = ReplayMemory(hp.memory_size, state_dim, prioritized=hp.prioritized_replay)
        self.steps = 0        # exploration schedule clock
        self.train_steps = 0

    def encode(self, state) -> np.ndarray:
        return np.asarray(state, dtype=float) / self.state_scale

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.steps, self.hp)

    def act(self, state, greedy: bool = False) -> int:
        eps = 0.0 if greedy else self.epsilon
        return select_action(self.net, self.encode(state), eps, self.rng)

    def remember(self, t: Transition) -> None:
        self.memory.store(Transition(tuple(self.encode(t.state)), t.action, t.reward,
                                     tuple(self.encode(t.next_state)), t.done))

    def learn(self) -> float | None:
        loss = train_step(self.net, self.target, self.memory, self.hp, self.rng, self.train_steps)
        if loss is not None:
            self.train_steps += 1
        return loss

    def save(self, path) -> None:
        save_checkpoint(path, self.net, schedule_step=self.steps, target=self.target, hp=self.hp)


def save_checkpoint(path, net: QNetwork, schedule_step: int = 0,
                    target: QNetwork | None = None, hp: Hyperparams | None = None) -> None:
    """Write ``net`` (plus Adam moments and optional target) to an ``.npz`` archive."""
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "sizes": np.array(net.sizes, dtype=np.int64),
        "schedule_step": np.array(schedule_step, dtype=np.int64),
        "adam_t": np.array(net.optimizer.t, dtype=np.int64),
        "adam_hyper": np.array([net.optimizer.lr, net.optimizer.beta1,
                                net.optimizer.beta2, net.optimizer.eps]),
    }
    for i, p in enumerate(net.params):
        arrays[f"param_{i}"] = p
        arrays[f"adam_m_{i}"] = net.optimizer.m[i]
        arrays[f"adam_v_{i}"] = net.optimizer.v[i]
        if target is not None:
            arrays[f"target_{i}"] = target.params[i]
    if hp is not None:
        arrays["hyperparams"] = np.array(repr(sorted(asdict(hp).items())))
    with open(Path(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[QNetwork, QNetwork | None, int]:
    """Inverse of :func:`save_checkpoint`: ``(net, target_or_None, schedule_step)``."""
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = tuple(int(s) for s in z["sizes"])
        n = 2 * (len(sizes) - 1)
        lr, b1, b2, eps = (float(x) for x in z["adam_hyper"])
        net = QNetwork.__new__(QNetwork)
        net.sizes = sizes
        net.params = [z[f"param_{i}"].copy() for i in range(n)]
        net.optimizer = Adam([p.shape for p in net.params], lr, b1, b2, eps)
        net.optimizer.m = [z[f"adam_m_{i}"].copy() for i in range(n)]
        net.optimizer.v = [z[f"adam_v_{i}"].copy() for i in range(n)]
        net.optimizer.t = int(z["adam_t"])
        target = None
        if "target_0" in z:
            target = net.copy()
            target.params = [z[f"target_{i}"].copy() for i in range(n)]
        return net, target, int(z["schedule_step"])
