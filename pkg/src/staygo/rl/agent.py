"""DQN stay-or-go agent trained offline after each mission on that mission's outcomes."""
from __future__ import annotations

import base64
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geometry import FlightModel
from ..methods import GO, STAY, DecisionMethod
from ._backend import kernels

CHECKPOINT_FORMAT = "staygo-dqn-checkpoint"
CHECKPOINT_VERSION = 1

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def reward(e: int, d: int, proc_t: float, ret_t: float) -> float:
    """Time gained (+) or lost (-) by decision ``d`` when the outcome is ``e``."""
    if d not in (STAY, GO):
        raise ValueError(f"decision must be 0 or 1, got {d!r}")
    if e:
        return ret_t if d == STAY else -ret_t
    return proc_t if d == GO else -proc_t


def reward_table(events: Sequence[int], proc_t: float, ret_t: Sequence[float]) -> np.ndarray:
    return np.array([[reward(e, STAY, proc_t, r), reward(e, GO, proc_t, r)] for e, r in zip(events, ret_t)])


@dataclass
class TrainSchedule:
    """Retraining hyperparameters.

    ``timesteps`` defaults to a desk-scale 20000; ``FULL_SCHEDULE`` uses
    100000. ``train_freq`` and ``learning_starts`` use the usual library
    defaults. With ``reset_buffer`` each retraining run starts from an empty
    replay buffer, so only the latest mission's experience is replayed.
    """

    timesteps: int = 20000
    batch_size: int = 32
    learning_rate: float = 1e-4
    gamma: float = 0.99
    target_update_interval: int = 10000
    exploration_initial: float = 1.0
    exploration_final: float = 0.05
    exploration_fraction: float = 0.1
    max_grad_norm: float = 10.0
    buffer_size: int = 1_000_000
    train_freq: int = 4
    learning_starts: int = 100
    hidden: tuple[int, int] = (64, 64)
    reset_buffer: bool = True

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.timesteps < 0 or self.batch_size < 1 or self.buffer_size < 1:
            raise ValueError("timesteps must be >= 0, batch_size and buffer_size >= 1")
        if self.train_freq < 1 or self.target_update_interval < 1:
            raise ValueError("train_freq and target_update_interval must be >= 1")
        if not 0 <= self.exploration_fraction <= 1:
            raise ValueError("exploration_fraction must be in [0, 1]")

    def epsilon(self, step: int) -> float:
        """Exploration rate at ``step`` of one retraining run."""
        explore = self.exploration_fraction * self.timesteps
        if step >= explore:
            return self.exploration_final
        return self.exploration_initial + (self.exploration_final - self.exploration_initial) * step / explore

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


FULL_SCHEDULE = TrainSchedule(timesteps=100_000)


class ReplayBuffer:
    """Fixed-capacity FIFO of (state, action, reward, next state, done) transitions."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.obs = np.zeros(capacity, dtype=np.int32)
        self.act = np.zeros(capacity, dtype=np.int32)
        self.rew = np.zeros(capacity, dtype=np.float64)
        self.next = np.zeros(capacity, dtype=np.int32)
        self.done = np.zeros(capacity, dtype=np.uint8)
        self.state = np.zeros(2, dtype=np.int64)  # write position, size

    def __len__(self):
        return int(self.state[1])

    def push(self, s: int, a: int, r: float, s2: int, done: bool) -> None:
        pos = int(self.state[0])
        self.obs[pos], self.act[pos], self.rew[pos], self.next[pos], self.done[pos] = s, a, r, s2, done
        self.state[0] = (pos + 1) % self.capacity
        self.state[1] = min(len(self) + 1, self.capacity)

    def indices(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to stored slots."""
        n = len(self)
        return np.minimum((u * n).astype(np.intp), n - 1)

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = self.indices(rng.random(batch_size))
        return self.obs[idx], self.act[idx], self.rew[idx], self.next[idx], self.done[idx]


class QNetwork:
    """Two-hidden-layer ReLU MLP over one-hot state inputs, stored as a flat vector."""

    def __init__(self, n_states: int, hidden: Sequence[int] = (64, 64), n_actions: int = 2,
                 rng: np.random.Generator | None = None, theta: np.ndarray | None = None):
        self.sizes = (n_states, int(hidden[0]), int(hidden[1]), n_actions)
        n = kernels.n_params(self.sizes)
        if theta is not None:
            theta = np.ascontiguousarray(theta, dtype=np.float64)
            if theta.shape != (n,):
                raise ValueError(f"expected {n} parameters, got {theta.shape}")
            self.theta = theta.copy()
        else:
            self.theta = self.init_params(self.sizes, rng or np.random.default_rng(0))

    @staticmethod
    def init_params(sizes, rng: np.random.Generator) -> np.ndarray:
        n, h1, h2, o = sizes
        parts = []
        for fan_in, fan_out in ((n, h1), (h1, h2), (h2, o)):
            bound = 1.0 / np.sqrt(fan_in)
            parts.append(rng.uniform(-bound, bound, fan_out * fan_in))
            parts.append(rng.uniform(-bound, bound, fan_out))
        return np.concatenate(parts)

    @property
    def layers(self):
        """Views (W1, b1, W2, b2, W3, b3) into the parameter vector."""
        from ._kernels_py import unpack
        return unpack(self.theta, self.sizes)

    def forward(self, obs) -> np.ndarray:
        return kernels.q_values(self.theta, self.sizes, np.atleast_1d(obs))

    def copy(self) -> "QNetwork":
        return QNetwork(self.sizes[0], self.sizes[1:3], self.sizes[3], theta=self.theta)


def greedy(q: Sequence[float]) -> int:
    """Argmax with ties resolved toward the lower index (stay)."""
    return int(np.argmax(q))


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)


class DQNAgent:
    def __init__(self, n_states: int, schedule: TrainSchedule | None = None, seed: int = 0):
        self.schedule = schedule or TrainSchedule()
        self.rng = np.random.default_rng(seed)
        self.net = QNetwork(n_states, self.schedule.hidden, rng=self.rng)
        self.target = self.net.copy()
        n = self.net.theta.size
        self.adam_m = np.zeros(n)
        self.adam_v = np.zeros(n)
        self.counters = np.zeros(3, dtype=np.int64)  # adam steps, env steps, gradient steps
        self.buffer = ReplayBuffer(self.schedule.buffer_size)

    @property
    def n_states(self) -> int:
        return self.net.sizes[0]

    def q_values(self, state: int) -> np.ndarray:
        return self.net.forward([state])[0]

    def decide(self, state: int) -> int:
        return greedy(self.q_values(state))

    def policy(self) -> np.ndarray:
        return np.argmax(self.net.forward(np.arange(self.n_states)), axis=1)

    def sync_target(self) -> None:
        self.target.theta[:] = self.net.theta

    def train_step(self) -> float | None:
        """One minibatch Huber-loss update from the replay buffer; ``None`` if it holds too little."""
        sc = self.schedule
        if len(self.buffer) < sc.batch_size:
            return None
        s, a, r, s2, done = self.buffer.sample(self.rng, sc.batch_size)
        next_v = self.target.forward(s2).max(axis=1)
        y = r + np.where(done != 0, 0.0, sc.gamma * next_v)
        loss, grad = kernels.loss_and_grad(self.net.theta, self.net.sizes, s, a, y)
        kernels.clip_grad_norm(grad, sc.max_grad_norm)
        self.counters[0] += 1
        self.counters[2] += 1
        kernels.adam_update(self.net.theta, grad, self.adam_m, self.adam_v, int(self.counters[0]),
                            sc.learning_rate, ADAM_BETAS[0], ADAM_BETAS[1], ADAM_EPS)
        return loss

    def retrain(self, rewards: np.ndarray, timesteps: int | None = None) -> None:
        """Continue training on the episodic walk whose rewards are ``rewards[state, action]``."""
        sc = self.schedule
        T = sc.timesteps if timesteps is None else timesteps
        if T <= 0:
            return
        rewards = np.ascontiguousarray(rewards, dtype=np.float64)
        if rewards.shape != (self.n_states, 2):
            raise ValueError(f"reward table must be ({self.n_states}, 2)")
        eps_u = self.rng.random(T)
        rand_act = self.rng.integers(0, 2, T, dtype=np.int32)
        batch_u = self.rng.random((T // sc.train_freq + 1) * sc.batch_size)
        b = self.buffer
        if sc.reset_buffer:
            b.state[:] = 0
        kernels.train_loop(
            self.net.theta, self.target.theta, self.adam_m, self.adam_v, self.counters, self.net.sizes,
            b.obs, b.act, b.rew, b.next, b.done, b.state,
            rewards, eps_u, rand_act, batch_u,
            T, sc.batch_size, sc.learning_rate, sc.gamma, sc.target_update_interval,
            sc.exploration_initial, sc.exploration_final, sc.exploration_fraction, sc.max_grad_norm,
            sc.train_freq, sc.learning_starts, ADAM_BETAS[0], ADAM_BETAS[1], ADAM_EPS,
        )

    # checkpoints ---------------------------------------------------------
    def checkpoint(self) -> dict:
        """Self-describing snapshot; the replay buffer is not included."""
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layer_sizes": list(self.net.sizes),
            "schedule": self.schedule.to_dict(),
            "encoding": "base64 little-endian float64",
            "theta": _b64(self.net.theta),
            "target": _b64(self.target.theta),
            "adam_m": _b64(self.adam_m),
            "adam_v": _b64(self.adam_v),
            "counters": [int(c) for c in self.counters],
            "rng": self.rng.bit_generator.state,
        }

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.checkpoint(), indent=1))

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "DQNAgent":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a DQN checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
        sched = TrainSchedule(**doc["schedule"])
        sizes = tuple(doc["layer_sizes"])
        if tuple(sched.hidden) != sizes[1:3] or sizes[3] != 2:
            raise ValueError("layer sizes disagree with the schedule")
        agent = cls(sizes[0], sched)
        for name in ("theta", "target", "adam_m", "adam_v"):
            arr = _unb64(doc[name])
            if arr.shape != agent.net.theta.shape:
                raise ValueError(f"{name} has {arr.size} values, expected {agent.net.theta.size}")
            dest = {"theta": agent.net.theta, "target": agent.target.theta,
                    "adam_m": agent.adam_m, "adam_v": agent.adam_v}[name]
            dest[:] = arr
        agent.counters[:] = doc["counters"]
        agent.rng.bit_generator.state = doc["rng"]
        return agent

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DQNAgent":
        return cls.from_checkpoint(json.loads(Path(path).read_text()))


class DQNMethod(DecisionMethod):
    """Greedy decisions from the agent; retraining happens in ``mission_end``."""

    name = "dqn"

    def __init__(self, model: FlightModel, schedule: TrainSchedule | None = None, seed: int = 0,
                 checkpoint: str | os.PathLike | None = None):
        super().__init__(model)
        self.schedule = schedule or TrainSchedule()
        self.seed = seed
        self.checkpoint_path = checkpoint
        self.agent: DQNAgent | None = None
        self._events: dict[int, int] = {}
        self.last_events: list[int] | None = None

    def mission_begin(self, plan):
        super().mission_begin(plan)
        if self.agent is None:
            if self.checkpoint_path is not None:
                self.agent = DQNAgent.load(self.checkpoint_path)
                if self.agent.n_states != plan.n_poi:
                    raise ValueError("checkpoint was trained for a different number of points")
            else:
                self.agent = DQNAgent(plan.n_poi, self.schedule, self.seed)
        self._events = {}

    def decide(self, i, proc_t):
        return self.agent.decide(self._k(i))

    def feedback(self, i, decision, event):
        self._events[self._k(i)] = int(event)

    def mission_end(self):
        events = [self._events.get(k) for k in range(self.model.plan.n_poi)]
        self.last_events = events
        retrain_after_mission(self.agent, events, self.model)


def retrain_after_mission(agent: DQNAgent, events: Sequence[int | None], model: FlightModel,
                          timesteps: int | None = None) -> DQNAgent:
    """Replay the last mission's outcomes as an episodic environment and keep training."""
    if len(events) != agent.n_states or any(e is None for e in events):
        missing = [k + 2 for k, e in enumerate(events) if e is None]
        raise ValueError(f"mission record lacks outcomes for points {missing or 'beyond its length'}")
    p = model.params
    table = reward_table(events, p.proc_t, model.return_times(p.proc_t))
    agent.retrain(table, timesteps)
    return agent
