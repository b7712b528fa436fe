"""Deep Q-learning over simulated streams.

One episode concatenates every training video in a fresh random order;
each video starts with a forced invocation of the most accurate
configuration, and every later window is chosen epsilon-greedily.  In
aggregate reward mode, experiences receive their shared reward when the
enclosing reward window flushes; in local mode they are rewarded per
decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .proxy import ApfgSim, FeatureCache
from .qnet import Adam, QNetwork
from .rewards import RewardParams, WindowAccumulator, local_reward
from .streams import VideoStream, action_overlap

HUBER_DELTA = 1.0


class NotWarmError(RuntimeError):
    """Sampling was attempted before the buffer reached its warmup size."""


class TrainingDivergence(RuntimeError):
    """The TD loss became non-finite."""


@dataclass(frozen=True)
class ExperienceTuple:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Cyclic experience store with uniform with-replacement sampling."""

    def __init__(self, capacity: int = 10_000, warmup: int = 5_000) -> None:
        if not 0 < warmup <= capacity:
            raise ValueError("need 0 < warmup <= capacity")
        self.capacity = capacity
        self.warmup = warmup
        self._store: list[ExperienceTuple] = []
        self._next = 0  # insertion cursor once the store is full

    def __len__(self) -> int:
        return len(self._store)

    def push(self, exp: ExperienceTuple) -> None:
        if len(self._store) < self.capacity:
            self._store.append(exp)
        else:
            self._store[self._next] = exp
            self._next = (self._next + 1) % self.capacity

    def snapshot(self) -> list[ExperienceTuple]:
        """Contents oldest to newest."""
        return self._store[self._next :] + self._store[: self._next]

    def sample(self, n: int, rng: np.random.Generator) -> list[ExperienceTuple]:
        if len(self._store) < max(n, self.warmup):
            raise NotWarmError(
                f"buffer holds {len(self._store)} experiences, "
                f"need {max(n, self.warmup)}"
            )
        idx = rng.integers(0, len(self._store), size=n)
        return [self._store[i] for i in idx]


@dataclass(frozen=True)
class TrainParams:
    """Knobs of the Q-learning loop; defaults are production scale and the
    small-run knobs (episodes, batch, buffer) shrink for desk-scale tests."""

    episodes: int
    batch_size: int = 1000
    learning_rate: float = 1e-3
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    target_sync_steps: int = 500
    update_period: int = 4
    buffer_capacity: int = 10_000
    warmup: int = 5_000
    hidden: tuple[int, int] = (128, 64)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if not 0 < self.batch_size <= self.buffer_capacity:
            raise ValueError("need 0 < batch_size <= buffer_capacity")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.target_sync_steps < 1 or self.update_period < 1:
            raise ValueError("sync and update periods must be positive")
        if not 0 < self.warmup <= self.buffer_capacity:
            raise ValueError("need 0 < warmup <= buffer_capacity")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def epsilon(self, episode: int) -> float:
        """Linear decay from epsilon_start to epsilon_end over the first
        half of the episode budget, flat afterwards."""
        half = self.episodes / 2.0
        frac = 1.0 if half <= 0 else min(1.0, episode / half)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


def select_config(
    net: QNetwork, state: np.ndarray, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy action; greedy ties resolve to the lowest index."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(net.num_actions))
    return int(np.argmax(net.q_values(state)))


def batch_arrays(batch: Sequence[ExperienceTuple]):
    states = np.stack([e.state for e in batch])
    actions = np.array([e.action for e in batch], dtype=np.int64)
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    next_states = np.stack([e.next_state for e in batch])
    terminal = np.array([e.terminal for e in batch], dtype=np.float64)
    return states, actions, rewards, next_states, terminal


def train_step(
    net: QNetwork,
    target_net: QNetwork,
    batch: Sequence[ExperienceTuple],
    gamma: float,
    adam: Adam,
) -> float:
    """One TD update: Huber loss against the frozen target net, one Adam step."""
    states, actions, rewards, next_states, terminal = batch_arrays(batch)
    future = target_net.forward(next_states).max(axis=1)
    targets = rewards + gamma * future * (1.0 - terminal)
    loss, *grads = net.backend.train_grads(
        states, actions, targets, *net.params, HUBER_DELTA
    )
    if not np.isfinite(loss):
        raise TrainingDivergence(
            f"non-finite loss {loss!r}; max|target|={np.abs(targets).max():.3e}, "
            f"max|W|={max(np.abs(p).max() for p in net.params):.3e}"
        )
    adam.step(net.params, grads)
    return loss


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    mean_loss: float
    mean_reward: float
    epsilon: float


@dataclass
class _PendingDecision:
    state: np.ndarray
    action: int
    next_state: np.ndarray
    terminal: bool


@dataclass
class _TrainDriver:
    """Mutable state shared by the warmup and scheduled episode phases."""

    videos: Sequence[VideoStream]
    sim: ApfgSim
    reward_params: RewardParams
    params: TrainParams
    net: QNetwork
    target: QNetwork
    adam: Adam
    buffer: ReplayBuffer
    rng_perm: np.random.Generator
    rng_agent: np.random.Generator
    cache: FeatureCache | None
    env_steps: int = 0
    updates: int = 0
    losses: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def _update_ready(self) -> bool:
        return len(self.buffer) >= max(self.buffer.warmup, self.params.batch_size)

    def _finalize(self, pending: list[_PendingDecision], reward: float) -> None:
        for p in pending:
            self.buffer.push(
                ExperienceTuple(p.state, p.action, reward, p.next_state, p.terminal)
            )
            self.rewards.append(reward)

    def run_episode(self, epsilon: float, learn: bool) -> None:
        table = self.sim.table
        most_acc = table.most_accurate_index()
        alphas = table.alphas
        beta = self.reward_params.beta
        aggregate = self.reward_params.mode == "aggregate"
        for vi in self.rng_perm.permutation(len(self.videos)):
            video = self.videos[vi]
            mask = video.mask()
            acc = WindowAccumulator(self.reward_params.window_frames)
            out = self.sim.cached_invoke(video, 0, most_acc, self.cache)
            if aggregate:
                s, e = out.window
                acc.push(None, mask[s:e], np.full(e - s, out.prediction))
            state = out.feature
            start = out.window[1]
            while start < video.num_frames:
                action = select_config(self.net, state, epsilon, self.rng_agent)
                out = self.sim.cached_invoke(video, start, action, self.cache)
                s, e = out.window
                terminal = e >= video.num_frames
                decision = _PendingDecision(state, action, out.feature, terminal)
                if aggregate:
                    acc.push(decision, mask[s:e], np.full(e - s, out.prediction))
                    if acc.ready:
                        pending, reward, _ = acc.flush(self.reward_params)
                        self._finalize(pending, reward)
                else:
                    reward = local_reward(
                        float(alphas[action]), action_overlap(video, s, e) > 0, beta
                    )
                    self._finalize([decision], reward)
                state = out.feature
                start = e
                self.env_steps += 1
                if (
                    learn
                    and self.env_steps % self.params.update_period == 0
                    and self._update_ready()
                ):
                    batch = self.buffer.sample(self.params.batch_size, self.rng_agent)
                    self.losses.append(
                        train_step(self.net, self.target, batch, self.params.gamma, self.adam)
                    )
                    self.updates += 1
                    if self.updates % self.params.target_sync_steps == 0:
                        self.target.copy_params_from(self.net)
            if aggregate and acc.frames_covered:
                pending, reward, _ = acc.flush(self.reward_params)
                self._finalize(pending, reward)


def train_agent(
    videos: Sequence[VideoStream],
    sim: ApfgSim,
    reward_params: RewardParams,
    params: TrainParams,
    cache: FeatureCache | None = None,
) -> tuple[QNetwork, list[EpisodeLog]]:
    """Train a configuration policy; returns the net and per-episode log."""
    if not videos:
        raise ValueError("need at least one training video")
    if reward_params.mode == "aggregate" and reward_params.window_frames < sim.table.max_span:
        raise ValueError("reward window must cover at least one max-span invocation")

    seeds = np.random.SeedSequence(params.seed).spawn(2)
    net = QNetwork(
        sim.feature_dim, len(sim.table), hidden=params.hidden, seed=params.seed
    )
    driver = _TrainDriver(
        videos=videos,
        sim=sim,
        reward_params=reward_params,
        params=params,
        net=net,
        target=net.clone(),
        adam=Adam(net, params.learning_rate),
        buffer=ReplayBuffer(params.buffer_capacity, params.warmup),
        rng_perm=np.random.default_rng(seeds[0]),
        rng_agent=np.random.default_rng(seeds[1]),
        cache=cache,
    )

    if params.episodes == 0:
        return net, []

    # Fill the buffer with the epsilon=1 policy before any gradient update.
    needed = max(params.warmup, params.batch_size)
    while len(driver.buffer) < needed:
        before = len(driver.buffer)
        driver.run_episode(epsilon=1.0, learn=False)
        if len(driver.buffer) == before:
            raise RuntimeError(
                "replay buffer cannot reach warmup: episodes add no experiences"
            )

    log: list[EpisodeLog] = []
    for episode in range(params.episodes):
        driver.losses = []
        driver.rewards = []
        eps = params.epsilon(episode)
        driver.run_episode(epsilon=eps, learn=True)
        log.append(
            EpisodeLog(
                episode=episode,
                mean_loss=float(np.mean(driver.losses)) if driver.losses else float("nan"),
                mean_reward=float(np.mean(driver.rewards)) if driver.rewards else float("nan"),
                epsilon=eps,
            )
        )
    return net, log
