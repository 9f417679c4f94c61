"""Transition storage plus hindsight instruction relabeling.

Relabeling is additive: the original transitions always enter the buffer
verbatim, and each hindsight event contributes extra copies whose
instruction is swapped for the hindsight one. A copy's reward is the
success reward exactly at the event index and the reduced penalty
everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .env import Observation
from .language import Instruction, pad_tokens


@dataclass
class Transition:
    obs: Observation
    action: np.ndarray
    reward: float
    next_obs: Observation
    tokens: np.ndarray          # instruction the transition is conditioned on
    done: bool
    relabeled: bool = False


@dataclass
class HEIRConfig:
    strategy: str = "future"    # episode | future | final
    k: int = 8
    success_reward: float = 0.0
    reduced_penalty: float = -0.9

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.strategy not in ("episode", "future", "final"):
            raise ValueError(f"unknown replay strategy {self.strategy!r}")


def _relabeled_copy(tr: Transition, tokens: np.ndarray, reward: float, done: bool) -> Transition:
    return replace(tr, reward=reward, tokens=tokens.copy(), done=done, relabeled=True)


def _copies_at(episode: list[Transition], indices, event_t: int, tokens: np.ndarray, cfg: HEIRConfig):
    out = []
    for i in indices:
        at_event = i == event_t
        reward = cfg.success_reward if at_event else cfg.reduced_penalty
        done = True if at_event else episode[i].done
        out.append(_relabeled_copy(episode[i], tokens, reward, done))
    return out


def _event_tokens(event) -> np.ndarray:
    tokens = event.instruction.tokens if isinstance(event.instruction, Instruction) else event.instruction
    return pad_tokens(tokens)


def relabel_episode_strategy(episode, event, cfg: HEIRConfig, rng: np.random.Generator):
    """k copies at indices drawn (with replacement) from [0, t]."""
    if not episode:
        raise ValueError("cannot relabel an empty episode")
    t = event.t
    if not 0 <= t < len(episode):
        raise ValueError(f"event index {t} outside episode of length {len(episode)}")
    indices = rng.integers(0, t + 1, size=cfg.k)
    return _copies_at(episode, indices, t, _event_tokens(event), cfg)


def relabel_future_strategy(episode, event, cfg: HEIRConfig, rng: np.random.Generator):
    """k copies at indices drawn (with replacement) from [t, T)."""
    if not episode:
        raise ValueError("cannot relabel an empty episode")
    t = event.t
    if not 0 <= t < len(episode):
        raise ValueError(f"event index {t} outside episode of length {len(episode)}")
    indices = rng.integers(t, len(episode), size=cfg.k)
    return _copies_at(episode, indices, t, _event_tokens(event), cfg)


def relabel_final_strategy(episode, event, cfg: HEIRConfig, rng: np.random.Generator):
    """Copies at the event index and its k predecessors, clamped at 0."""
    if not episode:
        raise ValueError("cannot relabel an empty episode")
    t = event.t
    if not 0 <= t < len(episode):
        raise ValueError(f"event index {t} outside episode of length {len(episode)}")
    indices = range(max(0, t - cfg.k), t + 1)
    return _copies_at(episode, indices, t, _event_tokens(event), cfg)


_STRATEGIES = {
    "episode": relabel_episode_strategy,
    "future": relabel_future_strategy,
    "final": relabel_final_strategy,
}


def relabel(episode, event, cfg: HEIRConfig, rng: np.random.Generator):
    return _STRATEGIES[cfg.strategy](episode, event, cfg, rng)


class ReplayBuffer:
    """Uniform-sampling ring buffer over flat transition arrays."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._storage = None
        self._next = 0
        self.size = 0
        self.total_added = 0
        self.relabeled_added = 0
        self._reward_counts: dict[float, int] = {}

    def _init_storage(self, tr: Transition):
        feat_dim = tr.obs.features.shape[0]
        tok_len = tr.tokens.shape[0]
        self._storage = {
            "obs": np.zeros((self.capacity, feat_dim)),
            "actions": np.zeros((self.capacity, tr.action.shape[0])),
            "rewards": np.zeros(self.capacity),
            "next_obs": np.zeros((self.capacity, feat_dim)),
            "tokens": np.zeros((self.capacity, tok_len), dtype=np.int64),
            "done": np.zeros(self.capacity),
            "relabeled": np.zeros(self.capacity, dtype=bool),
        }

    def add(self, tr: Transition):
        if self._storage is None:
            self._init_storage(tr)
        i = self._next
        s = self._storage
        s["obs"][i] = tr.obs.features
        s["actions"][i] = tr.action
        s["rewards"][i] = tr.reward
        s["next_obs"][i] = tr.next_obs.features
        s["tokens"][i] = tr.tokens
        s["done"][i] = float(tr.done)
        s["relabeled"][i] = tr.relabeled
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_added += 1
        if tr.relabeled:
            self.relabeled_added += 1
        r = round(float(tr.reward), 6)
        self._reward_counts[r] = self._reward_counts.get(r, 0) + 1

    def extend(self, transitions):
        for tr in transitions:
            self.add(tr)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        s = self._storage
        return {
            "obs": s["obs"][idx],
            "actions": s["actions"][idx],
            "rewards": s["rewards"][idx],
            "next_obs": s["next_obs"][idx],
            "tokens": s["tokens"][idx],
            "done": s["done"][idx],
        }

    @property
    def relabel_fraction(self) -> float:
        return self.relabeled_added / self.total_added if self.total_added else 0.0

    def stats(self) -> dict:
        return {
            "size": self.size,
            "total_added": self.total_added,
            "relabeled_added": self.relabeled_added,
            "relabel_fraction": self.relabel_fraction,
            "reward_histogram": dict(sorted(self._reward_counts.items())),
        }


def store_episode(buffer: ReplayBuffer, episode, events, cfg: HEIRConfig, rng: np.random.Generator):
    """Originals verbatim, then the strategy's copies for each event."""
    buffer.extend(episode)
    for event in events:
        buffer.extend(relabel(episode, event, cfg, rng))
