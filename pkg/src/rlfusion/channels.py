"""Optimality emission channels and their additive composition.

Each channel scores a state-action pair with a per-step log-emission; a
channel set sums them into one composite reward. The task channel returns
the binary reward directly as its log-emission (emissions are treated as
unnormalized potentials), and the imitation channel returns the log of the
clipped discriminator output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import NumericError
from .errors import ProtocolError

# discriminator outputs are clipped to [EPS_CLIP, 1 - EPS_CLIP] before the log
EPS_CLIP = 1e-4


@dataclass(frozen=True)
class OptimalityChannel:
    name: str
    kind: str  # "task_reward" | "imitation_discriminator" | "custom_log_prob"
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    weight: float = 1.0


@dataclass(frozen=True)
class ChannelSet:
    channels: tuple[OptimalityChannel, ...]

    def __post_init__(self):
        if not self.channels:
            raise ValueError("a channel set needs at least one channel")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names: {names}")


def channel_log_emission(
    channel: OptimalityChannel, obs: np.ndarray, action: np.ndarray
) -> np.ndarray:
    """Per-step log p(O=1 | s, a) for a batch of (obs, action) pairs."""
    out = np.asarray(channel.evaluator(obs, action), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"channel {channel.name!r} produced a non-finite emission")
    return out


def composite_reward(
    channels: ChannelSet, obs: np.ndarray, action: np.ndarray
) -> np.ndarray:
    """Weighted sum of channel log-emissions (the additive composite reward)."""
    total = None
    for ch in channels.channels:
        term = ch.weight * channel_log_emission(ch, obs, action)
        total = term if total is None else total + term
    return total


def reward_components(
    channels: ChannelSet, obs: np.ndarray, action: np.ndarray
) -> dict[str, np.ndarray]:
    """Per-channel weighted log-emissions, keyed by channel name."""
    return {
        ch.name: ch.weight * channel_log_emission(ch, obs, action)
        for ch in channels.channels
    }


def elbo(
    trajectories,
    channels: ChannelSet,
    policy_log_probs: list[np.ndarray],
    weights: np.ndarray | None = None,
) -> float:
    """Variational lower bound estimate over a set of trajectories.

    Mean (or `weights`-weighted mean) over trajectories of
    sum_t [composite_reward(s_t, a_t) - log q(a_t | s_t)].
    """
    if len(trajectories) != len(policy_log_probs):
        raise ProtocolError("one log-prob array per trajectory required")
    totals = []
    for traj, lps in zip(trajectories, policy_log_probs):
        if len(lps) != len(traj):
            raise ProtocolError(
                f"trajectory length {len(traj)} != log-prob length {len(lps)}"
            )
        r = composite_reward(channels, traj.obs, traj.actions)
        totals.append(float(np.sum(r - lps)))
    totals = np.array(totals)
    if weights is None:
        return float(totals.mean())
    weights = np.asarray(weights, dtype=np.float64)
    return float((totals * weights).sum() / weights.sum())


def make_task_channel(
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray], weight: float = 1.0
) -> OptimalityChannel:
    return OptimalityChannel("task", "task_reward", evaluator, weight)


def env_task_channel(env, weight: float = 1.0) -> OptimalityChannel:
    """Task channel whose evaluator replays the env's deterministic dynamics
    from (obs, action); returns the binary achievement reward per pair."""

    def evaluator(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim == 1:
            return np.float64(env.task_reward_from(obs, actions))
        if hasattr(env, "task_reward_batch"):
            return env.task_reward_batch(obs, actions)
        return np.array(
            [env.task_reward_from(o, a) for o, a in zip(obs, np.asarray(actions))]
        )

    return OptimalityChannel("task", "task_reward", evaluator, weight)


def make_imitation_channel(
    discriminator_log_reward: Callable[[np.ndarray, np.ndarray], np.ndarray],
    weight: float = 1.0,
) -> OptimalityChannel:
    return OptimalityChannel(
        "imitation", "imitation_discriminator", discriminator_log_reward, weight
    )
