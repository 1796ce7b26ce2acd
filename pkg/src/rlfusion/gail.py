"""Adversarial imitation discriminator.

Convention: D -> 1 on expert pairs, D -> 0 on agent pairs. The
discriminator descends the binary cross-entropy
-mean[log D(expert)] - mean[log(1 - D(agent))], whose minimizer on
overlapping data is the posterior p_E / (p_E + p_pi); log D (clipped) is
the agent's imitation reward, so driving D up on expert-like behavior
raises the agent's reward for matching it.

Inputs are concat(obs, action) — one-hot action for discrete spaces —
normalized per dimension with statistics frozen from the expert dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .channels import EPS_CLIP
from .dataset import DemoDataset
from .errors import ProtocolError
from .nn import MlpParams
from .optim import AdamState, adam_step


@dataclass
class Discriminator:
    net: MlpParams  # concat features -> 1 logit; D = sigmoid(logit)
    opt_state: AdamState
    feat_mean: np.ndarray
    feat_std: np.ndarray
    n_actions: int = 0  # >0 marks a discrete action space (one-hot features)

    def copy(self) -> "Discriminator":
        return Discriminator(
            self.net.copy(),
            self.opt_state,
            self.feat_mean.copy(),
            self.feat_std.copy(),
            self.n_actions,
        )


def _features(disc: Discriminator, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if disc.n_actions > 0:
        onehot = np.zeros((obs.shape[0], disc.n_actions))
        onehot[np.arange(obs.shape[0]), np.asarray(actions, dtype=np.intp).ravel()] = 1.0
        raw = np.concatenate([obs, onehot], axis=1)
    else:
        acts = np.asarray(actions, dtype=np.float64).reshape(obs.shape[0], -1)
        raw = np.concatenate([obs, acts], axis=1)
    return (raw - disc.feat_mean) / disc.feat_std


def make_discriminator(
    obs_dim: int,
    act_dim: int,
    hidden: tuple[int, ...],
    rng: np.random.Generator,
    expert_data: DemoDataset | None = None,
    n_actions: int = 0,
    learning_rate: float = 3e-4,
) -> Discriminator:
    in_dim = obs_dim + (n_actions if n_actions > 0 else act_dim)
    # near-zero output layer: D starts flat at 0.5, so the imitation reward
    # carries no arbitrary signal before the discriminator has seen data
    net = nn.init_mlp([in_dim, *hidden, 1], rng, out_scale=0.01)
    feat_mean = np.zeros(in_dim)
    feat_std = np.ones(in_dim)
    disc = Discriminator(
        net, AdamState(dim=nn.flatten(net).size, learning_rate=learning_rate),
        feat_mean, feat_std, n_actions,
    )
    if expert_data is not None:
        obs, actions = expert_data.state_action_pairs()
        raw = _features(disc, obs, actions)  # identity normalization so far
        disc.feat_mean = raw.mean(axis=0)
        disc.feat_std = np.maximum(raw.std(axis=0), 1e-6)
    return disc


def logits(disc: Discriminator, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return nn.mlp_forward(disc.net, _features(disc, obs, actions))[:, 0]


def d_values(disc: Discriminator, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    z = logits(disc, obs, actions)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def imitation_log_reward(
    disc: Discriminator, obs: np.ndarray, actions: np.ndarray
) -> np.ndarray:
    """log of the clipped discriminator output, per (obs, action) pair."""
    single = np.asarray(obs).ndim == 1
    d = np.clip(d_values(disc, obs, actions), EPS_CLIP, 1.0 - EPS_CLIP)
    out = np.log(d)
    return np.float64(out[0]) if single else out


def _loss_tape(disc, agent_feats, expert_feats, nodes):
    # binary cross-entropy, no reward-path clip: log D = log_sigmoid(z) and
    # log(1-D) = log_sigmoid(-z) keep a live gradient at saturated logits
    za = nn.mlp_forward_tape(disc.net, agent_feats, nodes)
    ze = nn.mlp_forward_tape(disc.net, expert_feats, nodes)
    return (ad.log_sigmoid(ze).mean() + ad.log_sigmoid(za * -1.0).mean()) * -1.0


def discriminator_loss(disc: Discriminator, agent_batch, expert_batch) -> float:
    """Binary cross-entropy: -mean log D(expert) - mean log(1 - D(agent))."""
    a_obs, a_act = agent_batch
    e_obs, e_act = expert_batch
    if len(np.atleast_2d(a_obs)) == 0 or len(np.atleast_2d(e_obs)) == 0:
        raise ProtocolError("discriminator batches must be non-empty")
    za = logits(disc, a_obs, a_act)
    ze = logits(disc, e_obs, e_act)

    def log_sig(z):  # stable log sigmoid
        return np.where(z >= 0, -np.log1p(np.exp(-np.abs(z))),
                        z - np.log1p(np.exp(-np.abs(z))))

    return float(-log_sig(ze).mean() - log_sig(-za).mean())


def discriminator_update(
    disc: Discriminator, agent_batch, expert_batch, n_steps: int
) -> Discriminator:
    """`n_steps` Adam descents on the discriminator loss; returns a new
    Discriminator (the input is not mutated)."""
    a_obs, a_act = agent_batch
    e_obs, e_act = expert_batch
    if len(np.atleast_2d(a_obs)) == 0 or len(np.atleast_2d(e_obs)) == 0:
        raise ProtocolError("discriminator batches must be non-empty")
    disc = disc.copy()
    agent_feats = _features(disc, a_obs, a_act)
    expert_feats = _features(disc, e_obs, e_act)
    for _ in range(n_steps):
        _, grad = nn.value_and_grad(
            lambda p, nodes: _loss_tape(disc, agent_feats, expert_feats, nodes),
            disc.net,
        )
        flat = nn.flatten(disc.net)
        disc.opt_state, flat = adam_step(disc.opt_state, flat, grad)
        disc.net = nn.unflatten(disc.net, flat)
    return disc
