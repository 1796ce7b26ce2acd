"""Stochastic policies and value functions on top of the MLP core.

A Gaussian policy stores its state-independent log_std as the extra
parameter vector of its MlpParams, so one flat vector covers everything
the optimizer touches. A categorical policy's network outputs logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import distributions as D
from . import nn
from .autodiff import Tensor
from .nn import MlpParams


@dataclass
class Policy:
    net: MlpParams

    @property
    def kind(self) -> str:
        return "gaussian" if "log_std" in self.net.extra else "categorical"

    @property
    def act_dim(self) -> int:
        return self.net.out_dim

    def copy(self) -> "Policy":
        return Policy(self.net.copy())

    # -- acting -------------------------------------------------------------

    def act_batch(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample actions for a batch of observations.

        Returns (actions, log_probs); actions are float (batch, act_dim) for
        gaussian and int (batch,) for categorical.
        """
        out = nn.mlp_forward(self.net, obs)
        if self.kind == "gaussian":
            log_std = np.clip(
                self.net.extra["log_std"], D.LOG_STD_MIN, D.LOG_STD_MAX
            )
            std = np.exp(log_std)
            z = rng.standard_normal(out.shape)
            actions = out + std * z
            zz = (actions - out) / std
            logp = np.sum(-0.5 * zz**2 - log_std - 0.5 * D.LOG_2PI, axis=1)
            return actions, logp
        actions = D.categorical_sample_batch(out, rng)
        logp = D._log_softmax(out)[np.arange(len(actions)), actions]
        return actions, logp

    def log_prob_batch(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        out = nn.mlp_forward(self.net, obs)
        if self.kind == "gaussian":
            log_std = np.clip(self.net.extra["log_std"], D.LOG_STD_MIN, D.LOG_STD_MAX)
            std = np.exp(log_std)
            z = (actions - out) / std
            return np.sum(-0.5 * z**2 - log_std - 0.5 * D.LOG_2PI, axis=1)
        lp = D._log_softmax(out)
        return lp[np.arange(len(actions)), actions.astype(np.intp)]

    def mean_entropy(self, obs: np.ndarray) -> float:
        out = nn.mlp_forward(self.net, obs)
        if self.kind == "gaussian":
            log_std = np.clip(self.net.extra["log_std"], D.LOG_STD_MIN, D.LOG_STD_MAX)
            return float(np.sum(log_std + 0.5 * (D.LOG_2PI + 1.0)))
        lp = D._log_softmax(out)
        return float(-(np.exp(lp) * lp).sum(axis=1).mean())

    # -- tape side, for losses ----------------------------------------------

    def log_prob_entropy_t(
        self, nodes: list[Tensor], obs: np.ndarray, actions: np.ndarray
    ):
        """(per-sample log-prob, mean entropy) as tape nodes."""
        out = nn.mlp_forward_tape(self.net, obs, nodes)
        if self.kind == "gaussian":
            log_std_node = nodes[-1]  # the single extra vector
            log_std = _clip_node(log_std_node, D.LOG_STD_MIN, D.LOG_STD_MAX)
            logp = D.gaussian_log_prob_t(out, log_std, actions)
            ent = D.gaussian_entropy_t(log_std, self.act_dim)
            return logp, ent
        logp = D.categorical_log_prob_t(out, actions)
        ent = D.categorical_entropy_t(out).mean()
        return logp, ent


def _clip_node(x: Tensor, lo: float, hi: float) -> Tensor:
    from . import autodiff as ad

    return ad.clip(x, lo, hi)


def make_gaussian_policy(
    obs_dim: int,
    act_dim: int,
    hidden: tuple[int, ...],
    rng: np.random.Generator,
    init_log_std: float = 0.0,
) -> Policy:
    net = nn.init_mlp(
        [obs_dim, *hidden, act_dim],
        rng,
        out_scale=0.01,
        extra={"log_std": np.full(act_dim, float(init_log_std))},
    )
    return Policy(net)


def make_categorical_policy(
    obs_dim: int, n_actions: int, hidden: tuple[int, ...], rng: np.random.Generator
) -> Policy:
    net = nn.init_mlp([obs_dim, *hidden, n_actions], rng, out_scale=0.01)
    return Policy(net)


def make_value_net(
    obs_dim: int, hidden: tuple[int, ...], rng: np.random.Generator
) -> MlpParams:
    return nn.init_mlp([obs_dim, *hidden, 1], rng)


def value_batch(value_net: MlpParams, obs: np.ndarray) -> np.ndarray:
    return nn.mlp_forward(value_net, obs)[:, 0]
