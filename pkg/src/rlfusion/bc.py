"""Behavior cloning and BC-initialized PPO.

Cloning minimizes the negative log-likelihood of expert actions under the
policy head (Gaussian NLL / categorical cross-entropy), so the same policy
parameterization flows straight into PPO afterwards. The returned policy is
the epoch checkpoint with the best held-out NLL.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .dataset import DemoDataset
from .distributions import LOG_STD_MAX, LOG_STD_MIN
from .optim import AdamState, adam_step
from .policy import Policy


@dataclass
class BcConfig:
    epochs: int = 40
    minibatch_size: int = 64
    learning_rate: float = 1e-3
    val_fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 0.5:
            raise ValueError("val_fraction must be in [0, 0.5)")


def nll(policy: Policy, obs: np.ndarray, actions: np.ndarray) -> float:
    """Mean negative log-likelihood of expert actions under the policy."""
    return float(-policy.log_prob_batch(obs, actions).mean())


def bc_train(
    dataset: DemoDataset, policy: Policy, config: BcConfig, rng: np.random.Generator
) -> Policy:
    """Supervised fit of the policy to expert (obs, action) pairs.

    Never touches an environment. Returns a new Policy (best validation
    NLL if val_fraction > 0, else the final epoch).
    """
    obs, actions = dataset.state_action_pairs()
    n = len(obs)
    order = rng.permutation(n)
    n_val = int(round(config.val_fraction * n))
    val_idx, train_idx = order[:n_val], order[n_val:]
    policy = policy.copy()
    opt = AdamState(dim=nn.flatten(policy.net).size, learning_rate=config.learning_rate)

    best = policy.copy()
    best_val = nll(best, obs[val_idx], actions[val_idx]) if n_val else np.inf
    for _ in range(config.epochs):
        epoch_order = rng.permutation(len(train_idx))
        for start in range(0, len(train_idx), config.minibatch_size):
            idx = train_idx[epoch_order[start : start + config.minibatch_size]]

            def loss(_params, nodes):
                logp, _ = policy.log_prob_entropy_t(nodes, obs[idx], actions[idx])
                return -logp.mean()

            _, grad = nn.value_and_grad(loss, policy.net)
            flat = nn.flatten(policy.net)
            opt, flat = adam_step(opt, flat, grad)
            policy.net = nn.unflatten(policy.net, flat)
        if n_val:
            val = nll(policy, obs[val_idx], actions[val_idx])
            if val < best_val:
                best_val = val
                best = policy.copy()
    return best if n_val else policy


def bc_plus_rl(
    dataset: DemoDataset,
    env_factory,
    bc_config: BcConfig,
    ppo_config,
    total_steps: int,
    seed: int,
    iteration_cb=None,
):
    """Clone the expert, then run sparse-reward PPO from the cloned policy.

    The value function starts fresh (never cloned); the cloned policy's
    log_std is reset to the PPO default so exploration survives the handoff.
    Returns (agent, metrics rows, final buffer).
    """
    from . import ppo as ppo_mod

    env = env_factory()
    agent = ppo_mod.build_agent(env, ppo_config, seed)
    if bc_config.epochs > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[3])
        cloned = bc_train(dataset, agent.policy, bc_config, rng)
        agent.policy = reset_log_std(cloned, ppo_config.init_log_std)
    agent, _, metrics, buf = ppo_mod.train_trgail(
        env_factory,
        None,
        ppo_config,
        total_steps,
        seed,
        use_task=True,
        use_imitation=False,
        agent=agent,
        iteration_cb=iteration_cb,
    )
    return agent, metrics, buf


def reset_log_std(policy: Policy, value: float = 0.0) -> Policy:
    """Restore exploration noise before the RL phase; cloning tends to
    collapse the action variance."""
    policy = policy.copy()
    if "log_std" in policy.net.extra:
        policy.net.extra["log_std"] = np.clip(
            np.full_like(policy.net.extra["log_std"], value), LOG_STD_MIN, LOG_STD_MAX
        )
    return policy
