"""Expert policies and demonstration datasets.

Experts are trained with max-ent PPO on a dense shaped reward (the toy
stand-in for a hand-designed true reward); benchmark methods never see this
reward. Training keeps the best-scoring checkpoint rather than running to
convergence, so expert fixtures can deliberately be "good, not perfect" and
leave headroom for methods that also use the task reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ppo as ppo_mod
from .channels import ChannelSet, OptimalityChannel
from .dataset import DemoDataset, from_trajectories, load_dataset, save_dataset  # noqa: F401
from .envs import Trajectory
from .policy import Policy


@dataclass
class ShapedRewardConfig:
    w_object_goal: float = 1.0  # penalty on object-goal distance
    w_agent_object: float = 0.5  # penalty on agent-object distance
    w_control: float = 0.0  # penalty on squared action norm (continuous only)
    w_bonus: float = 1.0  # achievement bonus
    w_trap: float = 0.0  # penalty while the object is irrecoverably stuck
    # (grid only: most wall cells can never be pushed back toward the goal,
    # but the distance term alone gives no gradient for that)


def shaped_channel(env, cfg: ShapedRewardConfig) -> OptimalityChannel:
    """Dense shaping evaluated on (obs, action); layout depends on the env."""
    env_id = env.spec.env_id

    # distances are evaluated on the post-action state so the shaping gives
    # immediate credit for a productive push

    def point_eval(obs, actions):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        r = np.zeros(len(obs))
        for i, (o, a) in enumerate(zip(obs, actions)):
            agent, _, obj = env._dynamics(o[0:2], o[2:4], o[4:6], a)
            goal = o[6:8]
            d_og = float(np.linalg.norm(obj - goal))
            r[i] = (
                -cfg.w_object_goal * d_og
                - cfg.w_agent_object * float(np.linalg.norm(agent - obj))
                - cfg.w_control * float((a**2).sum())
                + cfg.w_bonus * float(d_og <= env.GOAL_RADIUS)
            )
        return r

    def grid_eval(obs, actions):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        actions = np.asarray(actions).ravel()
        s = env.size - 1
        r = np.zeros(len(obs))
        for i, (o, a) in enumerate(zip(obs, actions)):
            agent_c, obj_c = env.cells_from_obs(o)
            agent_c, obj_c = env.transition(agent_c, obj_c, int(a))
            d_og = (abs(obj_c[0] - env.goal[0]) + abs(obj_c[1] - env.goal[1])) / s
            d_ao = (abs(agent_c[0] - obj_c[0]) + abs(agent_c[1] - obj_c[1])) / s
            r[i] = (
                -cfg.w_object_goal * d_og
                - cfg.w_agent_object * d_ao
                + cfg.w_bonus * float(obj_c == env.goal)
                - cfg.w_trap * float(env.object_stuck(obj_c))
            )
        return r

    if env_id == "point-pusher":
        evaluator = point_eval
    elif env_id == "grid-push":
        evaluator = grid_eval
    else:
        raise ValueError(f"no shaped reward defined for {env_id!r}")
    return OptimalityChannel("shaped", "custom_log_prob", evaluator)


def default_expert_ppo_config(env_id: str) -> ppo_mod.PpoConfig:
    """The tuned settings used to produce the repo's expert fixtures."""
    if env_id == "grid-push":
        return ppo_mod.PpoConfig(
            rollout_steps=4096,
            minibatch_size=512,
            n_envs=32,
            epochs=4,
            hidden=(64, 64),
            entropy_coef=0.01,
            lr_policy=1e-3,
            lr_value=1e-3,
        )
    return ppo_mod.PpoConfig()


def train_expert(
    env_factory,
    shaped_cfg: ShapedRewardConfig,
    ppo_cfg: ppo_mod.PpoConfig,
    total_steps: int,
    seed: int,
    eval_every: int = 5,
    eval_episodes: int = 20,
    score_cap: float | None = None,
) -> tuple[Policy, float]:
    """Max-ent PPO on the shaped reward; returns (policy, eval score) of the
    best checkpoint (first one reaching `score_cap`, when given, so expert
    fixtures can be stopped at a target quality)."""
    env = env_factory()
    agent = ppo_mod.build_agent(env, ppo_cfg, seed)

    best = {"score": -np.inf, "policy": agent.policy.copy()}

    def channel_builder(_disc, env_inst):
        return ChannelSet((shaped_channel(env_inst, shaped_cfg),))

    def cb(iteration, ag, _disc, _row, _buf):
        if iteration % eval_every != 0:
            return False
        score = ppo_mod.evaluate(
            ag.policy, env_factory, eval_episodes, seed + 7_777 + iteration
        )
        if score > best["score"]:
            best["score"] = score
            best["policy"] = ag.policy.copy()
        return score_cap is not None and score >= score_cap

    ppo_mod.train(
        env_factory,
        agent,
        channel_builder,
        total_steps,
        ppo_cfg,
        seed,
        iteration_cb=cb,
    )
    return best["policy"], float(best["score"])


def sample_demonstrations(
    policy: Policy, env_factory, n_traj: int, seed: int
) -> DemoDataset:
    """Roll out `n_traj` full stochastic episodes and package them."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    env = env_factory()
    rng = np.random.default_rng(seed)
    trajectories = []
    for _ in range(n_traj):
        obs = env.reset(rng)
        obs_l, act_l, rew_l, ach_l, lp_l = [], [], [], [], []
        done = False
        while not done:
            action, logp = policy.act_batch(obs[None, :], rng)
            res = env.step(action[0])
            obs_l.append(obs)
            act_l.append(action[0])
            rew_l.append(res.task_reward)
            ach_l.append(res.achieved)
            lp_l.append(logp[0])
            obs = res.next_obs
            done = res.done
        trajectories.append(
            Trajectory(
                obs=np.stack(obs_l),
                actions=np.stack(act_l),
                task_rewards=np.array(rew_l),
                achieved=np.array(ach_l, dtype=bool),
                log_probs=np.array(lp_l),
            )
        )
    return from_trajectories(env, trajectories)
