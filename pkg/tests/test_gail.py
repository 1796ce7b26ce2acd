"""Discriminator behavior: convention, training, and the optimal-D form."""

import numpy as np
import pytest

from rlfusion import gail
from rlfusion.channels import EPS_CLIP
from rlfusion.dataset import DemoDataset
from rlfusion.envs import Trajectory
from rlfusion.errors import ProtocolError


def _toy_dataset(obs, actions, horizon=None):
    horizon = horizon or len(obs)
    traj = Trajectory(
        obs=np.asarray(obs, dtype=np.float64),
        actions=np.asarray(actions),
        task_rewards=np.zeros(len(obs)),
        achieved=np.zeros(len(obs), dtype=bool),
        log_probs=np.zeros(len(obs)),
    )
    return DemoDataset(
        env_id="toy",
        obs_dim=np.asarray(obs).shape[1],
        act_dim=1,
        action_kind="continuous",
        trajectories=[traj],
        mean_score=0.0,
    )


def _separable_batches(rng, n=256):
    # expert lives at obs ~ +2, agent at obs ~ -2; actions mirror the split
    e_obs = rng.normal(2.0, 0.3, size=(n, 2))
    a_obs = rng.normal(-2.0, 0.3, size=(n, 2))
    e_act = rng.normal(1.0, 0.1, size=(n, 1))
    a_act = rng.normal(-1.0, 0.1, size=(n, 1))
    return (a_obs, a_act), (e_obs, e_act)


def test_fresh_discriminator_starts_flat():
    rng = np.random.default_rng(0)
    disc = gail.make_discriminator(3, 2, (16,), rng)
    obs = rng.normal(size=(50, 3))
    act = rng.normal(size=(50, 2))
    d = gail.d_values(disc, obs, act)
    assert np.all(np.abs(d - 0.5) < 0.05)


def test_training_separates_expert_from_agent():
    rng = np.random.default_rng(1)
    agent_b, expert_b = _separable_batches(rng)
    dataset = _toy_dataset(expert_b[0], expert_b[1])
    disc = gail.make_discriminator(
        2, 1, (32,), rng, expert_data=dataset, learning_rate=1e-2
    )
    disc = gail.discriminator_update(disc, agent_b, expert_b, n_steps=500)
    d_expert = gail.d_values(disc, *expert_b)
    d_agent = gail.d_values(disc, *agent_b)
    assert d_expert.mean() > 0.9  # D -> 1 on expert pairs
    assert d_agent.mean() < 0.1  # D -> 0 on agent pairs


def test_zero_steps_leaves_discriminator_unchanged():
    rng = np.random.default_rng(2)
    agent_b, expert_b = _separable_batches(rng, n=32)
    disc = gail.make_discriminator(2, 1, (16,), rng)
    before = gail.d_values(disc, *agent_b)
    updated = gail.discriminator_update(disc, agent_b, expert_b, n_steps=0)
    after = gail.d_values(updated, *agent_b)
    np.testing.assert_array_equal(before, after)


def test_update_does_not_mutate_input():
    rng = np.random.default_rng(3)
    agent_b, expert_b = _separable_batches(rng, n=32)
    disc = gail.make_discriminator(2, 1, (16,), rng)
    before = gail.d_values(disc, *agent_b).copy()
    gail.discriminator_update(disc, agent_b, expert_b, n_steps=5)
    np.testing.assert_array_equal(gail.d_values(disc, *agent_b), before)


def test_imitation_reward_is_log_clipped_d():
    rng = np.random.default_rng(4)
    disc = gail.make_discriminator(2, 1, (8,), rng)
    obs = rng.normal(size=(20, 2))
    act = rng.normal(size=(20, 1))
    d = gail.d_values(disc, obs, act)
    expected = np.log(np.clip(d, EPS_CLIP, 1.0 - EPS_CLIP))
    np.testing.assert_allclose(
        gail.imitation_log_reward(disc, obs, act), expected, rtol=0, atol=1e-15
    )
    # the clip floors the reward at log(EPS_CLIP)
    assert np.all(gail.imitation_log_reward(disc, obs, act) >= np.log(EPS_CLIP))


def test_imitation_reward_single_pair_matches_batch():
    rng = np.random.default_rng(5)
    disc = gail.make_discriminator(2, 1, (8,), rng)
    obs = rng.normal(size=(4, 2))
    act = rng.normal(size=(4, 1))
    batch = gail.imitation_log_reward(disc, obs, act)
    for i in range(4):
        single = gail.imitation_log_reward(disc, obs[i], act[i])
        assert np.isscalar(single) or single.ndim == 0
        assert abs(float(single) - batch[i]) < 1e-15


def test_optimal_discriminator_on_tabular_mixture():
    """On a discrete space with known occupancies, the trained D approaches
    p_E / (p_E + p_pi) at each (state, action)."""
    rng = np.random.default_rng(6)
    # 3 one-hot states x 2 actions with different expert/agent frequencies
    p_expert = np.array([[0.30, 0.05], [0.05, 0.30], [0.15, 0.15]])
    p_agent = np.array([[0.10, 0.25], [0.25, 0.10], [0.15, 0.15]])
    n = 6000
    eye = np.eye(3)

    def sample(p, count):
        flat = rng.choice(6, size=count, p=p.ravel())
        return eye[flat // 2], flat % 2

    e_obs, e_act = sample(p_expert, n)
    a_obs, a_act = sample(p_agent, n)
    dataset = _toy_dataset(e_obs, e_act)
    dataset.act_dim = 1
    disc = gail.make_discriminator(
        3, 0, (32,), rng, expert_data=dataset, n_actions=2, learning_rate=1e-2
    )
    disc = gail.discriminator_update(disc, (a_obs, a_act), (e_obs, e_act), 800)
    for s in range(3):
        for a in range(2):
            target = p_expert[s, a] / (p_expert[s, a] + p_agent[s, a])
            got = float(gail.d_values(disc, eye[s][None, :], np.array([a]))[0])
            assert abs(got - target) < 0.05, (s, a, got, target)


def test_empty_batches_rejected():
    rng = np.random.default_rng(7)
    disc = gail.make_discriminator(2, 1, (8,), rng)
    good = (rng.normal(size=(4, 2)), rng.normal(size=(4, 1)))
    empty = (np.zeros((0, 2)), np.zeros((0, 1)))
    with pytest.raises(ProtocolError):
        gail.discriminator_update(disc, empty, good, 1)
    with pytest.raises(ProtocolError):
        gail.discriminator_loss(disc, good, empty)


def test_feature_normalization_frozen_from_expert_data():
    rng = np.random.default_rng(8)
    obs = rng.normal(5.0, 2.0, size=(100, 2))
    act = rng.normal(-3.0, 0.5, size=(100, 1))
    dataset = _toy_dataset(obs, act)
    disc = gail.make_discriminator(2, 1, (8,), rng, expert_data=dataset)
    feats = gail._features(disc, obs, act)
    np.testing.assert_allclose(feats.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(feats.std(axis=0), 1.0, atol=1e-10)
