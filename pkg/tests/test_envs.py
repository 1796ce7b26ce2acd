import numpy as np
import pytest
from scipy import stats

from rlfusion import envs
from rlfusion.errors import ProtocolError


def rollout(env, actions, seed=0):
    env.reset(np.random.default_rng(seed))
    return [env.step(a) for a in actions]


def test_grid_motion_example():
    env = envs.GridPush(5, 100)
    env.reset(np.random.default_rng(0))
    env.agent = (0, 0)
    env.obj = (3, 3)
    env.step(0)  # "right"
    assert env.agent == (1, 0)


def test_grid_push_moves_object():
    env = envs.GridPush(5, 100)
    env.reset(np.random.default_rng(0))
    env.agent, env.obj = (1, 2), (2, 2)
    env.step(0)  # push right
    assert env.agent == (2, 2) and env.obj == (3, 2)


def test_grid_push_blocked_by_wall():
    env = envs.GridPush(5, 100)
    env.reset(np.random.default_rng(0))
    env.agent, env.obj = (3, 2), (4, 2)
    res = env.step(0)  # push would leave the grid: both stay
    assert env.agent == (3, 2) and env.obj == (4, 2)
    assert res.task_reward == 1.0  # object already sits on the goal


def test_grid_task_achieved_iff_object_on_goal():
    env = envs.GridPush(5, 100)
    env.reset(np.random.default_rng(0))
    env.obj = env.goal
    assert env.task_achieved()
    env.obj = (1, 1)
    assert not env.task_achieved()


def test_grid_object_stuck_map():
    env = envs.GridPush(5, 100)
    # everything on the x=0 / y=0 / y=4 walls is dead; so are the far-wall
    # corners (no standing room for the pusher); the rest is recoverable
    for x in range(5):
        for y in range(5):
            reachable = (0 < x and 0 < y < 4) or (x == 4 and y in (1, 2, 3))
            assert env.object_stuck((x, y)) == (not reachable), (x, y)


def test_episodes_run_exactly_horizon_steps():
    env = envs.GridPush(5, 7)
    env.reset(np.random.default_rng(0))
    results = [env.step(0) for _ in range(7)]
    assert [r.done for r in results] == [False] * 6 + [True]
    with pytest.raises(ProtocolError):
        env.step(0)


def test_step_before_reset_is_protocol_error():
    env = envs.GridPush(5, 10)
    with pytest.raises(ProtocolError):
        env.step(0)


def test_reset_determinism():
    for env_id in ("grid-push", "point-pusher", "chain-4"):
        a = envs.make_env(env_id).reset(np.random.default_rng(3))
        b = envs.make_env(env_id).reset(np.random.default_rng(3))
        assert np.array_equal(a, b)


def test_grid_reset_object_uniform_chi_square():
    env = envs.GridPush(5, 100)
    cells = env.legal_object_cells()
    rng = np.random.default_rng(0)
    counts = {c: 0 for c in cells}
    n = 4000
    for _ in range(n):
        env.reset(rng)
        counts[env.obj] += 1
    observed = np.array([counts[c] for c in cells])
    _, p = stats.chisquare(observed)
    assert p > 0.01


def test_pusher_reset_object_uniform_in_region():
    env = envs.PointPusher(100)
    rng = np.random.default_rng(0)
    lo, hi = env.OBJECT_REGION
    pts = []
    for _ in range(2000):
        env.reset(rng)
        pts.append(env.obj.copy())
    pts = np.array(pts)
    assert pts.min() >= lo and pts.max() <= hi
    # split each axis at the midpoint: counts should be ~uniform over quadrants
    quad = (pts[:, 0] > (lo + hi) / 2) * 2 + (pts[:, 1] > (lo + hi) / 2)
    _, p = stats.chisquare(np.bincount(quad, minlength=4))
    assert p > 0.01


def test_pusher_null_action_keeps_positions():
    env = envs.PointPusher(100)
    env.reset(np.random.default_rng(1))
    env.obj = np.array([0.3, 0.3])  # away from the agent
    agent_before = env.agent.copy()
    res = env.step(np.zeros(2))
    assert np.array_equal(env.agent, agent_before)
    assert res.task_reward == float(
        np.linalg.norm(env.obj - env.goal) <= env.GOAL_RADIUS
    )


def test_pusher_hand_integrated_push_reaches_goal():
    env = envs.PointPusher(100)
    env.reset(np.random.default_rng(0))
    # place the agent overlapping the object just outside the goal disc and
    # push toward the goal; hand-integrate the same dynamics in parallel
    env.agent = np.array([0.40, 0.40])
    env.vel = np.zeros(2)
    env.obj = np.array([0.45, 0.45])
    agent, vel, obj = env.agent.copy(), env.vel.copy(), env.obj.copy()
    action = np.array([1.0, 1.0])
    achieved = False
    for _ in range(10):
        res = env.step(action)
        agent, vel, obj = envs.PointPusher._dynamics(agent, vel, obj, action)
        assert np.allclose(obj, env.obj)
        achieved = achieved or res.achieved
    assert achieved  # k hand-computed steps land the object inside the goal


def test_pusher_out_of_range_actions_clipped():
    env = envs.PointPusher(100)
    env.reset(np.random.default_rng(0))
    env.obj = np.array([-0.9, 0.9])  # out of the way
    a = env.step(np.array([100.0, 100.0])).next_obs
    env2 = envs.PointPusher(100)
    env2.reset(np.random.default_rng(0))
    env2.obj = np.array([-0.9, 0.9])
    b = env2.step(np.array([1.0, 1.0])).next_obs
    assert np.array_equal(a, b)


def test_episode_score_counts_achieved_steps():
    env = envs.ChainEnv(k=3, horizon=5)
    obs = env.reset(np.random.default_rng(0))
    traj_obs, acts, rews, ach = [], [], [], []
    for _ in range(5):
        traj_obs.append(obs)
        res = env.step(1)
        obs = res.next_obs
        acts.append(1)
        rews.append(res.task_reward)
        ach.append(res.achieved)
    traj = envs.Trajectory(
        obs=np.array(traj_obs),
        actions=np.array(acts),
        task_rewards=np.array(rews),
        achieved=np.array(ach),
        log_probs=np.zeros(5),
    )
    # chain-3 reaches the last state after 2 right moves: achieved on steps 2..5
    assert envs.episode_score(traj) == 4


def test_grid_task_reward_batch_matches_scalar():
    env = envs.GridPush(5, 100)
    rng = np.random.default_rng(0)
    obs, acts = [], []
    env.reset(rng)
    for _ in range(300):
        a = int(rng.integers(4))
        obs.append(env._obs())
        acts.append(a)
        if env.step(a).done:
            env.reset(rng)
    obs, acts = np.array(obs), np.array(acts)
    batch = env.task_reward_batch(obs, acts)
    scalar = np.array([env.task_reward_from(o, a) for o, a in zip(obs, acts)])
    assert np.array_equal(batch, scalar)


def test_make_env_unknown_id():
    with pytest.raises(ValueError):
        envs.make_env("nope")
