"""End-to-end CLI smoke tests on the cheap chain environment."""

import json

import numpy as np
import pytest

from rlfusion import cli, envs
from rlfusion.dataset import from_trajectories, save_dataset
from rlfusion.envs import Trajectory


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    env = envs.ChainEnv(k=4, horizon=8)
    rng = np.random.default_rng(0)
    trajs = []
    for _ in range(10):
        obs = env.reset(rng)
        rows, acts, rews, ach = [], [], [], []
        done = False
        while not done:
            rows.append(obs)
            res = env.step(1)
            acts.append(1)
            rews.append(res.task_reward)
            ach.append(res.achieved)
            obs = res.next_obs
            done = res.done
        trajs.append(Trajectory(np.array(rows), np.array(acts, dtype=np.intp),
                                np.array(rews), np.array(ach, dtype=bool),
                                np.zeros(8)))
    demo_path = root / "demos.bin"
    save_dataset(from_trajectories(env, trajs), demo_path)
    config = {
        "env_id": "chain-4",
        "method": "trgail",
        "n_demonstrations": 5,
        "seeds": [0],
        "total_steps": 128,
        "eval_episodes": 5,
        "eval_every": 1,
        "train_eval_episodes": 5,
        "demo_path": str(demo_path),
        "out_dir": str(root / "runs"),
        "ppo": {"rollout_steps": 64, "minibatch_size": 32, "n_envs": 4,
                "epochs": 1, "hidden": [16], "disc_hidden": [8], "disc_steps": 1},
        "bc": {"epochs": 1},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config))
    return root, cfg_path


def test_run_and_verify(workspace, capsys):
    root, cfg_path = workspace
    assert cli.main(["run", "--config", str(cfg_path), "--seed", "0"]) == 0
    run_dir = root / "runs" / "chain-4-trgail-d5-s0"
    assert (run_dir / "summary.json").exists()
    assert cli.main(["verify", "--run", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert '"ok": true' in out


def test_plot(workspace):
    root, _ = workspace
    assert cli.main(["plot", "--runs", str(root / "runs"),
                     "--out", str(root / "plots")]) == 0
    assert list((root / "plots").glob("*.svg"))


def test_sweep(workspace, tmp_path):
    root, cfg_path = workspace
    sweep_cfg = tmp_path / "sweep.json"
    sweep_cfg.write_text(json.dumps({
        "base": json.loads(cfg_path.read_text()),
        "methods": ["ppo", "bc"],
        "demo_counts": [5],
    }))
    out = tmp_path / "sweep-out"
    assert cli.main(["sweep", "--config", str(sweep_cfg), "--out", str(out)]) == 0
    assert (out / "table.txt").exists()


def test_expert_train_and_sample(tmp_path):
    policy_path = tmp_path / "expert.bin"
    rc = cli.main(["expert", "train", "--env", "chain-4", "--steps", "512",
                   "--seed", "0", "--out", str(policy_path)])
    assert rc == 0
    assert policy_path.exists()
    demo_path = tmp_path / "demos.bin"
    rc = cli.main(["expert", "sample", "--env", "chain-4",
                   "--policy", str(policy_path), "--n-traj", "3",
                   "--out", str(demo_path)])
    assert rc == 0
    from rlfusion.dataset import load_dataset

    assert load_dataset(demo_path).n_trajectories == 3


def test_unknown_method_rejected(workspace):
    _, cfg_path = workspace
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(cfg_path), "--method", "dagger"])
