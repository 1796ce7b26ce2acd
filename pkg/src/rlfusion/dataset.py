"""Expert demonstration datasets and their binary file format.

Layout (little-endian):

    bytes 0..4   magic b"DEMO"
    uint32       header length L
    L bytes      UTF-8 JSON: {"version": 1, "env_id", "obs_dim", "act_dim",
                  "action_kind": "discrete"|"continuous", "n_trajectories",
                  "horizon", "mean_score"}
    float64[...] per trajectory, per step: obs, action (act_dim values;
                 discrete actions are stored as a single float index),
                 task_reward, achieved — n_trajectories * horizon records.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .envs import Trajectory, episode_score
from .errors import FormatError, ProtocolError

_MAGIC = b"DEMO"


@dataclass
class DemoDataset:
    env_id: str
    obs_dim: int
    act_dim: int
    action_kind: str  # "discrete" | "continuous"
    trajectories: list[Trajectory]
    mean_score: float

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("a demo dataset must contain trajectories")

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)

    def state_action_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All (obs, action) pairs stacked across trajectories."""
        obs = np.concatenate([t.obs for t in self.trajectories])
        actions = np.concatenate([t.actions for t in self.trajectories])
        return obs, actions

    def recomputed_mean_score(self) -> float:
        return float(np.mean([episode_score(t) for t in self.trajectories]))


def from_trajectories(env, trajectories: list[Trajectory]) -> DemoDataset:
    sp = env.spec
    discrete = sp.action_space.kind == "discrete"
    return DemoDataset(
        env_id=sp.env_id,
        obs_dim=sp.obs_dim,
        act_dim=1 if discrete else sp.action_space.dim,
        action_kind="discrete" if discrete else "continuous",
        trajectories=trajectories,
        mean_score=float(np.mean([episode_score(t) for t in trajectories])),
    )


def save_dataset(dataset: DemoDataset, path) -> None:
    horizon = len(dataset.trajectories[0])
    if any(len(t) != horizon for t in dataset.trajectories):
        raise ValueError("all trajectories must have the same length")
    header = json.dumps(
        {
            "version": 1,
            "env_id": dataset.env_id,
            "obs_dim": dataset.obs_dim,
            "act_dim": dataset.act_dim,
            "action_kind": dataset.action_kind,
            "n_trajectories": dataset.n_trajectories,
            "horizon": horizon,
            "mean_score": dataset.mean_score,
        }
    ).encode()
    rows = []
    for t in dataset.trajectories:
        actions = t.actions.reshape(len(t), -1).astype(np.float64)
        rows.append(
            np.concatenate(
                [
                    t.obs,
                    actions,
                    t.task_rewards[:, None],
                    t.achieved.astype(np.float64)[:, None],
                ],
                axis=1,
            )
        )
    payload = np.concatenate(rows).astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(payload)


def load_dataset(path, expected_env_id: str | None = None) -> DemoDataset:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise FormatError(f"bad magic at byte 0: {data[:4]!r}")
    if len(data) < 8:
        raise FormatError(f"truncated file at byte {len(data)}")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"bad header at byte 8: {e}") from e
    if expected_env_id is not None and header["env_id"] != expected_env_id:
        raise ProtocolError(
            f"dataset is for env {header['env_id']!r}, requested {expected_env_id!r}"
        )
    obs_dim, act_dim = int(header["obs_dim"]), int(header["act_dim"])
    n_traj, horizon = int(header["n_trajectories"]), int(header["horizon"])
    row = obs_dim + act_dim + 2
    expected_bytes = 8 * row * horizon * n_traj
    payload = data[8 + hlen :]
    if len(payload) != expected_bytes:
        raise FormatError(
            f"payload at byte {8 + hlen}: got {len(payload)} bytes, "
            f"expected {expected_bytes}"
        )
    table = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    table = table.reshape(n_traj, horizon, row)
    discrete = header["action_kind"] == "discrete"
    trajectories = []
    for block in table:
        actions = block[:, obs_dim : obs_dim + act_dim]
        trajectories.append(
            Trajectory(
                obs=block[:, :obs_dim].copy(),
                actions=actions[:, 0].astype(np.intp) if discrete else actions.copy(),
                task_rewards=block[:, -2].copy(),
                achieved=block[:, -1] > 0.5,
                log_probs=np.zeros(horizon),
            )
        )
    return DemoDataset(
        env_id=header["env_id"],
        obs_dim=obs_dim,
        act_dim=act_dim,
        action_kind=header["action_kind"],
        trajectories=trajectories,
        mean_score=float(header["mean_score"]),
    )
