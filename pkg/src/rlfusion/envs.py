"""Toy environments with binary task-achievement rewards.

Three families share one protocol (`reset(rng)` / `step(action)`):

* PointPusher -- continuous 2D kinematics: an agent pushes an object into a
  fixed goal circle; object position is randomized at reset.
* GridPush -- discrete grid analogue, small enough for exact tabular work.
* ChainEnv ("chain-k") -- a k-state chain exposing the exact transition and
  reward tables consumed by the inference oracle.

Episodes always run exactly T steps; achievement is evaluated on the
post-step state and recorded as that step's reward, so the episode score is
the count of achieved steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError


@dataclass
class ActionSpace:
    kind: str  # "continuous" | "discrete"
    dim: int = 0  # continuous only
    low: float = -1.0
    high: float = 1.0
    n: int = 0  # discrete only


@dataclass
class EnvSpec:
    env_id: str
    obs_dim: int
    action_space: ActionSpace
    horizon: int = 100
    randomization: frozenset = frozenset()


@dataclass
class StepResult:
    next_obs: np.ndarray
    task_reward: float
    achieved: bool
    done: bool


@dataclass
class Trajectory:
    """One episode: parallel arrays over timesteps."""

    obs: np.ndarray  # (T, obs_dim)
    actions: np.ndarray  # (T, act_dim) or (T,) for discrete
    task_rewards: np.ndarray  # (T,) in {0, 1}
    achieved: np.ndarray  # (T,) bool
    log_probs: np.ndarray  # (T,)

    def __len__(self):
        return len(self.task_rewards)


def episode_score(traj: Trajectory) -> int:
    """Number of achieved steps in the episode."""
    return int(traj.achieved.sum())


class PointPusher:
    """Kinematic 2D pusher in [-1, 1]^2.

    obs = (agent_xy, agent_vel_xy, object_xy, goal_xy). Force actions in
    [-1, 1]^2 are clipped and Euler-integrated with damping; the agent
    displaces the object whenever they overlap. Agent start and goal are
    fixed; the object spawns uniformly in OBJECT_REGION.
    """

    AGENT_START = np.array([-0.6, -0.6])
    GOAL = np.array([0.6, 0.6])
    GOAL_RADIUS = 0.15
    OBJECT_REGION = (-0.3, 0.3)
    CONTACT_RADIUS = 0.12
    DT = 0.1
    DAMPING = 0.15

    def __init__(self, horizon: int = 100):
        self.spec = EnvSpec(
            env_id="point-pusher",
            obs_dim=8,
            action_space=ActionSpace("continuous", dim=2, low=-1.0, high=1.0),
            horizon=horizon,
            randomization=frozenset({"object"}),
        )
        self._t = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.OBJECT_REGION
        self.agent = self.AGENT_START.copy()
        self.vel = np.zeros(2)
        self.obj = rng.uniform(lo, hi, size=2)
        self.goal = self.GOAL.copy()
        self._t = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.agent, self.vel, self.obj, self.goal])

    def task_achieved(self) -> bool:
        return float(np.linalg.norm(self.obj - self.goal)) <= self.GOAL_RADIUS

    @classmethod
    def _dynamics(cls, agent, vel, obj, action):
        """One Euler step of the shared kinematics (stateless)."""
        force = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        new_vel = (vel + cls.DT * force) * (1.0 - cls.DAMPING)
        new_agent = np.clip(agent + cls.DT * new_vel, -1.0, 1.0)
        new_obj = obj
        delta = obj - new_agent
        dist = float(np.linalg.norm(delta))
        if dist < cls.CONTACT_RADIUS:
            # transfer the overlap displacement to the object
            if dist > 1e-12:
                direction = delta / dist
            else:
                move = new_agent - agent
                norm = float(np.linalg.norm(move))
                direction = move / norm if norm > 1e-12 else np.array([1.0, 0.0])
            new_obj = np.clip(new_agent + direction * cls.CONTACT_RADIUS, -1.0, 1.0)
        return new_agent, new_vel, new_obj

    def step(self, action) -> StepResult:
        if self._t is None or self._t >= self.spec.horizon:
            raise ProtocolError("step() on finished or unreset episode")
        self.agent, self.vel, self.obj = self._dynamics(
            self.agent, self.vel, self.obj, action
        )
        self._t += 1
        achieved = self.task_achieved()
        return StepResult(self._obs(), float(achieved), achieved, self._t >= self.spec.horizon)

    def task_reward_from(self, obs, action) -> float:
        """Binary reward for one (obs, action) pair, recomputed statelessly."""
        obs = np.asarray(obs, dtype=np.float64)
        _, _, obj = self._dynamics(obs[0:2], obs[2:4], obs[4:6], action)
        goal = obs[6:8]
        return float(float(np.linalg.norm(obj - goal)) <= self.GOAL_RADIUS)


class GridPush:
    """Agent pushes an object on an n x n grid; 4 actions (right/left/up/down).

    The agent starts in a fixed corner, the goal sits at the midpoint of the
    far wall, and the object spawns uniformly over its legal region. Moving
    into the object pushes it one cell in the same direction; pushes off the
    grid block both movers. An object can only leave a wall by sliding along
    it, so pushing it onto any wall other than the goal's is irrecoverable
    and careless exploration rarely scores.
    """

    MOVES = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])

    def __init__(self, size: int = 5, horizon: int = 100):
        self.size = size
        self.agent_start = (0, 0)
        self.goal = (size - 1, size // 2)
        self.spec = EnvSpec(
            env_id="grid-push",
            obs_dim=6,
            action_space=ActionSpace("discrete", n=4),
            horizon=horizon,
            randomization=frozenset({"object"}),
        )
        self._t = None

    def legal_object_cells(self) -> list[tuple[int, int]]:
        # interior cells only (a wall-adjacent object cannot be pushed off
        # the wall, so wall spawns would be unsolvable), and at least two
        # cells from the goal so a coordinated multi-push is always required
        return [
            (x, y)
            for x in range(1, self.size - 1)
            for y in range(1, self.size - 1)
            if (x, y) != self.agent_start
            and (x, y) != self.goal
            and abs(x - self.goal[0]) + abs(y - self.goal[1]) >= 2
        ]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        cells = self.legal_object_cells()
        self.agent = self.agent_start
        self.obj = cells[int(rng.integers(len(cells)))]
        self._t = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        s = self.size - 1
        return np.array(
            [
                self.agent[0] / s,
                self.agent[1] / s,
                self.obj[0] / s,
                self.obj[1] / s,
                self.goal[0] / s,
                self.goal[1] / s,
            ]
        )

    def obs_for(self, agent: tuple, obj: tuple) -> np.ndarray:
        s = self.size - 1
        return np.array(
            [agent[0] / s, agent[1] / s, obj[0] / s, obj[1] / s,
             self.goal[0] / s, self.goal[1] / s]
        )

    def _in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.size and 0 <= cell[1] < self.size

    def transition(self, agent: tuple, obj: tuple, action: int):
        """Deterministic next (agent, object) from a state-action pair."""
        dx, dy = self.MOVES[action]
        target = (agent[0] + dx, agent[1] + dy)
        if not self._in_bounds(target):
            return agent, obj
        if target == obj:
            obj_target = (obj[0] + dx, obj[1] + dy)
            if not self._in_bounds(obj_target):
                return agent, obj  # push blocked by the wall
            return target, obj_target
        return target, obj

    def task_achieved(self) -> bool:
        return self.obj == self.goal

    def object_stuck(self, obj: tuple) -> bool:
        """True if no push sequence can ever bring `obj` to the goal.

        The object can be pushed from cell c in direction d only when both
        c+d (the destination) and c-d (where the pusher must stand) are on
        the grid, so wall cells can only slide along their wall and most of
        the boundary is a dead end.
        """
        if not hasattr(self, "_reachable"):
            frontier = [self.goal]
            seen = {self.goal}
            while frontier:  # backward BFS: which cells can reach the goal
                cell = frontier.pop()
                for dx, dy in self.MOVES:
                    prev = (cell[0] - dx, cell[1] - dy)
                    pusher = (prev[0] - dx, prev[1] - dy)
                    if (
                        prev not in seen
                        and self._in_bounds(prev)
                        and self._in_bounds(pusher)
                    ):
                        seen.add(prev)
                        frontier.append(prev)
            self._reachable = seen
        return obj not in self._reachable

    def step(self, action) -> StepResult:
        if self._t is None or self._t >= self.spec.horizon:
            raise ProtocolError("step() on finished or unreset episode")
        self.agent, self.obj = self.transition(self.agent, self.obj, int(action))
        self._t += 1
        achieved = self.task_achieved()
        return StepResult(self._obs(), float(achieved), achieved, self._t >= self.spec.horizon)

    def cells_from_obs(self, obs) -> tuple[tuple, tuple]:
        s = self.size - 1
        obs = np.asarray(obs, dtype=np.float64)
        agent = (int(round(obs[0] * s)), int(round(obs[1] * s)))
        obj = (int(round(obs[2] * s)), int(round(obs[3] * s)))
        return agent, obj

    def task_reward_from(self, obs, action) -> float:
        agent, obj = self.cells_from_obs(obs)
        _, new_obj = self.transition(agent, obj, int(action))
        return float(new_obj == self.goal)

    def task_reward_batch(self, obs, actions) -> np.ndarray:
        """Vectorized `task_reward_from` over a batch of (obs, action) rows."""
        s = self.size - 1
        obs = np.asarray(obs, dtype=np.float64)
        agent = np.rint(obs[:, 0:2] * s).astype(np.intp)
        obj = np.rint(obs[:, 2:4] * s).astype(np.intp)
        d = np.asarray(self.MOVES, dtype=np.intp)[np.asarray(actions, dtype=np.intp).ravel()]
        target = agent + d
        agent_ok = ((target >= 0) & (target < self.size)).all(axis=1)
        pushing = agent_ok & (target == obj).all(axis=1)
        obj_target = obj + d
        push_ok = pushing & ((obj_target >= 0) & (obj_target < self.size)).all(axis=1)
        new_obj = np.where(push_ok[:, None], obj_target, obj)
        return (new_obj == np.asarray(self.goal, dtype=np.intp)).all(axis=1).astype(np.float64)

    # -- exact tabular view (for occupancy DP and oracles) ------------------

    def enumerate_states(self) -> list[tuple[tuple, tuple]]:
        cells = [(x, y) for x in range(self.size) for y in range(self.size)]
        return [(a, o) for a in cells for o in cells if a != o]

    def initial_states(self) -> list[tuple[tuple, tuple]]:
        return [(self.agent_start, o) for o in self.legal_object_cells()]


class ChainEnv:
    """k-state chain: action 0 stays, action 1 moves right (saturating).

    Achieved exactly at the last state. Observations are one-hot states.
    The exact transition/reward tables are exposed via `tabular_mdp()`;
    they are the single source of truth for oracle cross-checks.
    """

    def __init__(self, k: int = 4, horizon: int = 8):
        self.k = k
        self.spec = EnvSpec(
            env_id=f"chain-{k}",
            obs_dim=k,
            action_space=ActionSpace("discrete", n=2),
            horizon=horizon,
        )
        self._t = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = 0
        self._t = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.k)
        obs[self.state] = 1.0
        return obs

    def task_achieved(self) -> bool:
        return self.state == self.k - 1

    def step(self, action) -> StepResult:
        if self._t is None or self._t >= self.spec.horizon:
            raise ProtocolError("step() on finished or unreset episode")
        if int(action) == 1:
            self.state = min(self.state + 1, self.k - 1)
        self._t += 1
        achieved = self.task_achieved()
        return StepResult(self._obs(), float(achieved), achieved, self._t >= self.spec.horizon)

    def task_reward_from(self, obs, action) -> float:
        state = int(np.argmax(np.asarray(obs)))
        nxt = min(state + 1, self.k - 1) if int(action) == 1 else state
        return float(nxt == self.k - 1)

    def tabular_mdp(self):
        from .oracle import TabularMDP

        k = self.k
        P = np.zeros((k, 2, k))
        R = np.zeros((k, 2))
        for s in range(k):
            P[s, 0, s] = 1.0
            P[s, 1, min(s + 1, k - 1)] = 1.0
            R[s, 0] = float(s == k - 1)
            R[s, 1] = float(min(s + 1, k - 1) == k - 1)
        p0 = np.zeros(k)
        p0[0] = 1.0
        return TabularMDP(P=P, R=R, p0=p0, T=self.spec.horizon)


def make_env(env_id: str, horizon: int | None = None):
    """Construct an environment from its id string."""
    kwargs = {} if horizon is None else {"horizon": horizon}
    if env_id == "point-pusher":
        return PointPusher(**kwargs)
    if env_id == "grid-push":
        return GridPush(**kwargs)
    if env_id.startswith("chain-"):
        return ChainEnv(k=int(env_id.split("-", 1)[1]), **kwargs)
    raise ValueError(f"unknown environment id {env_id!r}")
