"""Max-ent PPO over composite optimality rewards.

On-policy: every iteration collects one rollout under the current policy
(rewards scored by the channel set with a discriminator snapshot taken at
rollout start), optionally trains the discriminator on that rollout, then
runs clipped-surrogate policy/value updates with an entropy bonus. The
buffer doubles as the discriminator's agent batch and is discarded after
the update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import gail as gail_mod
from . import nn
from .channels import ChannelSet, reward_components
from .policy import Policy, value_batch
from .optim import AdamState, adam_step


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coef: float = 0.05
    epochs: int = 10
    minibatch_size: int = 256
    rollout_steps: int = 2048
    lr_policy: float = 3e-4
    lr_value: float = 3e-4
    lr_disc: float = 3e-4
    disc_steps: int = 5
    disc_minibatch: int = 256
    hidden: tuple = (64, 64)
    disc_hidden: tuple | None = None  # None -> same as `hidden`
    n_envs: int = 8
    normalize_adv: bool = True
    init_log_std: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma in (0,1], gae_lambda in [0,1]")
        if self.rollout_steps % self.minibatch_size != 0:
            raise ValueError("rollout_steps must be a multiple of minibatch_size")
        if self.rollout_steps % self.n_envs != 0:
            raise ValueError("rollout_steps must be a multiple of n_envs")


@dataclass
class RolloutBuffer:
    """Flat rows are (time, env)-major; `shape` keeps the time-major view
    (steps_per_env, n_envs) needed by the advantage recursion."""

    obs: np.ndarray  # (n, obs_dim)
    actions: np.ndarray  # (n, act_dim) or (n,)
    log_probs: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,) composite
    components: dict[str, np.ndarray]  # per-channel rewards, (n,) each
    values: np.ndarray  # (n,)
    dones: np.ndarray  # (n,) bool
    time_frac: np.ndarray  # (n,) elapsed fraction of the horizon, critic input
    last_values: np.ndarray  # (n_envs,) bootstrap for the step after the rollout
    shape: tuple  # (steps_per_env, n_envs)
    advantages: np.ndarray = None
    returns: np.ndarray = None
    episode_scores: list = field(default_factory=list)
    episode_elbo_sums: list = field(default_factory=list)  # sum_t (r - log pi)

    def __len__(self):
        return len(self.rewards)


class EnvPool:
    """Fixed set of environments stepped in lockstep, auto-resetting.

    Per-env reset generators are spawned deterministically from the seed,
    so results do not depend on pool composition order.
    """

    def __init__(self, env_factory, n_envs: int, seed: int):
        self.envs = [env_factory() for _ in range(n_envs)]
        seqs = np.random.SeedSequence(seed).spawn(n_envs)
        self.rngs = [np.random.default_rng(s) for s in seqs]
        self.obs = np.stack(
            [env.reset(rng) for env, rng in zip(self.envs, self.rngs)]
        )
        self.scores = np.zeros(n_envs)
        self.steps_in_episode = np.zeros(n_envs)
        self.horizon = self.envs[0].spec.horizon

    def time_frac(self) -> np.ndarray:
        """Elapsed fraction of the horizon per env (0 at episode start)."""
        return self.steps_in_episode / self.horizon

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def step(self, actions):
        """Step every env; returns (next_obs, achieved flags, done flags).
        Done envs are reset in place (next_obs is the fresh episode's start)
        after their final score is recorded."""
        achieved = np.zeros(self.n_envs, dtype=bool)
        dones = np.zeros(self.n_envs, dtype=bool)
        finished_scores = [None] * self.n_envs
        for i, env in enumerate(self.envs):
            res = env.step(actions[i])
            achieved[i] = res.achieved
            dones[i] = res.done
            self.scores[i] += res.achieved
            self.steps_in_episode[i] += 1
            if res.done:
                finished_scores[i] = self.scores[i]
                self.scores[i] = 0.0
                self.steps_in_episode[i] = 0
                self.obs[i] = env.reset(self.rngs[i])
            else:
                self.obs[i] = res.next_obs
        return self.obs.copy(), achieved, dones, finished_scores


def value_inputs(obs: np.ndarray, time_frac: np.ndarray) -> np.ndarray:
    """Critic input rows: observation plus elapsed horizon fraction."""
    return np.concatenate(
        [obs, np.asarray(time_frac, dtype=np.float64)[:, None]], axis=1
    )


def collect_rollout(
    agent: "AgentState",
    pool: EnvPool,
    channels: ChannelSet,
    n_steps: int,
    rng: np.random.Generator,
) -> RolloutBuffer:
    """Gather exactly n_steps on-policy transitions across the pool.

    The critic sees (obs, elapsed horizon fraction): with a finite horizon
    the value of a state depends on how many steps remain, and per-step
    reward offsets (e.g. the imitation log-reward) would otherwise be
    unfittable time-dependent residue that drowns the advantages.
    """
    spe = n_steps // pool.n_envs
    n_envs = pool.n_envs
    obs_l, act_l, logp_l, val_l, done_l, tf_l = [], [], [], [], [], []
    comp_l: dict[str, list] = {c.name: [] for c in channels.channels}
    rew_l = []
    elbo_acc = np.zeros(n_envs)
    scores, elbo_sums = [], []
    for _ in range(spe):
        obs = pool.obs.copy()
        tf = pool.time_frac()
        actions, logp = agent.policy.act_batch(obs, rng)
        values = agent.predict_values(value_inputs(obs, tf))
        comps = reward_components(channels, obs, actions)
        reward = None
        for c in channels.channels:
            term = comps[c.name]
            reward = term if reward is None else reward + term
        _, achieved, dones, finished = pool.step(actions)
        elbo_acc += reward - logp
        for i, sc in enumerate(finished):
            if sc is not None:
                scores.append(float(sc))
                elbo_sums.append(float(elbo_acc[i]))
                elbo_acc[i] = 0.0
        obs_l.append(obs)
        act_l.append(actions)
        logp_l.append(logp)
        val_l.append(values)
        done_l.append(dones)
        tf_l.append(tf)
        rew_l.append(reward)
        for name, v in comps.items():
            comp_l[name].append(v)
    last_values = agent.predict_values(value_inputs(pool.obs, pool.time_frac()))

    def flat(x):
        a = np.stack(x)
        return a.reshape(spe * n_envs, *a.shape[2:])

    return RolloutBuffer(
        obs=flat(obs_l),
        actions=flat(act_l),
        log_probs=flat(logp_l),
        rewards=flat(rew_l),
        components={k: flat(v) for k, v in comp_l.items()},
        values=flat(val_l),
        dones=flat(done_l),
        time_frac=flat(tf_l),
        last_values=last_values,
        shape=(spe, n_envs),
        episode_scores=scores,
        episode_elbo_sums=elbo_sums,
    )


def compute_gae(
    buf: RolloutBuffer, gamma: float, lam: float, normalize: bool = True
) -> RolloutBuffer:
    """Generalized advantage estimation; fills advantages and returns.

    delta_t = r_t + gamma V(s_{t+1})(1-done_t) - V(s_t);
    adv_t = delta_t + gamma lam adv_{t+1} (1-done_t); returns = adv + V.
    Advantages are then normalized to mean 0 / std 1 unless they are
    (numerically) all equal.
    """
    spe, n_envs = buf.shape
    values = buf.values.reshape(spe, n_envs)
    rewards = buf.rewards.reshape(spe, n_envs)
    dones = buf.dones.reshape(spe, n_envs)
    adv = np.zeros((spe, n_envs))
    next_adv = np.zeros(n_envs)
    next_values = buf.last_values
    for t in range(spe - 1, -1, -1):
        nonterminal = 1.0 - dones[t].astype(np.float64)
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        next_adv = delta + gamma * lam * next_adv * nonterminal
        adv[t] = next_adv
        next_values = values[t]
    returns = adv + values
    adv = adv.reshape(-1)
    if normalize:
        std = adv.std()
        if std >= 1e-8:
            adv = (adv - adv.mean()) / std
    buf.advantages = adv
    buf.returns = returns.reshape(-1)
    return buf


def gae_reference(rewards, values, dones, last_value, gamma, lam):
    """Single-env GAE on 1-D arrays (used as the hand-check form)."""
    n = len(rewards)
    adv = np.zeros(n)
    next_adv = 0.0
    for t in range(n - 1, -1, -1):
        nv = last_value if t == n - 1 else values[t + 1]
        nonterminal = 1.0 - float(dones[t])
        delta = rewards[t] + gamma * nv * nonterminal - values[t]
        next_adv = delta + gamma * lam * next_adv * nonterminal
        adv[t] = next_adv
    return adv, adv + values


@dataclass
class ValueNormalizer:
    """Running statistics of the return targets.

    The critic is trained on standardized returns and its predictions are
    de-standardized on the way out. Without this, a tanh critic facing
    targets with a large common offset (every per-step log-emission shifts
    returns by offset * horizon) saturates its hidden layer to produce the
    offset and collapses to a constant predictor.
    """

    count: float = 0.0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def std(self) -> float:
        if self.count < 2.0:
            return 1.0
        return max(float(np.sqrt(self.m2 / self.count)), 1e-6)

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=np.float64)
        n = float(batch.size)
        if n == 0:
            return
        b_mean = float(batch.mean())
        b_m2 = float(((batch - b_mean) ** 2).sum())
        delta = b_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        self.m2 += b_m2 + delta**2 * self.count * n / total
        self.count = total

    def normalize(self, y: np.ndarray) -> np.ndarray:
        return (y - self.mean) / self.std

    def denormalize(self, v: np.ndarray) -> np.ndarray:
        return v * self.std + self.mean


@dataclass
class AgentState:
    policy: Policy
    value_net: nn.MlpParams
    policy_opt: AdamState
    value_opt: AdamState
    value_norm: ValueNormalizer = field(default_factory=ValueNormalizer)

    def predict_values(self, value_in: np.ndarray) -> np.ndarray:
        """De-standardized critic predictions for (obs, time-fraction) rows."""
        return self.value_norm.denormalize(value_batch(self.value_net, value_in))


def make_agent_state(policy: Policy, value_net: nn.MlpParams, cfg: PpoConfig):
    return AgentState(
        policy=policy,
        value_net=value_net,
        policy_opt=AdamState(dim=nn.flatten(policy.net).size, learning_rate=cfg.lr_policy),
        value_opt=AdamState(dim=nn.flatten(value_net).size, learning_rate=cfg.lr_value),
    )


def ppo_update(
    agent: AgentState, buf: RolloutBuffer, cfg: PpoConfig, rng: np.random.Generator
) -> dict:
    """Clipped-surrogate updates with entropy bonus; mutates `agent`."""
    n = len(buf)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    n_mb = 0
    first = True
    agent.value_norm.update(buf.returns)
    norm_returns = agent.value_norm.normalize(buf.returns)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            obs, acts = buf.obs[idx], buf.actions[idx]
            adv, old_logp = buf.advantages[idx], buf.log_probs[idx]
            rets = norm_returns[idx]
            v_in = value_inputs(obs, buf.time_frac[idx])

            def policy_loss(_params, nodes):
                logp, ent = agent.policy.log_prob_entropy_t(nodes, obs, acts)
                ratio = ad.exp(logp - old_logp)
                if first:
                    assert np.abs(ratio.value - 1.0).max() < 1e-12, "off-policy data"
                surr = ad.minimum(
                    ratio * adv,
                    ad.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * adv,
                )
                # the clipped surrogate can never exceed the clipped branch
                clipped = np.clip(ratio.value, 1.0 - cfg.clip_ratio,
                                  1.0 + cfg.clip_ratio) * adv
                assert np.all(surr.value <= clipped + 1e-12)
                return -surr.mean() - cfg.entropy_coef * ent

            ploss, pgrad = nn.value_and_grad(policy_loss, agent.policy.net)
            flat = nn.flatten(agent.policy.net)
            agent.policy_opt, flat = adam_step(agent.policy_opt, flat, pgrad)
            agent.policy.net = nn.unflatten(agent.policy.net, flat)

            def value_loss(_params, nodes):
                v = nn.mlp_forward_tape(agent.value_net, v_in, nodes)
                err = v.reshape(-1) - rets
                return (err * err).mean()

            vloss, vgrad = nn.value_and_grad(value_loss, agent.value_net)
            vflat = nn.flatten(agent.value_net)
            agent.value_opt, vflat = adam_step(agent.value_opt, vflat, vgrad)
            agent.value_net = nn.unflatten(agent.value_net, vflat)

            stats["policy_loss"] += ploss
            stats["value_loss"] += vloss
            n_mb += 1
            first = False
    stats = {k: v / max(n_mb, 1) for k, v in stats.items()}
    stats["entropy"] = agent.policy.mean_entropy(buf.obs)
    return stats


def sample_batch(obs, actions, size, rng):
    idx = rng.integers(len(obs), size=size)
    return obs[idx], actions[idx]


def train(
    env_factory,
    agent: AgentState,
    channel_builder,
    total_steps: int,
    cfg: PpoConfig,
    seed: int,
    disc: gail_mod.Discriminator | None = None,
    expert_pairs: tuple[np.ndarray, np.ndarray] | None = None,
    iteration_cb=None,
):
    """Generic training loop.

    `channel_builder(disc_snapshot, env)` returns the ChannelSet used to
    score rewards this iteration; the snapshot is taken at rollout start so
    rewards are stationary within one update. If `disc` is given, it is
    trained on (latest rollout, expert_pairs) after each rollout.

    Returns (agent, disc, metrics rows, final buffer).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    pool = EnvPool(env_factory, cfg.n_envs, seed + 1_000_003)
    metrics = []
    env_steps = 0
    iteration = 0
    buf = None
    n_iters = int(np.ceil(total_steps / cfg.rollout_steps))
    while iteration < n_iters:
        disc_snapshot = disc.copy() if disc is not None else None
        channels = channel_builder(disc_snapshot, pool.envs[0])
        buf = collect_rollout(agent, pool, channels, cfg.rollout_steps, rng)
        compute_gae(buf, cfg.gamma, cfg.gae_lambda, cfg.normalize_adv)
        env_steps += cfg.rollout_steps

        disc_loss = None
        d_agent = d_expert = None
        if disc is not None:
            for _ in range(cfg.disc_steps):
                agent_b = sample_batch(buf.obs, buf.actions, cfg.disc_minibatch, rng)
                expert_b = sample_batch(*expert_pairs, cfg.disc_minibatch, rng)
                disc = gail_mod.discriminator_update(disc, agent_b, expert_b, 1)
            disc_loss = gail_mod.discriminator_loss(disc, agent_b, expert_b)
            d_agent = float(gail_mod.d_values(disc, *agent_b).mean())
            d_expert = float(gail_mod.d_values(disc, *expert_b).mean())

        stats = ppo_update(agent, buf, cfg, rng)
        iteration += 1
        row = {
            "iteration": iteration,
            "env_steps": env_steps,
            "mean_episode_score": (
                float(np.mean(buf.episode_scores)) if buf.episode_scores else None
            ),
            "mean_composite_reward": float(buf.rewards.mean()),
            "elbo_estimate": (
                float(np.mean(buf.episode_elbo_sums)) if buf.episode_elbo_sums else None
            ),
            "d_expert_mean": d_expert,
            "d_agent_mean": d_agent,
            "policy_entropy": stats["entropy"],
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "disc_loss": disc_loss,
        }
        metrics.append(row)
        if iteration_cb is not None and iteration_cb(iteration, agent, disc, row, buf):
            break  # callback requested an early stop
    return agent, disc, metrics, buf


def build_agent(env, cfg: PpoConfig, seed: int) -> AgentState:
    """Fresh policy/value networks sized for the environment."""
    from .policy import make_categorical_policy, make_gaussian_policy, make_value_net

    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    sp = env.spec
    if sp.action_space.kind == "discrete":
        policy = make_categorical_policy(sp.obs_dim, sp.action_space.n, cfg.hidden, rng)
    else:
        policy = make_gaussian_policy(
            sp.obs_dim, sp.action_space.dim, cfg.hidden, rng, cfg.init_log_std
        )
    # +1 input: the critic also sees the elapsed horizon fraction
    value_net = make_value_net(sp.obs_dim + 1, cfg.hidden, rng)
    return make_agent_state(policy, value_net, cfg)


def train_trgail(
    env_factory,
    demo_dataset,
    cfg: PpoConfig,
    total_steps: int,
    seed: int,
    use_task: bool = True,
    use_imitation: bool = True,
    task_weight: float = 1.0,
    imitation_weight: float = 1.0,
    agent: AgentState | None = None,
    iteration_cb=None,
):
    """Adversarial-imitation training on the composite task + imitation
    reward. With a single channel enabled this degenerates to the plain
    imitation baseline (task off) or sparse-reward max-ent PPO (imitation
    off, no discriminator).

    Returns (agent, disc, metrics rows, final buffer).
    """
    from .channels import ChannelSet, env_task_channel, make_imitation_channel

    if not use_task and not use_imitation:
        raise ValueError("at least one channel must be enabled")
    env = env_factory()
    if agent is None:
        agent = build_agent(env, cfg, seed)
    disc = None
    expert_pairs = None
    if use_imitation:
        if demo_dataset is None:
            raise ValueError("imitation channel requires a demo dataset")
        sp = env.spec
        n_actions = sp.action_space.n if sp.action_space.kind == "discrete" else 0
        disc_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
        disc = gail_mod.make_discriminator(
            sp.obs_dim,
            0 if n_actions else sp.action_space.dim,
            cfg.disc_hidden if cfg.disc_hidden is not None else cfg.hidden,
            disc_rng,
            expert_data=demo_dataset,
            n_actions=n_actions,
            learning_rate=cfg.lr_disc,
        )
        expert_pairs = demo_dataset.state_action_pairs()

    def channel_builder(disc_snapshot, env_inst):
        chans = []
        if use_task:
            chans.append(env_task_channel(env_inst, task_weight))
        if use_imitation:
            chans.append(
                make_imitation_channel(
                    lambda o, a: gail_mod.imitation_log_reward(disc_snapshot, o, a),
                    imitation_weight,
                )
            )
        return ChannelSet(tuple(chans))

    return train(
        env_factory,
        agent,
        channel_builder,
        total_steps,
        cfg,
        seed,
        disc=disc,
        expert_pairs=expert_pairs,
        iteration_cb=iteration_cb,
    )


def evaluate(policy: Policy, env_factory, n_episodes: int, seed: int) -> float:
    """Mean episode score of the stochastic policy over fresh episodes."""
    env = env_factory()
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_episodes):
        obs = env.reset(rng)
        score = 0
        done = False
        while not done:
            action, _ = policy.act_batch(obs[None, :], rng)
            res = env.step(action[0])
            obs = res.next_obs
            score += res.achieved
            done = res.done
        total += score
    return total / n_episodes
