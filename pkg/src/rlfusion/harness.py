"""Experiment orchestration: run the five methods, sweep demonstration
counts, evaluate, and emit tables and plots.

Artifacts per run (all under the run directory):

    config.json     the exact resolved configuration
    metrics.jsonl   one JSON object per training iteration
    policy_best.bin best-scoring policy checkpoint (MLP1 format)
    rollout.npz     the final on-policy rollout (for independent ELBO audit)
    summary.json    final evaluation, ELBO estimate, audit results, timing

A ResultTable is persisted as JSON plus an aligned plain-text rendering in
which the best method per (env, demo-count) cell is underlined.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bc as bc_mod
from . import nn
from . import ppo as ppo_mod
from .bc import BcConfig
from .dataset import DemoDataset, load_dataset
from .envs import make_env
from .errors import ConfigurationError
from .policy import Policy
from .ppo import PpoConfig

METHODS = ("ppo", "bc", "bc+ppo", "gail", "trgail")
IMITATION_METHODS = ("bc", "bc+ppo", "gail", "trgail")

# default desk-scale step budgets per environment
DEFAULT_BUDGETS = {"point-pusher": 1_000_000, "grid-push": 200_000}


@dataclass
class ExperimentConfig:
    env_id: str = "grid-push"
    method: str = "trgail"
    n_demonstrations: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    total_steps: int | None = None  # None -> DEFAULT_BUDGETS[env_id]
    eval_episodes: int = 100
    eval_every: int = 10  # iterations between training evaluations
    train_eval_episodes: int = 20
    demo_path: str | None = None
    out_dir: str = "runs"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    bc: BcConfig = field(default_factory=BcConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        if self.budget <= 0:
            raise ConfigurationError("step budget must be positive")
        if self.method in IMITATION_METHODS and self.n_demonstrations < 1:
            raise ConfigurationError(
                f"method {self.method!r} requires n_demonstrations >= 1"
            )

    @property
    def budget(self) -> int:
        if self.total_steps is not None:
            return self.total_steps
        return DEFAULT_BUDGETS.get(self.env_id, 200_000)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "ppo" in doc and isinstance(doc["ppo"], dict):
            ppo_doc = dict(doc["ppo"])
            for key in ("hidden", "disc_hidden"):
                if ppo_doc.get(key) is not None:
                    ppo_doc[key] = tuple(ppo_doc[key])
            doc["ppo"] = PpoConfig(**ppo_doc)
        if "bc" in doc and isinstance(doc["bc"], dict):
            doc["bc"] = BcConfig(**doc["bc"])
        if "seeds" in doc:
            doc["seeds"] = tuple(doc["seeds"])
        return cls(**doc)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON-serializable: {type(x)}")


def _truncate_dataset(dataset: DemoDataset, n: int) -> DemoDataset:
    """First-n-trajectories view of a dataset, mean score recomputed."""
    if n > dataset.n_trajectories:
        raise ConfigurationError(
            f"requested {n} demonstrations, dataset has {dataset.n_trajectories}"
        )
    trajs = dataset.trajectories[:n]
    return DemoDataset(
        env_id=dataset.env_id,
        obs_dim=dataset.obs_dim,
        act_dim=dataset.act_dim,
        action_kind=dataset.action_kind,
        trajectories=trajs,
        mean_score=float(np.mean([t.task_rewards.sum() for t in trajs])),
    )


def _require_dataset(cfg: ExperimentConfig) -> DemoDataset | None:
    if cfg.method not in IMITATION_METHODS:
        return None
    if cfg.demo_path is None:
        raise ConfigurationError(f"method {cfg.method!r} requires demo_path")
    dataset = load_dataset(cfg.demo_path, expected_env_id=cfg.env_id)
    return _truncate_dataset(dataset, cfg.n_demonstrations)


def run_dir_for(cfg: ExperimentConfig, seed: int) -> Path:
    return Path(cfg.out_dir) / f"{cfg.env_id}-{cfg.method}-d{cfg.n_demonstrations}-s{seed}"


def isolation_audit(buf, method: str) -> bool:
    """Check no shaped-reward leakage: every stored reward decomposes as
    b + log d with b in {0, 1} (b = 0 for gail, log d = 0 for ppo)."""
    comps = buf.components
    task = comps.get("task", np.zeros_like(buf.rewards))
    imit = comps.get("imitation", np.zeros_like(buf.rewards))
    if method in ("ppo", "bc+ppo") and "imitation" in comps:
        return False
    if method == "gail" and "task" in comps:
        return False
    if not np.array_equal(task + imit, buf.rewards):
        return False
    if "task" in comps and not np.isin(task, (0.0, 1.0)).all():
        return False
    return bool((imit <= 0.0).all())


def save_rollout(buf, path) -> None:
    np.savez(
        path,
        obs=buf.obs,
        actions=buf.actions,
        log_probs=buf.log_probs,
        rewards=buf.rewards,
        dones=buf.dones,
        shape=np.asarray(buf.shape),
        **{f"component_{k}": v for k, v in buf.components.items()},
    )


def elbo_from_rollout(path) -> float | None:
    """Recompute the per-episode ELBO estimate from a persisted rollout,
    independently of the training loop: mean over completed episodes of
    sum_t (reward_t - log pi_t), accumulated per environment column."""
    with np.load(path) as z:
        rewards, log_probs, dones = z["rewards"], z["log_probs"], z["dones"]
        spe, n_envs = (int(v) for v in z["shape"])
    terms = (rewards - log_probs).reshape(spe, n_envs)
    dones = dones.reshape(spe, n_envs).astype(bool)
    acc = np.zeros(n_envs)
    sums = []
    for t in range(spe):
        acc += terms[t]
        for i in np.flatnonzero(dones[t]):
            sums.append(acc[i])
            acc[i] = 0.0
    return float(np.mean(sums)) if sums else None


def run_experiment(cfg: ExperimentConfig, seed: int) -> dict:
    """One (config, seed) training run; returns the summary dict."""
    t0 = time.perf_counter()
    dataset = _require_dataset(cfg)
    out = run_dir_for(cfg, seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps({"seed": seed, **cfg.to_json()}, indent=2, default=_json_default)
    )

    env_factory = lambda: make_env(cfg.env_id)  # noqa: E731
    best = {"score": -math.inf, "policy": None}

    metrics_path = out / "metrics.jsonl"
    mf = open(metrics_path, "w")

    def cb(iteration, agent, _disc, row, _buf):
        mf.write(json.dumps(row, default=_json_default) + "\n")
        if iteration % cfg.eval_every == 0 or iteration == 1:
            score = ppo_mod.evaluate(
                agent.policy, env_factory, cfg.train_eval_episodes, seed + 7_777 + iteration
            )
            if score > best["score"]:
                best["score"] = score
                best["policy"] = agent.policy.copy()
        return False

    budget = cfg.budget
    if cfg.method == "trgail":
        agent, _, metrics, buf = ppo_mod.train_trgail(
            env_factory, dataset, cfg.ppo, budget, seed, iteration_cb=cb
        )
    elif cfg.method == "gail":
        agent, _, metrics, buf = ppo_mod.train_trgail(
            env_factory, dataset, cfg.ppo, budget, seed,
            use_task=False, use_imitation=True, iteration_cb=cb,
        )
    elif cfg.method == "ppo":
        agent, _, metrics, buf = ppo_mod.train_trgail(
            env_factory, None, cfg.ppo, budget, seed,
            use_task=True, use_imitation=False, iteration_cb=cb,
        )
    elif cfg.method == "bc+ppo":
        agent, metrics, buf = bc_mod.bc_plus_rl(
            dataset, env_factory, cfg.bc, cfg.ppo, budget, seed, iteration_cb=cb
        )
    elif cfg.method == "bc":
        env = env_factory()
        agent = ppo_mod.build_agent(env, cfg.ppo, seed)
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[3])
        agent.policy = bc_mod.bc_train(dataset, agent.policy, cfg.bc, rng)
        metrics, buf = [], None
        best["policy"] = agent.policy.copy()
        best["score"] = ppo_mod.evaluate(
            agent.policy, env_factory, cfg.train_eval_episodes, seed + 7_777
        )
    mf.close()

    if best["policy"] is None:  # no eval checkpoint hit: fall back to final
        best["policy"] = agent.policy.copy()
        best["score"] = ppo_mod.evaluate(
            agent.policy, env_factory, cfg.train_eval_episodes, seed + 7_777
        )
    nn.save_params(best["policy"].net, out / "policy_best.bin")

    audit = None
    elbo_estimate = None
    if buf is not None:
        save_rollout(buf, out / "rollout.npz")
        audit = isolation_audit(buf, cfg.method)
        elbo_estimate = (
            float(np.mean(buf.episode_elbo_sums)) if buf.episode_elbo_sums else None
        )

    # "highest rated policy": best training-eval checkpoint, re-evaluated
    # on fresh seeds for the reported score
    final_eval = ppo_mod.evaluate(
        Policy(nn.load_params(out / "policy_best.bin")),
        env_factory,
        cfg.eval_episodes,
        seed + 424_242,
    )
    summary = {
        "env_id": cfg.env_id,
        "method": cfg.method,
        "n_demonstrations": cfg.n_demonstrations if dataset is not None else 0,
        "seed": seed,
        "env_steps": budget if cfg.method != "bc" else 0,
        "final_eval_score": final_eval,
        "best_train_eval_score": best["score"],
        "elbo_estimate": elbo_estimate,
        "isolation_audit": audit,
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default))
    return summary


def verify_run(run_dir) -> dict:
    """Re-derive everything checkable from a run directory's artifacts."""
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    checks = {}
    rollout = run_dir / "rollout.npz"
    if rollout.exists() and summary["elbo_estimate"] is not None:
        recomputed = elbo_from_rollout(rollout)
        checks["elbo_recompute"] = (
            recomputed is not None
            and abs(recomputed - summary["elbo_estimate"]) <= 1e-9
        )
        checks["elbo_recomputed_value"] = recomputed
    if summary["isolation_audit"] is not None:
        checks["isolation_audit"] = bool(summary["isolation_audit"])
    checks["checkpoint_loads"] = (run_dir / "policy_best.bin").exists()
    if checks["checkpoint_loads"]:
        nn.load_params(run_dir / "policy_best.bin")
    checks["ok"] = all(v for k, v in checks.items() if isinstance(v, bool))
    return checks


# -- sweeps and tables -------------------------------------------------------


@dataclass
class SweepConfig:
    base: ExperimentConfig
    methods: tuple[str, ...] = METHODS
    demo_counts: tuple[int, ...] = (1, 5, 10, 15)

    @classmethod
    def from_json(cls, doc: dict) -> "SweepConfig":
        doc = dict(doc)
        base = ExperimentConfig.from_json(doc.pop("base", {}))
        if "methods" in doc:
            doc["methods"] = tuple(doc["methods"])
        if "demo_counts" in doc:
            doc["demo_counts"] = tuple(doc["demo_counts"])
        return cls(base=base, **doc)


def compare_methods(sweep: SweepConfig) -> dict:
    """Run every (method, demo-count, seed) cell sequentially and emit a
    ResultTable (JSON + aligned text). Failures are recorded per cell and
    the table is still produced."""
    base = sweep.base
    rows = {}
    for method in sweep.methods:
        counts = sweep.demo_counts if method in IMITATION_METHODS else (0,)
        for n in counts:
            key = f"{base.env_id}/{method}/{n}"
            cell = {
                "env_id": base.env_id,
                "method": method,
                "n_demonstrations": n,
                "per_seed_scores": [],
                "env_steps": base.budget if method != "bc" else 0,
                "wall_time_s": 0.0,
                "failed": False,
            }
            cfg = dataclasses.replace(
                base, method=method, n_demonstrations=max(n, 1)
            )
            for seed in base.seeds:
                try:
                    summary = run_experiment(cfg, seed)
                    cell["per_seed_scores"].append(summary["final_eval_score"])
                    cell["wall_time_s"] += summary["wall_time_s"]
                except Exception as e:  # record and keep the table going
                    cell["failed"] = True
                    cell["error"] = f"{type(e).__name__}: {e}"
                    break
            if cell["per_seed_scores"] and not cell["failed"]:
                cell["mean_score"] = float(np.mean(cell["per_seed_scores"]))
                cell["median_score"] = float(np.median(cell["per_seed_scores"]))
            rows[key] = cell
    table = {"cells": rows, "seeds": list(base.seeds)}
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.json").write_text(json.dumps(table, indent=2, default=_json_default))
    (out / "table.txt").write_text(render_table(table))
    return table


def render_table(table: dict) -> str:
    """Aligned plain text; the best method per (env, demo-count) column is
    underlined (wrapped in combining-underline-free `_..._` markers)."""
    cells = table["cells"].values()
    envs = sorted({c["env_id"] for c in cells})
    lines = []
    for env in envs:
        env_cells = [c for c in cells if c["env_id"] == env]
        counts = sorted({c["n_demonstrations"] for c in env_cells})
        methods = []
        for c in env_cells:  # preserve first-seen method order
            if c["method"] not in methods:
                methods.append(c["method"])
        best = {}
        for n in counts:
            scored = [
                c for c in env_cells
                if c["n_demonstrations"] in (n, 0) and "mean_score" in c
            ]
            if scored:
                best[n] = max(scored, key=lambda c: c["mean_score"])["method"]
        header = ["method"] + [f"n={n}" for n in counts]
        body = []
        for m in methods:
            row = [m]
            for n in counts:
                match = [
                    c for c in env_cells
                    if c["method"] == m and c["n_demonstrations"] in ((0,) if m == "ppo" else (n,))
                ]
                if not match:
                    row.append("-")
                elif match[0].get("failed"):
                    row.append("FAILED")
                elif "mean_score" not in match[0]:
                    row.append("-")
                else:
                    text = f"{match[0]['mean_score']:.1f}"
                    if best.get(n) == m:
                        text = f"_{text}_"
                    row.append(text)
            body.append(row)
        widths = [
            max(len(r[i]) for r in [header] + body) for i in range(len(header))
        ]
        lines.append(f"== {env} (mean final score over seeds {table['seeds']}) ==")
        for r in [header] + body:
            lines.append("  ".join(s.rjust(w) for s, w in zip(r, widths)))
        lines.append("")
    return "\n".join(lines)


# -- plots --------------------------------------------------------------------


def emit_plots(metrics_files: list, out_dir) -> list[Path]:
    """Learning-curve SVGs per (env, demo-count): mean with a min/max band
    across seeds per method, plus an ELBO trace per trgail run."""
    import collections

    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not metrics_files:
        import warnings

        warnings.warn("no metrics files given; no plots emitted", stacklevel=2)
        return []

    runs = []
    for path in metrics_files:
        path = Path(path)
        cfg = json.loads((path.parent / "config.json").read_text())
        rows = [json.loads(line) for line in path.read_text().splitlines() if line]
        if not rows:
            import warnings

            warnings.warn(f"empty metrics file skipped: {path}", stacklevel=2)
            continue
        runs.append((cfg, rows, path.parent.name))

    written = []
    groups = collections.defaultdict(list)
    for cfg, rows, name in runs:
        n = cfg["n_demonstrations"] if cfg["method"] in IMITATION_METHODS else 0
        groups[(cfg["env_id"], n)].append((cfg["method"], cfg["seed"], rows))
    for (env, n), members in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        by_method = collections.defaultdict(list)
        for method, seed, rows in members:
            by_method[method].append(rows)
        for method, row_lists in sorted(by_method.items()):
            n_iters = min(len(r) for r in row_lists)
            steps = [r["env_steps"] for r in row_lists[0][:n_iters]]
            scores = np.array(
                [
                    [r["mean_episode_score"] or 0.0 for r in rows[:n_iters]]
                    for rows in row_lists
                ]
            )
            mean = scores.mean(axis=0)
            ax.plot(steps, mean, label=method)
            if len(row_lists) > 1:
                ax.fill_between(
                    steps, scores.min(axis=0), scores.max(axis=0), alpha=0.2
                )
        ax.set_xlabel("environment steps")
        ax.set_ylabel("episode score")
        ax.set_title(f"{env}, {n} demonstrations")
        ax.legend()
        path = out_dir / f"curves-{env}-d{n}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    for cfg, rows, name in runs:
        if cfg["method"] != "trgail":
            continue
        elbo = [(r["env_steps"], r["elbo_estimate"]) for r in rows if r["elbo_estimate"] is not None]
        if not elbo:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([e[0] for e in elbo], [e[1] for e in elbo])
        ax.set_xlabel("environment steps")
        ax.set_ylabel("ELBO estimate")
        ax.set_title(f"ELBO trace: {name}")
        path = out_dir / f"elbo-{name}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
