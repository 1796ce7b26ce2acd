"""Command-line interface.

Subcommands:

    expert train   train a shaped-reward expert and save the policy
    expert sample  sample demonstrations from a saved expert policy
    run            one training run from a JSON config (--seed/--out/--method/
                   --demos override the config file)
    sweep          run a method x demo-count x seed sweep and emit the table
    plot           render learning-curve and ELBO SVGs from run directories
    verify         re-derive a run directory's claims from its artifacts

Exit code 0 only if everything requested succeeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import expert as expert_mod
from . import harness, nn
from . import ppo as ppo_mod
from .envs import make_env
from .policy import Policy


def _load_config(path, overrides) -> harness.ExperimentConfig:
    doc = json.loads(Path(path).read_text()) if path else {}
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    return harness.ExperimentConfig.from_json(doc)


def cmd_expert_train(args) -> int:
    env_factory = lambda: make_env(args.env)  # noqa: E731
    shaped = expert_mod.ShapedRewardConfig(
        w_trap=args.w_trap if args.env == "grid-push" else 0.0
    )
    ppo_cfg = expert_mod.default_expert_ppo_config(args.env)
    policy, score = expert_mod.train_expert(
        env_factory,
        shaped,
        ppo_cfg,
        args.steps,
        seed=args.seed,
        score_cap=args.score_cap,
    )
    nn.save_params(policy.net, args.out)
    print(f"expert saved to {args.out}; best eval score {score:.2f}")
    return 0


def cmd_expert_sample(args) -> int:
    from .dataset import save_dataset

    env_factory = lambda: make_env(args.env)  # noqa: E731
    policy = Policy(nn.load_params(args.policy))
    dataset = expert_mod.sample_demonstrations(
        policy, env_factory, args.n_traj, seed=args.seed
    )
    save_dataset(dataset, args.out)
    print(
        f"{dataset.n_trajectories} trajectories saved to {args.out}; "
        f"mean score {dataset.mean_score:.2f}"
    )
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(
        args.config,
        {"method": args.method, "demo_path": args.demos, "out_dir": args.out},
    )
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    ok = True
    for seed in seeds:
        summary = harness.run_experiment(cfg, seed)
        print(json.dumps(summary, indent=2))
        ok = ok and (summary["isolation_audit"] in (None, True))
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.out is not None:
        doc.setdefault("base", {})["out_dir"] = args.out
    if args.demos is not None:
        doc.setdefault("base", {})["demo_path"] = args.demos
    sweep = harness.SweepConfig.from_json(doc)
    table = harness.compare_methods(sweep)
    table_txt = Path(sweep.base.out_dir) / "table.txt"
    print(table_txt.read_text())
    failed = [k for k, c in table["cells"].items() if c.get("failed")]
    if failed:
        print(f"failed cells: {failed}", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    metrics = sorted(Path(args.runs).glob("*/metrics.jsonl"))
    written = harness.emit_plots(metrics, args.out)
    for p in written:
        print(p)
    return 0 if written else 1


def cmd_verify(args) -> int:
    checks = harness.verify_run(args.run)
    print(json.dumps(checks, indent=2))
    return 0 if checks["ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlfusion")
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("expert", help="expert training and demo sampling")
    esub = pe.add_subparsers(dest="expert_command", required=True)
    pt = esub.add_parser("train")
    pt.add_argument("--env", default="grid-push")
    pt.add_argument("--steps", type=int, default=600_000)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--score-cap", type=float, default=None)
    pt.add_argument("--w-trap", type=float, default=1.0)
    pt.add_argument("--out", required=True)
    pt.set_defaults(fn=cmd_expert_train)
    ps = esub.add_parser("sample")
    ps.add_argument("--env", default="grid-push")
    ps.add_argument("--policy", required=True)
    ps.add_argument("--n-traj", type=int, default=15)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(fn=cmd_expert_sample)

    pr = sub.add_parser("run", help="one experiment run")
    pr.add_argument("--config", default=None)
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.add_argument("--method", default=None, choices=harness.METHODS)
    pr.add_argument("--demos", default=None)
    pr.set_defaults(fn=cmd_run)

    pw = sub.add_parser("sweep", help="method x demos x seed sweep")
    pw.add_argument("--config", default=None)
    pw.add_argument("--out", default=None)
    pw.add_argument("--demos", default=None)
    pw.set_defaults(fn=cmd_sweep)

    pp = sub.add_parser("plot", help="emit SVG plots from run directories")
    pp.add_argument("--runs", required=True)
    pp.add_argument("--out", required=True)
    pp.set_defaults(fn=cmd_plot)

    pv = sub.add_parser("verify", help="audit one run directory")
    pv.add_argument("--run", required=True)
    pv.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
