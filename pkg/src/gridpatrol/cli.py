"""Command-line front end.

Subcommands: ``train`` (run the learner and write logs + checkpoints),
``eval`` (score a policy over held-out seeds), ``sweep`` (vary one design
parameter with shared seeds), ``gradcheck`` (finite-difference audit of the
network gradients), and ``render-data`` (dump the plain-text field and
visit-log formats for inspection).

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
3 incompatible or corrupt checkpoint.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evalkit
from .configs import ExperimentConfig, load_config
from .errors import CheckpointError, ConfigError, GridPatrolError
from .qnet import NetArch, QParams, backward, forward_cached, init_params, load_checkpoint
from .trainer import train
from .uncertainty import (
    VisitLog,
    field_from_events,
    field_to_csv,
    serialize_visit_log,
    staleness_field,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_COMPAT = 3

OUT_ROOT_VAR = "GRIDPATROL_OUT"  # default root for run artifacts


def _out_dir(args, leaf: str) -> str:
    if args.out:
        return args.out
    return os.path.join(os.environ.get(OUT_ROOT_VAR, "runs"), leaf)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridpatrol",
                                description="road-network monitoring experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="TOML experiment config")
            sp.add_argument("--override", action="append", default=[],
                            metavar="KEY=VAL", help="config override, repeatable")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUT_ROOT_VAR} or ./runs)")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("train", help="train the shared Q-network")
    common(sp)

    sp = sub.add_parser("eval", help="evaluate a policy over held-out seeds")
    common(sp)
    sp.add_argument("--policy", choices=["trained", "random", "greedy"],
                    default="trained")
    sp.add_argument("--checkpoint", default=None)

    sp = sub.add_parser("sweep", help="vary one parameter with shared seeds")
    common(sp)
    sp.add_argument("--param", choices=["n_agents", "sync_period"], required=True)
    sp.add_argument("--values", required=True, help="comma-separated integers")
    sp.add_argument("--policy", choices=["trained", "random", "greedy"],
                    default="greedy")
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--seeds", type=int, default=None,
                    help="number of seeds (default: eval.n_seeds)")

    sp = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(sp, needs_config=False)
    sp.add_argument("--draws", type=int, default=100)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--size", type=int, default=10, help="input map size")

    sp = sub.add_parser("render-data", help="dump field and visit-log text formats")
    common(sp)
    sp.add_argument("--steps", type=int, default=50)
    return p


def _make_policy(name: str, cfg: ExperimentConfig, checkpoint: str | None, seed: int):
    if name == "random":
        return evalkit.RandomPolicy(seed)
    if name == "greedy":
        return evalkit.GreedyUncertaintyPolicy()
    if checkpoint is None:
        raise ConfigError("--policy trained requires --checkpoint")
    params, _ = load_checkpoint(checkpoint, expected_arch=cfg.arch)
    return evalkit.QPolicy(params)


# -- subcommands --------------------------------------------------------------


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.override)
    if args.workers != 1:
        print("note: train runs single-process; --workers ignored", file=sys.stderr)
    out = _out_dir(args, "train")
    env = cfg.make_env(args.seed)
    every = max(1, cfg.train.episodes // 10)

    def progress(ep, stats):
        if (ep + 1) % every == 0 or ep == 0:
            print(f"episode {ep + 1}/{cfg.train.episodes} "
                  f"eps={stats.epsilon:.3f} mean_reward={stats.mean_reward:.3f} "
                  f"mean_u={stats.mean_u:.3f} collisions={stats.collisions}")

    result = train(env, cfg.arch, cfg.train, seed=args.seed, out_dir=out,
                   on_episode=progress)
    print(f"wrote {result.log_path}")
    print(f"wrote {result.final_checkpoint}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = load_config(args.config, args.override)
    rows = []
    for seed in cfg.eval_seeds():
        env = cfg.make_env(seed)
        policy = _make_policy(args.policy, cfg, args.checkpoint, seed)
        res = evalkit.evaluate(env, policy, episodes=cfg.eval.episodes,
                               steps=cfg.eval.steps)
        rows.append((seed, res.mean_u, float(np.mean(res.u_norm)), res.collision_rate))
    u = np.array([r[1] for r in rows])
    coll = np.array([r[3] for r in rows])
    print(f"policy={args.policy} seeds={len(rows)} "
          f"u_raw={u.mean():.4f}+-{u.std():.4f} "
          f"u_norm={np.mean([r[2] for r in rows]):.6f} "
          f"collision_rate={coll.mean():.6f}")
    out = _out_dir(args, "eval")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"eval_{args.policy}.csv")
    with open(path, "w") as fh:
        fh.write("seed,u_raw,u_norm,collision_rate\n")
        for seed, u_raw, u_norm, rate in rows:
            fh.write(f"{seed},{u_raw!r},{u_norm!r},{rate!r}\n")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.override)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values {args.values!r} must be comma-separated integers")
    if not values:
        raise ConfigError("--values is empty")
    n_seeds = args.seeds if args.seeds is not None else cfg.eval.n_seeds
    seeds = [cfg.eval.seed_base + i for i in range(n_seeds)]
    if args.workers != 1:
        print("note: sweep runs single-process; --workers ignored", file=sys.stderr)

    def make_env(seed, **point):
        return cfg.make_env(seed, **point)

    def make_policy(env, seed):
        return _make_policy(args.policy, cfg, args.checkpoint, seed)

    table = evalkit.sweep(
        make_env, [{args.param: v} for v in values], make_policy,
        seeds=seeds, episodes=cfg.eval.episodes, steps=cfg.eval.steps,
    )
    stats = table.point_stats("u_raw")
    for key, (mean, std) in stats.items():
        print(f"{args.param}={key[0]} u_raw={mean:.4f}+-{std:.4f}")
    means = [mean for mean, _ in stats.values()]
    if len(means) > 1:
        if all(a >= b for a, b in zip(means, means[1:])):
            trend = "non-increasing"
        elif all(a <= b for a, b in zip(means, means[1:])):
            trend = "non-decreasing"
        else:
            trend = "not monotone"
        print(f"trend: mean u_raw is {trend} across {args.param} values")
    out = _out_dir(args, "sweep")
    paths = evalkit.emit_artifacts(out, f"sweep_{args.param}_{args.policy}", table)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _gradcheck(seed: int, draws: int, tol: float, size: int) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if size < 5:
        raise ConfigError("--size must be at least 5")
    rng = np.random.default_rng(seed)
    arch = NetArch(in_size=size, conv=((8, 3, 1), (16, 3, 2)), fc_hidden=32)
    params = init_params(arch, rng, dtype=np.float64)
    names = list(params.arrays)
    worst = 0.0
    h = 1e-6
    for _ in range(draws):
        for _ in range(100):  # keep clear of ReLU kinks so the FD slope is valid
            x = rng.uniform(0.1, 1.0, size=(arch.in_channels, size, size))
            _, cache = forward_cached(params, x)
            margin = min(float(np.min(np.abs(p))) for p in cache["pre"])
            margin = min(margin, float(np.min(np.abs(cache["fc_pre"]))))
            if margin > 1e-4:
                break
        w = rng.normal(size=arch.n_actions)
        q, cache = forward_cached(params, x)
        grads = backward(params, cache, w)
        name = names[int(rng.integers(len(names)))]
        arr = params.arrays[name]
        idx = np.unravel_index(int(rng.integers(arr.size)), arr.shape)
        analytic = float(grads[name][idx])
        orig = arr[idx]
        arr[idx] = orig + h
        f_plus = float(forward_cached(params, x)[0] @ w)
        arr[idx] = orig - h
        f_minus = float(forward_cached(params, x)[0] @ w)
        arr[idx] = orig
        fd = (f_plus - f_minus) / (2 * h)
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
        worst = max(worst, rel)
    return worst


def _cmd_gradcheck(args) -> int:
    worst = _gradcheck(args.seed, args.draws, args.tol, args.size)
    ok = worst <= args.tol
    print(f"gradcheck draws={args.draws} max_rel_err={worst:.3e} "
          f"tol={args.tol:.1e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_render_data(args) -> int:
    cfg = load_config(args.config, args.override)
    out = _out_dir(args, "render")
    os.makedirs(out, exist_ok=True)
    env = cfg.make_env(args.seed)
    trace = evalkit.run_episode(env, evalkit.RandomPolicy(args.seed),
                                args.steps, record_trace=True)
    if trace.init_events is not None:
        u0 = field_from_events(trace.init_events, env.alpha).u
    else:
        u0 = staleness_field(env.alpha, 0.0, trace.init_tau)
    with open(os.path.join(out, "field_initial.csv"), "w") as fh:
        fh.write(field_to_csv(u0))
    with open(os.path.join(out, "field_final.csv"), "w") as fh:
        fh.write(field_to_csv(env.true_field().u))
    logs = [VisitLog(capacity=args.steps) for _ in range(env.n_agents)]
    for t, cells in enumerate(trace.arrivals, start=1):
        for i, cell in enumerate(cells):
            logs[i].add(cell, float(t))
    for i, log in enumerate(logs):
        with open(os.path.join(out, f"visits_agent{i}.log"), "w") as fh:
            fh.write(serialize_visit_log(log, env.grid.size))
    with open(os.path.join(out, "totals.csv"), "w") as fh:
        fh.write("step,total_u\n")
        for t, v in enumerate(trace.totals, start=1):
            fh.write(f"{t},{v!r}\n")
    evalkit.emit_artifacts(out, "render", traces=[trace])
    print(f"wrote {out}/field_initial.csv, field_final.csv, "
          f"{env.n_agents} visit logs, totals.csv, trace_{trace.seed}.csv")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "sweep": _cmd_sweep,
        "gradcheck": _cmd_gradcheck,
        "render-data": _cmd_render_data,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (GridPatrolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
