"""End-to-end desk run: train on the small map, score against baselines,
then sweep the team size with the greedy baseline.

Usage: python scripts/run_desk_pipeline.py [out_dir] [seed]
"""
import sys

import numpy as np

from gridpatrol import (
    GreedyUncertaintyPolicy,
    QPolicy,
    RandomPolicy,
    emit_artifacts,
    evaluate,
    load_config,
    sweep,
    train,
)


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/desk"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    cfg = load_config("configs/desk10.toml")

    print("== training ==")
    result = train(cfg.make_env(seed), cfg.arch, cfg.train, seed=seed, out_dir=out)
    print(f"final mean reward {result.stats[-1].mean_reward:.3f}")

    print("== held-out evaluation ==")
    policies = {
        "trained": lambda s: QPolicy(result.params),
        "greedy": lambda s: GreedyUncertaintyPolicy(),
        "random": lambda s: RandomPolicy(s),
    }
    for name, make in policies.items():
        us, rates = [], []
        for s in cfg.eval_seeds():
            res = evaluate(cfg.make_env(s), make(s), cfg.eval.episodes, cfg.eval.steps)
            us.append(res.mean_u)
            rates.append(res.collision_rate)
        print(f"{name:8s} u_raw={np.mean(us):.4f}+-{np.std(us):.4f} "
              f"collision_rate={np.mean(rates):.6f}")

    print("== team-size sweep (greedy baseline) ==")
    table = sweep(
        lambda seed, **pt: cfg.make_env(seed, **pt),
        [{"n_agents": n} for n in (1, 2, 4)],
        lambda env, s: GreedyUncertaintyPolicy(),
        seeds=cfg.eval_seeds(),
        episodes=cfg.eval.episodes,
        steps=cfg.eval.steps,
    )
    for key, (mean, std) in table.point_stats().items():
        print(f"n_agents={key[0]} u_raw={mean:.4f}+-{std:.4f}")
    for path in emit_artifacts(out, "sweep_n_agents_greedy", table):
        print("wrote", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
