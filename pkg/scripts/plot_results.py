"""Plot a training log and any sweep tables found next to it.

Usage: python scripts/plot_results.py <run_dir>

matplotlib is imported lazily so the rest of the package has no plotting
dependency.
"""
import csv
import glob
import os
import sys


def main() -> int:
    if len(sys.argv) != 2:
        print(__doc__)
        return 2
    run_dir = sys.argv[1]
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    log_path = os.path.join(run_dir, "train_log.csv")
    if os.path.exists(log_path):
        with open(log_path) as fh:
            rows = list(csv.DictReader(fh))
        eps = [int(r["episode"]) for r in rows]
        fig, axes = plt.subplots(1, 3, figsize=(13, 3.5))
        axes[0].plot(eps, [float(r["mean_reward"]) for r in rows])
        axes[0].set(title="mean reward", xlabel="episode")
        axes[1].plot(eps, [float(r["mean_total_uncertainty"]) for r in rows])
        axes[1].set(title="mean total uncertainty", xlabel="episode")
        axes[2].plot(eps, [int(r["collisions"]) for r in rows])
        axes[2].set(title="collisions", xlabel="episode")
        fig.tight_layout()
        out = os.path.join(run_dir, "training.png")
        fig.savefig(out, dpi=120)
        print("wrote", out)

    for path in sorted(glob.glob(os.path.join(run_dir, "sweep_*_seeds.csv"))):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        param = [c for c in rows[0] if c not in
                 ("seed", "u_raw", "u_norm", "collision_rate")][0]
        by_value: dict[float, list[float]] = {}
        for r in rows:
            by_value.setdefault(float(r[param]), []).append(float(r["u_raw"]))
        xs = sorted(by_value)
        means = [sum(by_value[x]) / len(by_value[x]) for x in xs]
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.plot(xs, means, marker="o")
        ax.set(title=os.path.basename(path), xlabel=param,
               ylabel="avg total uncertainty")
        fig.tight_layout()
        out = path.replace(".csv", ".png")
        fig.savefig(out, dpi=120)
        print("wrote", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
