"""Policy evaluation: baselines, episode traces, and parameter sweeps.

The headline metric is the time-averaged total true uncertainty over an
episode: ``(1/T) * sum_t sum_cells u(cell, t)``, reported both raw and
divided by the number of road cells. Episode traces carry the initial clock
and every per-step arrival, enough to recompute the metric from scratch;
full traces add per-step movement, reward, and local-estimate records.

Sweeps reuse the same seed list at every design point, and the environment
draws event arrivals from a stream that does not depend on the agent count,
so points differ only in the factor under study.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .env import MonitorEnv
from .errors import EmptyTrace, InvariantViolation
from .gridworld import ACTION_DELTAS, Cell, N_ACTIONS, Action
from .qnet import QParams, forward


@dataclass
class EpisodeTrace:
    """Enough of one episode to replay its uncertainty bookkeeping exactly.

    ``totals`` is the true per-step team metric; the remaining per-step
    records (positions, actions, rewards, collision flags, and each agent's
    local uncertainty total) are filled only when a full trace is requested.
    """

    scenario: str
    alpha: float
    size: int
    n_roads: int
    n_agents: int
    steps: int
    init_tau: np.ndarray
    arrivals: list[list[Cell]]  # one entry per step, agent order within
    totals: list[float]  # true total uncertainty after each step
    collisions: int
    init_events: np.ndarray | None = None
    poses: list[list[Cell]] = field(default_factory=list)  # spawn row + one per step
    actions: list[list[int]] = field(default_factory=list)
    rewards: list[list[float]] = field(default_factory=list)
    collided: list[list[bool]] = field(default_factory=list)
    local_totals: list[list[float]] = field(default_factory=list)
    seed: int | None = None
    config: dict = field(default_factory=dict)


def average_uncertainty(totals: list[float]) -> float:
    """Mean over steps of the per-step total uncertainty."""
    if len(totals) == 0:
        raise EmptyTrace("no steps to average over")
    return float(np.mean(np.asarray(totals, dtype=np.float64)))


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class RandomPolicy:
    """Uniform over all nine actions, from its own seeded stream."""

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs: list[np.ndarray]) -> list[int]:
        return [int(a) for a in self.rng.integers(0, N_ACTIONS, size=len(obs))]


class GreedyUncertaintyPolicy:
    """Head for the most uncertain cell the agent can see, one step at a time.

    Works purely from the observation: target the row-major-first argmax of
    channel 2, then take the statically legal action minimizing Manhattan
    distance to it (ties to the lowest action index). An all-zero channel
    means nothing to chase, so stay put.
    """

    def __call__(self, obs: list[np.ndarray]) -> list[int]:
        return [self._one(o) for o in obs]

    @staticmethod
    def _one(o: np.ndarray) -> int:
        u = o[2]
        if float(u.max()) <= 0.0:
            return int(Action.STAY)
        m = u.shape[0]
        flat = int(np.argmax(u))
        target = (flat // m, flat % m)
        pos_flat = int(np.argmax(o[0]))
        r, c = pos_flat // m, pos_flat % m
        best_action, best_dist = int(Action.STAY), abs(r - target[0]) + abs(c - target[1])
        for a in range(1, N_ACTIONS):
            dr, dc = ACTION_DELTAS[a]
            nr, nc = r + dr, c + dc
            if not (0 <= nr < m and 0 <= nc < m):
                continue
            if o[1][nr, nc] < -0.5:  # obstacle
                continue
            dist = abs(nr - target[0]) + abs(nc - target[1])
            if dist < best_dist:
                best_action, best_dist = a, dist
        return best_action


class QPolicy:
    """Greedy with respect to a trained Q-network."""

    def __init__(self, params: QParams):
        self.params = params

    def __call__(self, obs: list[np.ndarray]) -> list[int]:
        q = forward(self.params, np.stack(obs))
        return [int(a) for a in np.argmax(q, axis=1)]


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------


def run_episode(
    env: MonitorEnv, policy, steps: int, record_trace: bool = False
) -> EpisodeTrace:
    if steps < 1:
        raise InvariantViolation("episode needs at least one step")
    obs = env.reset()
    snap = env.initial_snapshot()
    arrivals: list[list[Cell]] = []
    totals: list[float] = []
    poses: list[list[Cell]] = [list(env.poses)]
    actions_log: list[list[int]] = []
    rewards_log: list[list[float]] = []
    collided_log: list[list[bool]] = []
    local_log: list[list[float]] = []
    collisions = 0
    for _ in range(steps):
        acts = policy(obs)
        result = env.step(acts)
        collisions += int(result.collided.sum())
        totals.append(result.info["total_u"])
        if record_trace:
            arrivals.append(result.info["arrivals"])
            poses.append(list(env.poses))
            actions_log.append([int(a) for a in acts])
            rewards_log.append([float(r) for r in result.rewards])
            collided_log.append([bool(c) for c in result.collided])
            local_log.append([env.local_total(i) for i in range(env.n_agents)])
        obs = result.obs
    return EpisodeTrace(
        scenario=env.scenario,
        alpha=env.alpha_scalar,
        size=env.grid.size,
        n_roads=env.grid.n_roads,
        n_agents=env.n_agents,
        steps=steps,
        init_tau=snap["init_tau"],
        arrivals=arrivals,
        totals=totals,
        collisions=collisions,
        init_events=snap.get("init_events"),
        poses=poses if record_trace else [],
        actions=actions_log,
        rewards=rewards_log,
        collided=collided_log,
        local_totals=local_log,
        seed=env.seed,
        config={
            "scenario": env.scenario,
            "map_size": env.grid.size,
            "n_agents": env.n_agents,
            "alpha": env.alpha_scalar,
            "sense_radius": env.sense_radius,
            "sync_period": env.sync_period,
            "init_mode": env.init_mode,
        },
    )


def trace_to_csv(trace: EpisodeTrace) -> str:
    """Movement records plus the running total uncertainty, as CSV text.

    Columns: step, agent, row-major flat from/to cells, action, reward,
    collided flag, and the team's true total uncertainty after the step
    (repeated across that step's agent rows).
    """
    if not trace.actions:
        raise EmptyTrace("trace carries no per-step movement records")
    m = trace.size
    lines = ["t,agent,cell_from,cell_to,action,reward,collided,total_u"]
    for t in range(trace.steps):
        for i in range(trace.n_agents):
            fr = trace.poses[t][i]
            to = trace.poses[t + 1][i]
            lines.append(
                f"{t + 1},{i},{fr[0] * m + fr[1]},{to[0] * m + to[1]},"
                f"{trace.actions[t][i]},{trace.rewards[t][i]!r},"
                f"{int(trace.collided[t][i])},{trace.totals[t]!r}"
            )
    return "\n".join(lines) + "\n"


@dataclass
class EvalResult:
    u_raw: list[float]  # per-episode time-averaged total uncertainty
    u_norm: list[float]  # the same divided by the road-cell count
    collision_rate: float  # collided agent-steps / total agent-steps
    traces: list[EpisodeTrace] = field(default_factory=list)

    @property
    def mean_u(self) -> float:
        return float(np.mean(self.u_raw))

    @property
    def std_u(self) -> float:
        return float(np.std(self.u_raw))


def evaluate(
    env: MonitorEnv, policy, episodes: int, steps: int, record_traces: bool = False
) -> EvalResult:
    """Roll the policy for several episodes and summarize the metric."""
    u_raw: list[float] = []
    u_norm: list[float] = []
    traces: list[EpisodeTrace] = []
    collided = 0
    for _ in range(episodes):
        trace = run_episode(env, policy, steps, record_trace=record_traces)
        ubar = average_uncertainty(trace.totals)
        u_raw.append(ubar)
        u_norm.append(ubar / trace.n_roads)
        collided += trace.collisions
        if record_traces:
            traces.append(trace)
    rate = collided / (episodes * steps * env.n_agents)
    return EvalResult(u_raw=u_raw, u_norm=u_norm, collision_rate=rate, traces=traces)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepTable:
    """Sweep results, kept per (design point, seed) and summarized per point."""

    param_names: list[str]
    rows: list[dict]

    def to_csv(self) -> str:
        """One aggregated row per design point: mean, spread, seed count."""
        by_point = self.metric_by_point("u_raw")
        cols = self.param_names + ["mean_u", "std_u", "n_seeds"]
        lines = [",".join(cols)]
        for key, vals in by_point.items():
            cells = [str(v) for v in key]
            cells += [repr(float(np.mean(vals))), repr(float(np.std(vals))),
                      str(len(vals))]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_seed_csv(self) -> str:
        """Long format: one row per (design point, seed) run."""
        cols = self.param_names + ["seed", "u_raw", "u_norm", "collision_rate"]
        lines = [",".join(cols)]
        for row in self.rows:
            cells = []
            for c in cols:
                v = row[c]
                cells.append(repr(float(v)) if isinstance(v, float) else str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def metric_by_point(self, metric: str = "u_raw") -> dict[tuple, list[float]]:
        """Per-seed metric values grouped by design point, seed order kept."""
        out: dict[tuple, list[float]] = {}
        for row in self.rows:
            key = tuple(row[p] for p in self.param_names)
            out.setdefault(key, []).append(float(row[metric]))
        return out

    def point_stats(self, metric: str = "u_raw") -> dict[tuple, tuple[float, float]]:
        return {
            key: (float(np.mean(vals)), float(np.std(vals)))
            for key, vals in self.metric_by_point(metric).items()
        }


def sweep(
    make_env,
    points: list[dict],
    make_policy,
    seeds: list[int],
    episodes: int,
    steps: int,
) -> SweepTable:
    """Evaluate every design point under the same seed list.

    ``make_env(seed=..., **point)`` builds the environment; ``make_policy(env,
    seed)`` builds the policy rolled in it. Matching seeds across points share
    placement and arrival randomness, so paired comparisons are meaningful.
    """
    if not points:
        raise InvariantViolation("sweep needs at least one design point")
    param_names = list(points[0].keys())
    for point in points:
        if list(point.keys()) != param_names:
            raise InvariantViolation("all sweep points must share parameter names")
    rows: list[dict] = []
    for point in points:
        for seed in seeds:
            env = make_env(seed=seed, **point)
            policy = make_policy(env, seed)
            res = evaluate(env, policy, episodes=episodes, steps=steps)
            row = dict(point)
            row.update(
                seed=seed,
                u_raw=res.mean_u,
                u_norm=float(np.mean(res.u_norm)),
                collision_rate=res.collision_rate,
            )
            rows.append(row)
    return SweepTable(param_names=param_names, rows=rows)


def emit_artifacts(
    out_dir: str,
    name: str,
    table: SweepTable | None = None,
    traces: list[EpisodeTrace] | None = None,
) -> list[str]:
    """Write sweep tables and per-episode path traces; return the paths.

    A table lands as ``<name>.csv`` (one row per design point) plus
    ``<name>_seeds.csv`` (one row per run); each trace as
    ``trace_<seed>.csv`` in the movement-record format.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths: list[str] = []
    if table is not None:
        for suffix, text in ((".csv", table.to_csv()),
                             ("_seeds.csv", table.to_seed_csv())):
            path = os.path.join(out_dir, f"{name}{suffix}")
            with open(path, "w") as fh:
                fh.write(text)
            paths.append(path)
    for idx, trace in enumerate(traces or []):
        tag = trace.seed if trace.seed is not None else idx
        path = os.path.join(out_dir, f"trace_{tag}.csv")
        with open(path, "w") as fh:
            fh.write(trace_to_csv(trace))
        paths.append(path)
    return paths
