"""Distributed deep Q-learning on the monitoring environment.

All agents act with one shared parameter vector. Each agent stages its
transitions locally and uploads them to the shared replay memory whenever the
environment syncs with the center (every step under a continuous link), which
is when the center can actually see that experience. One minibatch update
runs per environment step once the replay holds a full batch; a frozen
target network refreshes every few episodes.

Every stochastic choice draws from a named child of one root seed, so a
(seed, config) pair pins the whole run byte for byte.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .env import MonitorEnv, StepResult
from .errors import InvariantViolation
from .gridworld import N_ACTIONS
from .qnet import (
    AdamState,
    NetArch,
    QParams,
    adam_step,
    forward,
    init_params,
    loss_and_grads,
    save_checkpoint,
)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 500
    steps_per_episode: int = 1000
    batch_size: int = 128
    gamma: float = 0.99
    lr: float = 1e-3
    replay_capacity: int = 100_000
    target_refresh: int = 5  # episodes between target-network copies
    eps_start: float = 0.5
    eps_end: float = 0.05

    def validate(self) -> None:
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise InvariantViolation("episodes and steps must be positive")
        if not 1 <= self.batch_size <= self.replay_capacity:
            raise InvariantViolation("batch size must fit in the replay memory")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvariantViolation("gamma outside [0, 1]")
        if self.target_refresh < 1:
            raise InvariantViolation("target refresh period must be positive")


def epsilon_schedule(episode: int, total_episodes: int, eps_start: float = 0.5,
                     eps_end: float = 0.05) -> float:
    """Linear decay over the first 80% of training, then flat at the floor."""
    knee = int(total_episodes * 0.8)
    if knee <= 0 or episode >= knee:
        return eps_end
    return eps_start + (eps_end - eps_start) * (episode / knee)


def select_action(params: QParams, obs: np.ndarray, eps: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties break toward the lowest action index."""
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(0, N_ACTIONS))
    return int(np.argmax(forward(params, obs)))


class ReplayMemory:
    """Uniform-sampling ring buffer over preallocated arrays."""

    def __init__(self, capacity: int, arch: NetArch):
        if capacity < 1:
            raise InvariantViolation("replay capacity must be positive")
        self.capacity = capacity
        shape = (capacity, arch.in_channels, arch.in_size, arch.in_size)
        self.obs = np.zeros(shape, dtype=np.float32)
        self.next_obs = np.zeros(shape, dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs: np.ndarray, action: int, reward: float,
            next_obs: np.ndarray) -> None:
        i = self._next
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        if batch_size > self._size:
            raise InvariantViolation(
                f"cannot sample {batch_size} of {self._size} stored transitions"
            )
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
        }


def compute_targets(target_params: QParams, rewards: np.ndarray,
                    next_obs: np.ndarray, gamma: float) -> np.ndarray:
    """Bootstrapped regression targets r + gamma * max_a' Q(s', a')."""
    q_next = forward(target_params, next_obs)
    return rewards + gamma * q_next.max(axis=1).astype(np.float64)


def flush_staging(replay: ReplayMemory, staging: list[list[tuple]]) -> int:
    """Move staged per-agent transitions into shared replay, agent order
    first, arrival order within an agent. Returns how many moved."""
    moved = 0
    for buf in staging:
        for obs, action, reward, next_obs in buf:
            replay.add(obs, action, reward, next_obs)
            moved += 1
        buf.clear()
    return moved


@dataclass
class EpisodeStats:
    episode: int
    epsilon: float
    mean_reward: float
    total_reward: float
    collisions: int
    mean_u: float
    final_u: float
    replay_size: int
    updates: int
    loss: float


@dataclass
class TrainResult:
    params: QParams
    stats: list[EpisodeStats]
    log_path: str | None
    final_checkpoint: str | None


def _write_log(path: str, stats: list[EpisodeStats]) -> None:
    cols = ["episode", "mean_reward", "mean_total_uncertainty", "epsilon",
            "loss_mean", "total_reward", "collisions", "final_u",
            "replay_size", "updates"]
    lines = [",".join(cols)]
    for s in stats:
        lines.append(",".join([
            str(s.episode), repr(s.mean_reward), repr(s.mean_u),
            repr(s.epsilon), repr(s.loss), repr(s.total_reward),
            str(s.collisions), repr(s.final_u), str(s.replay_size),
            str(s.updates),
        ]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def train(
    env: MonitorEnv,
    arch: NetArch,
    cfg: TrainConfig,
    seed: int = 0,
    out_dir: str | None = None,
    on_step=None,
    on_episode=None,
) -> TrainResult:
    """Run the full training loop and (optionally) write logs + checkpoints.

    ``out_dir`` gets ``train_log.csv``, a snapshot at every target refresh,
    and ``model_final.ckpt``. Artifacts carry no timestamps: two runs with
    equal seeds and configs write identical bytes.
    """
    cfg.validate()
    root = np.random.SeedSequence(seed)
    init_ss, sampler_ss, action_ss = root.spawn(3)
    init_rng = np.random.default_rng(init_ss)
    sampler_rng = np.random.default_rng(sampler_ss)
    action_rng = np.random.default_rng(action_ss)

    params = init_params(arch, init_rng)
    target = params.copy()
    adam = AdamState.zeros_like(params)
    replay = ReplayMemory(cfg.replay_capacity, arch)
    staging: list[list[tuple]] = [[] for _ in range(env.n_agents)]

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    stats: list[EpisodeStats] = []
    updates = 0
    for ep in range(cfg.episodes):
        if ep % cfg.target_refresh == 0:
            target = params.copy()
        eps = epsilon_schedule(ep, cfg.episodes, cfg.eps_start, cfg.eps_end)
        obs = env.reset()
        for buf in staging:  # experiences travel only at syncs; leftovers drop
            buf.clear()
        total_reward = 0.0
        collisions = 0
        u_sum = 0.0
        final_u = 0.0
        loss_sum = 0.0
        loss_n = 0
        for _ in range(cfg.steps_per_episode):
            actions = [select_action(params, obs[i], eps, action_rng)
                       for i in range(env.n_agents)]
            result = env.step(actions)
            for i in range(env.n_agents):
                staging[i].append(
                    (obs[i], actions[i], float(result.rewards[i]), result.obs[i])
                )
            if result.info["synced"]:
                flush_staging(replay, staging)
            if len(replay) >= cfg.batch_size:
                batch = replay.sample(sampler_rng, cfg.batch_size)
                y = compute_targets(target, batch["rewards"], batch["next_obs"],
                                    cfg.gamma)
                loss, grads = loss_and_grads(params, batch["obs"],
                                             batch["actions"], y)
                adam_step(params, grads, adam, lr=cfg.lr)
                updates += 1
                loss_sum += loss
                loss_n += 1
            total_reward += float(result.rewards.sum())
            collisions += int(result.collided.sum())
            u_sum += result.info["total_u"]
            final_u = result.info["total_u"]
            obs = result.obs
            if on_step is not None:
                on_step(env, result)
        s = EpisodeStats(
            episode=ep,
            epsilon=eps,
            mean_reward=total_reward / (cfg.steps_per_episode * env.n_agents),
            total_reward=total_reward,
            collisions=collisions,
            mean_u=u_sum / cfg.steps_per_episode,
            final_u=final_u,
            replay_size=len(replay),
            updates=updates,
            loss=loss_sum / max(loss_n, 1),
        )
        stats.append(s)
        if on_episode is not None:
            on_episode(ep, s)
        if out_dir is not None and (ep + 1) % cfg.target_refresh == 0:
            save_checkpoint(
                os.path.join(out_dir, f"model_ep{ep + 1:04d}.ckpt"), params,
                meta={"episode": ep + 1, "seed": seed},
            )

    log_path = final_path = None
    if out_dir is not None:
        log_path = os.path.join(out_dir, "train_log.csv")
        _write_log(log_path, stats)
        final_path = os.path.join(out_dir, "model_final.ckpt")
        save_checkpoint(final_path, params, meta={"episode": cfg.episodes, "seed": seed})
    return TrainResult(params=params, stats=stats, log_path=log_path,
                       final_checkpoint=final_path)
