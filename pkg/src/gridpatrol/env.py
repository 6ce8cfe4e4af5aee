"""Multi-agent monitoring environment tying the map, fields, and protocol together.

One ``MonitorEnv`` owns the true world state (agent cells, event field or
true last-visit clock) plus the communication-limited bookkeeping (center
clock, per-agent local clocks, upload logs). Time is integer-stepped: step
``t -> t+1`` stamps its visits at ``t+1``, and a center sync fires at the
end of any step whose post-step time is a multiple of the sync period.

Observations are egocentric ``(3, M, M)`` float32 stacks:

* channel 0 -- self at 1.0, visible teammates at 0.5;
* channel 1 -- terrain: road 1.0, free 0.0, obstacle -1.0;
* channel 2 -- the uncertainty map as the agent knows it (global event
  indicators, or the staleness field implied by its own local clock).

Rewards and logged metrics always use the true field; stale knowledge only
shapes what the agents see.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArityError, InvariantViolation, PlacementError
from .gridworld import (
    Cell,
    GridMap,
    N_ACTIONS,
    neighbors_in_range,
    resolve_moves,
)
from .uncertainty import (
    EventField,
    SCENARIOS,
    UncertaintyField,
    VisitClock,
    VisitLog,
    clear_events,
    field_from_clock,
    field_from_events,
    fresh_clock,
    global_update,
    local_update,
    make_alpha,
    record_visits,
    reconcile_local,
    staleness_field,
    step_events,
)

# Initial-state densities: fraction of road cells holding an event at reset,
# and the age ceiling (in units of 1/alpha) for randomized initial staleness.
INIT_EVENT_PROB = 0.25
INIT_AGE_SPAN = 1.0


@dataclass(frozen=True)
class RewardConfig:
    """Per-step reward weights: collision penalty, novel-cell bonus, and the
    weight on the true uncertainty of the destination cell."""

    r_collision: float = -20.0
    r_novel: float = 1.0
    lam: float = 5.0


def compute_reward(cfg: RewardConfig, collided: bool, novel: bool, u_dest: float) -> float:
    """A collided agent earns the penalty and nothing else; otherwise the
    novelty bonus (if any) plus ``lam`` times the destination's uncertainty."""
    if collided:
        return cfg.r_collision
    return cfg.r_novel * float(novel) + cfg.lam * u_dest


def encode_observation(
    grid: GridMap,
    poses: list[Cell],
    agent: int,
    visible: set[int],
    u_map: np.ndarray,
) -> np.ndarray:
    """Egocentric (3, M, M) float32 stack for one agent; see module docstring."""
    m = grid.size
    obs = np.zeros((3, m, m), dtype=np.float32)
    for j in visible:
        if j != agent:
            obs[0][poses[j]] = 0.5
    obs[0][poses[agent]] = 1.0
    terrain = obs[1]
    terrain[grid.road_mask] = 1.0
    terrain[grid.cells == 2] = -1.0
    obs[2] = u_map.astype(np.float32)
    return obs


@dataclass
class StepResult:
    obs: list[np.ndarray]
    rewards: np.ndarray  # (n_agents,) float64
    collided: np.ndarray  # (n_agents,) bool
    info: dict


class MonitorEnv:
    """Road-network monitoring with either global event data or synced clocks.

    The ``"event"`` scenario assumes a continuous link, so the sync period is
    pinned to 1 and everyone shares the global indicator map. The
    ``"staleness"`` scenario runs the full intermittent protocol.
    """

    def __init__(
        self,
        grid: GridMap,
        n_agents: int,
        scenario: str,
        alpha: float = 0.01,
        sense_radius: float = 90.0,
        sync_period: int = 4,
        reward: RewardConfig | None = None,
        seed: int | np.random.SeedSequence = 0,
        init_mode: str = "random",
    ):
        if scenario not in SCENARIOS:
            raise InvariantViolation(f"unknown scenario {scenario!r}")
        if n_agents < 1:
            raise InvariantViolation("need at least one agent")
        if n_agents > grid.n_roads:
            raise PlacementError(
                f"{n_agents} agents cannot fit on {grid.n_roads} road cells"
            )
        if sync_period < 1:
            raise InvariantViolation("sync period must be a positive integer")
        if init_mode not in ("random", "blank"):
            raise InvariantViolation(f"unknown init mode {init_mode!r}")
        self.grid = grid
        self.n_agents = n_agents
        self.scenario = scenario
        self.alpha = make_alpha(grid, alpha)
        self.alpha_scalar = float(alpha)
        self.sense_radius = float(sense_radius)
        # A continuous link is a sync every step.
        self.sync_period = 1 if scenario == "event" else int(sync_period)
        self.reward_cfg = reward or RewardConfig()
        self.init_mode = init_mode
        self.seed = int(seed) if isinstance(seed, (int, np.integer)) else None
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._root_ss = root
        self.t = 0
        self.poses: list[Cell] = []
        self._needs_reset = True

    # -- rollout interface ---------------------------------------------------

    def reset(self) -> list[np.ndarray]:
        """Start a fresh episode: place agents, draw the initial field, and
        hand every bookkeeping clock the same synchronized starting state."""
        ep_ss = self._root_ss.spawn(1)[0]
        place_ss, event_ss = ep_ss.spawn(2)
        self._place_rng = np.random.default_rng(place_ss)
        self._event_rng = np.random.default_rng(event_ss)

        m = self.grid.size
        roads = self.grid.road_cells()
        picks = self._place_rng.choice(len(roads), size=self.n_agents, replace=False)
        self.poses = [roads[int(i)] for i in picks]

        self.t = 0
        clock0 = fresh_clock(m, owner="true")
        if self.scenario == "event":
            if self.init_mode == "blank":
                e0 = np.zeros((m, m), dtype=np.uint8)
            else:
                draws = self._event_rng.random(size=(m, m))
                e0 = ((draws < INIT_EVENT_PROB) & self.grid.road_mask).astype(np.uint8)
            self.events = EventField(e=e0, rng=self._event_rng)
        else:
            if self.init_mode == "blank":
                clock0.tau[self.grid.road_mask] = 0.0
            else:
                span = max(1, math.ceil(INIT_AGE_SPAN / self.alpha_scalar))
                ages = self._event_rng.integers(0, span + 1, size=(m, m))
                clock0.tau[self.grid.road_mask] = -ages[self.grid.road_mask].astype(np.float64)
            self.events = None
        for pos in self.poses:
            clock0.tau[pos] = 0.0

        self.true_clock = clock0
        self.tmc_clock = clock0.copy(owner="tmc")
        self.local_clocks = [clock0.copy(owner=f"agent{i}") for i in range(self.n_agents)]
        self.visit_logs = [VisitLog(capacity=self.sync_period) for _ in range(self.n_agents)]
        self.last_sync_t = 0

        self.visited = np.zeros((m, m), dtype=bool)
        for pos in self.poses:
            self.visited[pos] = True

        self._init_tau = clock0.tau.copy()
        self._init_events = self.events.e.copy() if self.events is not None else None
        self._needs_reset = False
        return [self._observe(i) for i in range(self.n_agents)]

    def step(self, actions: list[int]) -> StepResult:
        if self._needs_reset:
            raise InvariantViolation("step() before reset()")
        if len(actions) != self.n_agents:
            raise ArityError(f"expected {self.n_agents} actions, got {len(actions)}")
        for a in actions:
            if not 0 <= int(a) < N_ACTIONS:
                raise InvariantViolation(f"action {a} outside [0, {N_ACTIONS})")

        u_pre = self.true_field().u  # truth at time t, before anyone moves
        outcome = resolve_moves(self.grid, self.poses, [int(a) for a in actions])
        new_poses = outcome.new_poses
        collided = np.asarray(outcome.collided, dtype=bool)

        novel = np.zeros(self.n_agents, dtype=bool)
        rewards = np.zeros(self.n_agents, dtype=np.float64)
        u_dest = np.zeros(self.n_agents, dtype=np.float64)
        for i in range(self.n_agents):
            novel[i] = not self.visited[new_poses[i]]
            u_dest[i] = u_pre[new_poses[i]]
            rewards[i] = compute_reward(
                self.reward_cfg, bool(collided[i]), bool(novel[i]), float(u_dest[i])
            )

        arrivals = set(new_poses)
        for pos in new_poses:
            self.visited[pos] = True
        self.poses = new_poses
        self.true_clock = record_visits(self.true_clock, arrivals, self.t + 1)

        if self.scenario == "event":
            self.events = clear_events(self.events, arrivals)
            self.events = step_events(self.events, self.grid, self.alpha)

        stamp = float(self.t + 1)
        for i in range(self.n_agents):
            seen = {
                (new_poses[j], stamp)
                for j in neighbors_in_range(
                    new_poses, i, self.sense_radius, self.grid.cell_width
                )
            }
            self.local_clocks[i] = local_update(
                self.local_clocks[i], new_poses[i], seen, self.t
            )
            self.visit_logs[i].add(new_poses[i], stamp)

        self.t += 1
        synced = self.t % self.sync_period == 0
        if synced:
            window = (float(self.last_sync_t), float(self.t))
            self.tmc_clock, _ = global_update(
                self.tmc_clock, self.visit_logs, window, self.alpha
            )
            for log in self.visit_logs:
                log.clear()
            self.local_clocks = [
                reconcile_local(c, self.tmc_clock) for c in self.local_clocks
            ]
            self.last_sync_t = self.t

        info = {
            "t": self.t,
            "arrivals": list(new_poses),
            "novel": novel,
            "u_dest": u_dest,
            "synced": synced,
            "total_u": self.true_field().total(),
        }
        obs = [self._observe(i) for i in range(self.n_agents)]
        return StepResult(obs=obs, rewards=rewards, collided=collided, info=info)

    # -- views ----------------------------------------------------------------

    def true_field(self) -> UncertaintyField:
        """Ground-truth uncertainty at the current time."""
        if self.scenario == "event":
            return field_from_events(self.events.e, self.alpha)
        return field_from_clock(self.alpha, float(self.t), self.true_clock)

    def local_field(self, agent: int) -> np.ndarray:
        """The staleness map implied by one agent's possibly stale clock."""
        return staleness_field(self.alpha, float(self.t), self.local_clocks[agent].tau)

    def local_total(self, agent: int) -> float:
        """Sum of the agent's current uncertainty estimate over the map."""
        if self.scenario == "event":
            return float(self.events.e.astype(np.float64).sum())
        return float(self.local_field(agent).sum())

    def _observe(self, agent: int) -> np.ndarray:
        if self.scenario == "event":
            visible = set(range(self.n_agents))
            u_map = self.events.e.astype(np.float64)
        else:
            visible = neighbors_in_range(
                self.poses, agent, self.sense_radius, self.grid.cell_width
            ) | {agent}
            u_map = self.local_field(agent)
        return encode_observation(self.grid, self.poses, agent, visible, u_map)

    def initial_snapshot(self) -> dict:
        """Reset-time state needed to replay an episode exactly."""
        snap = {"poses": list(self.poses) if self.t == 0 else None,
                "init_tau": self._init_tau.copy()}
        if self._init_events is not None:
            snap["init_events"] = self._init_events.copy()
        return snap

    def force_events(self, cells: set[Cell]) -> None:
        """Scripting hook: light events on the given road cells right now."""
        if self.scenario != "event":
            raise InvariantViolation("force_events only applies to the event scenario")
        for cell in cells:
            if not self.grid.road_mask[cell]:
                raise InvariantViolation(f"cannot place an event off-road at {cell}")
        self.events = EventField(e=self.events.e.copy(), rng=self.events.rng)
        for cell in cells:
            self.events.e[cell] = 1
