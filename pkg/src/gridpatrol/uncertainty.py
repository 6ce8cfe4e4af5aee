"""Event arrivals, both uncertainty models, and the map-sync protocol.

Two regimes are supported:

* ``"event"`` -- binary uncertainty: a cell is uncertain exactly while it
  holds an unvisited active event. Requires a continuous data link, so every
  agent sees the same global field.
* ``"staleness"`` -- uncertainty grows with the time since the last visit,
  ``u = 1 - exp(-alpha * age)``. Agents keep local last-visit clocks that
  drift from the truth and are reconciled with the center (TMC) every
  ``T_u`` steps.

Clocks store per-cell last-visit timestamps; ``NEVER`` marks cells no agent
has seen, which the staleness model maps to maximal uncertainty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, StaleLogError
from .gridworld import Cell, GridMap

NEVER = -math.inf

SCENARIOS = ("event", "staleness")


def make_alpha(grid: GridMap, rate: float) -> np.ndarray:
    """Per-cell arrival-rate map: ``rate`` on road cells, zero elsewhere."""
    if rate < 0:
        raise InvariantViolation("arrival rate must be non-negative")
    alpha = np.zeros((grid.size, grid.size), dtype=np.float64)
    alpha[grid.road_mask] = rate
    return alpha


# ---------------------------------------------------------------------------
# uncertainty models
# ---------------------------------------------------------------------------


def event_uncertainty(e_k: int) -> float:
    """Binary model: uncertain iff the cell holds an active event."""
    if e_k not in (0, 1):
        raise InvariantViolation(f"event indicator must be 0 or 1, got {e_k}")
    return float(e_k)


def staleness_uncertainty(alpha_k: float, t: float, tau_k: float) -> float:
    """Staleness model: ``1 - exp(-alpha_k * (t - tau_k))``.

    ``tau_k = NEVER`` (no visit on record) maps to 1. Computed with expm1 in
    double precision so small ages keep full relative accuracy; the scalar
    and array paths share one expm1 so they agree bit for bit.
    """
    if alpha_k < 0:
        raise InvariantViolation("arrival rate must be non-negative")
    if t < tau_k:
        raise InvariantViolation(f"query time {t} precedes last visit {tau_k}")
    if alpha_k == 0.0:
        return 0.0
    if tau_k == NEVER:
        return 1.0
    return float(-np.expm1(-alpha_k * (t - tau_k)))


def staleness_field(alpha: np.ndarray, t: float, tau: np.ndarray) -> np.ndarray:
    """Vectorized staleness model over a whole clock array."""
    u = np.zeros_like(alpha)
    live = alpha > 0
    ages = t - tau[live]
    if np.any(ages < 0):
        raise InvariantViolation("clock contains visits later than query time")
    u[live] = -np.expm1(-alpha[live] * ages)
    return u


@dataclass
class UncertaintyField:
    """Per-cell uncertainty snapshot plus the model it was computed under."""

    u: np.ndarray  # (M, M) float64 in [0, 1]
    scenario: str
    alpha: np.ndarray

    def total(self) -> float:
        return float(self.u.sum())


def field_from_events(e: np.ndarray, alpha: np.ndarray) -> UncertaintyField:
    return UncertaintyField(u=e.astype(np.float64), scenario="event", alpha=alpha)


def field_from_clock(alpha: np.ndarray, t: float, clock: "VisitClock") -> UncertaintyField:
    return UncertaintyField(
        u=staleness_field(alpha, t, clock.tau), scenario="staleness", alpha=alpha
    )


# ---------------------------------------------------------------------------
# event process
# ---------------------------------------------------------------------------


@dataclass
class EventField:
    """Active-event indicators plus the seeded stream feeding arrivals."""

    e: np.ndarray  # (M, M) uint8
    rng: np.random.Generator

    def copy(self) -> "EventField":
        return EventField(e=self.e.copy(), rng=self.rng)


def step_events(fld: EventField, grid: GridMap, alpha: np.ndarray) -> EventField:
    """Advance arrivals one step: each empty road cell lights up with
    probability ``1 - exp(-alpha_k)``; active events persist until visited.

    One uniform draw per grid cell is consumed regardless of state, so the
    stream position depends only on the number of steps taken.
    """
    if np.any(alpha < 0):
        raise InvariantViolation("arrival rates must be non-negative")
    p = -np.expm1(-alpha)
    draws = fld.rng.random(size=alpha.shape)
    arrivals = (fld.e == 0) & (draws < p) & grid.road_mask
    e_new = fld.e.copy()
    e_new[arrivals] = 1
    return EventField(e=e_new, rng=fld.rng)


def clear_events(fld: EventField, cells: set[Cell]) -> EventField:
    """Visited cells lose their active events."""
    e_new = fld.e.copy()
    for cell in cells:
        e_new[cell] = 0
    return EventField(e=e_new, rng=fld.rng)


# ---------------------------------------------------------------------------
# visit clocks and the sync protocol
# ---------------------------------------------------------------------------


@dataclass
class VisitClock:
    """Per-cell last-visit timestamps owned by the center or by one agent."""

    tau: np.ndarray  # (M, M) float64, NEVER where unvisited
    owner: str = "tmc"

    def copy(self, owner: str | None = None) -> "VisitClock":
        return VisitClock(tau=self.tau.copy(), owner=owner or self.owner)


def fresh_clock(size: int, owner: str = "tmc", fill: float = NEVER) -> VisitClock:
    return VisitClock(tau=np.full((size, size), fill, dtype=np.float64), owner=owner)


def record_visits(clock: VisitClock, visited: set[Cell], t: float) -> VisitClock:
    """Stamp every visited cell with time t; all other cells carry over."""
    if visited and t < np.max(clock.tau):
        raise InvariantViolation("visit time precedes an existing clock entry")
    out = clock.copy()
    for cell in visited:
        out.tau[cell] = t
    return out


def local_update(
    agent_clock: VisitClock,
    own_cell: Cell,
    seen_visits: set[tuple[Cell, float]],
    t: float,
) -> VisitClock:
    """One agent's between-sync clock update for the step ending at t+1.

    The agent stamps its own cell, plus every in-range visit it witnessed
    during the step, at t+1; everything else carries over. Stamps never move
    a cell's clock backwards.
    """
    out = agent_clock.copy()
    out.tau[own_cell] = max(out.tau[own_cell], t + 1)
    for cell, stamp in seen_visits:
        out.tau[cell] = max(out.tau[cell], stamp)
    return out


@dataclass
class VisitLog:
    """Bounded FIFO of (cell, timestep) visit records an agent submits at sync."""

    capacity: int
    entries: list[tuple[Cell, float]] = field(default_factory=list)

    def add(self, cell: Cell, t: float) -> None:
        if self.entries and t < self.entries[-1][1]:
            raise InvariantViolation("visit log entries must be time-ordered")
        self.entries.append((cell, t))
        if len(self.entries) > self.capacity:
            del self.entries[0]

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


def global_update(
    tmc_clock: VisitClock,
    logs: list[VisitLog],
    window: tuple[float, float],
    alpha: np.ndarray,
) -> tuple[VisitClock, UncertaintyField]:
    """Center-side sync: fold the agents' visit logs into the global clock.

    ``window = (t0, t1)`` covers the steps after the previous sync: every log
    entry must carry a stamp s with t0 < s <= t1. Cells visited more than
    once take the latest stamp; unreported cells carry over. Returns the new
    clock together with the staleness field recomputed at t1.
    """
    t0, t1 = window
    out = tmc_clock.copy()
    for log in logs:
        for cell, stamp in log.entries:
            if not (t0 < stamp <= t1):
                raise StaleLogError(
                    f"log entry {cell} at {stamp} outside window ({t0}, {t1}]"
                )
            out.tau[cell] = max(out.tau[cell], stamp)
    return out, field_from_clock(alpha, t1, out)


def reconcile_local(agent_clock: VisitClock, tmc_clock: VisitClock) -> VisitClock:
    """Merge the broadcast global clock into an agent's local clock.

    Per-cell max: the broadcast can never erase fresher first-hand knowledge
    the agent acquired after submitting its log.
    """
    if agent_clock.tau.shape != tmc_clock.tau.shape:
        raise InvariantViolation("clocks reference different maps")
    return VisitClock(
        tau=np.maximum(agent_clock.tau, tmc_clock.tau), owner=agent_clock.owner
    )


# ---------------------------------------------------------------------------
# plain-text interchange
# ---------------------------------------------------------------------------


def field_to_csv(u: np.ndarray) -> str:
    """Row-major CSV dump of a field, one grid row per line."""
    return "\n".join(",".join(repr(float(v)) for v in row) for row in u) + "\n"


def serialize_visit_log(log: VisitLog, size: int) -> str:
    """Newline-delimited ``k,t`` records with k the row-major cell index."""
    lines = [f"{cell[0] * size + cell[1]},{stamp:g}" for cell, stamp in log.entries]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_visit_log(text: str, size: int, capacity: int) -> VisitLog:
    log = VisitLog(capacity=capacity)
    for line in text.splitlines():
        if not line.strip():
            continue
        k_str, t_str = line.split(",")
        k = int(k_str)
        log.add((k // size, k % size), float(t_str))
    return log
