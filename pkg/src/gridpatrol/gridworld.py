"""Static map, agent kinematics and collision-aware simultaneous moves.

Cells are addressed as (row, col). Agent ids are positions in the pose
list. All functions here are pure: they never mutate their inputs and are
safe to call from concurrent rollout workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import EmptyRoadNetwork, InvariantViolation, ParseError

Cell = tuple[int, int]


class CellKind(IntEnum):
    FREE = 0
    ROAD = 1
    OBSTACLE = 2


_CHAR_TO_KIND = {".": CellKind.FREE, "R": CellKind.ROAD, "#": CellKind.OBSTACLE}


class Action(IntEnum):
    """The nine grid moves. Index order is the tie-break order everywhere."""

    STAY = 0
    N = 1
    S = 2
    E = 3
    W = 4
    NE = 5
    NW = 6
    SE = 7
    SW = 8


ACTION_DELTAS: dict[int, Cell] = {
    Action.STAY: (0, 0),
    Action.N: (-1, 0),
    Action.S: (1, 0),
    Action.E: (0, 1),
    Action.W: (0, -1),
    Action.NE: (-1, 1),
    Action.NW: (-1, -1),
    Action.SE: (1, 1),
    Action.SW: (1, -1),
}

N_ACTIONS = len(Action)


@dataclass(frozen=True)
class GridMap:
    """M x M static environment with per-cell kind and physical cell width."""

    size: int
    cells: np.ndarray  # (M, M) int8 of CellKind values
    cell_width: float  # meters

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.size and 0 <= c < self.size

    def kind(self, cell: Cell) -> CellKind:
        return CellKind(int(self.cells[cell]))

    def is_obstacle(self, cell: Cell) -> bool:
        return self.cells[cell] == CellKind.OBSTACLE

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.is_obstacle(cell)

    @property
    def road_mask(self) -> np.ndarray:
        return self.cells == CellKind.ROAD

    def road_cells(self) -> list[Cell]:
        rows, cols = np.nonzero(self.road_mask)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    @property
    def n_roads(self) -> int:
        return int(self.road_mask.sum())


@dataclass(frozen=True)
class MoveOutcome:
    """Result of one simultaneous move: final poses plus per-agent rejection flags.

    ``collided[i]`` true means agent i's intended move was rejected and the
    agent kept its previous cell; the caller applies the collision penalty.
    Final poses are always pairwise distinct.
    """

    new_poses: list[Cell]
    collided: list[bool]


def load_map(text: str) -> GridMap:
    """Parse a map file: header line ``d=<meters>`` then M rows of M characters.

    Characters: ``#`` obstacle / no-fly, ``.`` free, ``R`` road. The parse is
    total and deterministic; every defect raises with its location.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("d="):
        raise ParseError("first line must be a 'd=<meters>' header")
    try:
        cell_width = float(lines[0][2:])
    except ValueError as exc:
        raise ParseError(f"bad cell width in header: {lines[0]!r}") from exc
    if cell_width <= 0:
        raise ParseError("cell width must be positive")

    rows = [ln for ln in lines[1:] if ln != ""]
    if not rows:
        raise ParseError("no grid rows after header")
    size = len(rows)
    grid = np.zeros((size, size), dtype=np.int8)
    for r, row in enumerate(rows):
        if len(row) != size:
            raise ParseError(f"row {r} has length {len(row)}, expected {size} (square grid)")
        for c, ch in enumerate(row):
            kind = _CHAR_TO_KIND.get(ch)
            if kind is None:
                raise ParseError(f"unknown character {ch!r} at row {r}, col {c}")
            grid[r, c] = kind

    if not (grid == CellKind.ROAD).any():
        raise EmptyRoadNetwork("map has no road cell")
    if size < 2:
        raise InvariantViolation("map must be at least 2x2")
    grid.setflags(write=False)
    return GridMap(size=size, cells=grid, cell_width=cell_width)


def _validate_poses(grid: GridMap, poses: list[Cell]) -> None:
    if len(set(poses)) != len(poses):
        raise InvariantViolation(f"duplicate input poses: {poses}")
    for p in poses:
        if not grid.passable(p):
            raise InvariantViolation(f"pose {p} is off-grid or an obstacle")


def resolve_moves(grid: GridMap, poses: list[Cell], actions: list[int]) -> MoveOutcome:
    """Resolve one simultaneous move of all agents, deterministically.

    Rejection rules, in order:
      (a) target off-grid or an obstacle;
      (b) two or more moving agents contest one target: the lowest-index
          contender wins, the rest are rejected;
      (c) target is a cell where some other agent ends up resting (it stays
          by choice or by rejection); rejections cascade until a fixpoint.

    Agents that choose STAY are never rejected. Pairwise swaps (and longer
    rotation cycles) are legal: only co-location is forbidden, and the output
    always satisfies pairwise distinctness. Rejected agents keep their cell
    and are flagged ``collided``.
    """
    n = len(poses)
    if len(actions) != n:
        raise InvariantViolation(f"{n} poses but {len(actions)} actions")
    _validate_poses(grid, poses)

    intended: list[Cell] = []
    for pose, action in zip(poses, actions):
        try:
            dr, dc = ACTION_DELTAS[Action(action)]
        except ValueError:
            raise InvariantViolation(f"unknown action {action!r}") from None
        intended.append((pose[0] + dr, pose[1] + dc))
    stays = [intended[i] == poses[i] for i in range(n)]
    rejected = [False] * n

    # (a) static legality
    for i in range(n):
        if not stays[i] and not grid.passable(intended[i]):
            rejected[i] = True

    # (b) contested targets among surviving movers; ascending index wins
    claimed: dict[Cell, int] = {}
    for i in range(n):
        if stays[i] or rejected[i]:
            continue
        if intended[i] in claimed:
            rejected[i] = True
        else:
            claimed[intended[i]] = i

    # (c) moves into resting cells; a fresh rejection parks that agent on its
    # own cell, which can invalidate earlier grants, so iterate to fixpoint
    changed = True
    while changed:
        changed = False
        resting = {poses[j] for j in range(n) if stays[j] or rejected[j]}
        for i in range(n):
            if stays[i] or rejected[i]:
                continue
            if intended[i] in resting:
                rejected[i] = True
                changed = True

    new_poses = [poses[i] if stays[i] or rejected[i] else intended[i] for i in range(n)]
    return MoveOutcome(new_poses=new_poses, collided=rejected)


def cell_center(cell: Cell, d: float) -> tuple[float, float]:
    """Physical center of a cell in meters: (r, c) -> ((r + 1/2)d, (c + 1/2)d)."""
    return ((cell[0] + 0.5) * d, (cell[1] + 0.5) * d)


def neighbors_in_range(poses: list[Cell], i: int, r_s: float, d: float) -> set[int]:
    """Indices of agents whose cell centers lie within r_s meters of agent i."""
    if not 0 <= i < len(poses):
        raise IndexError(f"agent index {i} out of range for {len(poses)} agents")
    if r_s <= 0 or d <= 0:
        raise InvariantViolation("sensing range and cell width must be positive")
    xi, yi = cell_center(poses[i], d)
    out = set()
    for j, pose in enumerate(poses):
        if j == i:
            continue
        xj, yj = cell_center(pose, d)
        if math.hypot(xi - xj, yi - yj) <= r_s:
            out.add(j)
    return out
