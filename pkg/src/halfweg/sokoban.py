"""Deterministic Sokoban dynamics over 4-plane board encodings.

A board is a ``(4, H, W)`` uint8 array with channels ordered player, wall,
box, goal.  :class:`PuzzleState` wraps a single read-only board; the
``*_batch`` functions operate on stacks of boards ``(N, 4, H, W)`` and are
what search and the policy hierarchy use internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PLAYER, WALL, BOX, GOAL = 0, 1, 2, 3
N_CHANNELS = 4

UP, RIGHT, LEFT, DOWN, STOP = 0, 1, 2, 3, 4
N_ACTIONS = 5
ACTION_NAMES = ("up", "right", "left", "down", "stop")

# row / column offsets indexed by action; stop is a zero move
DROW = np.array([-1, 0, 0, 1, 0], dtype=np.int64)
DCOL = np.array([0, 1, -1, 0, 0], dtype=np.int64)

DEFAULT_PLAYER_WEIGHT = 0.5


class PuzzleState:
    """Immutable Sokoban board."""

    __slots__ = ("planes", "_hash")

    def __init__(self, planes: np.ndarray, *, check: bool = True):
        arr = np.array(planes, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[0] != N_CHANNELS:
            raise ValueError(f"expected (4, H, W) planes, got shape {arr.shape}")
        arr.setflags(write=False)
        self.planes = arr
        self._hash = None
        if check:
            validate_planes(arr)

    @classmethod
    def from_masks(cls, player, wall, box, goal) -> "PuzzleState":
        return cls(np.stack([player, wall, box, goal]).astype(np.uint8))

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]

    @property
    def player(self) -> np.ndarray:
        return self.planes[PLAYER]

    @property
    def wall(self) -> np.ndarray:
        return self.planes[WALL]

    @property
    def box(self) -> np.ndarray:
        return self.planes[BOX]

    @property
    def goal(self) -> np.ndarray:
        return self.planes[GOAL]

    @property
    def player_pos(self) -> tuple[int, int]:
        r, c = np.unravel_index(int(np.argmax(self.planes[PLAYER])), self.shape)
        return int(r), int(c)

    @property
    def n_boxes(self) -> int:
        return int(self.planes[BOX].sum())

    def as_goal(self) -> np.ndarray:
        """Float32 copy of the planes, usable wherever a goal array is expected."""
        return self.planes.astype(np.float32)

    def __eq__(self, other):
        if not isinstance(other, PuzzleState):
            return NotImplemented
        return self.planes.shape == other.planes.shape and bool(
            np.array_equal(self.planes, other.planes)
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.planes.shape, self.planes.tobytes()))
        return self._hash

    def __repr__(self):
        from .levels import serialize_level

        return f"PuzzleState(\n{serialize_level(self)})"


def validate_planes(planes: np.ndarray) -> None:
    """Per-state invariants: one player, nothing inside walls, player not on a box."""
    player, wall, box = planes[PLAYER], planes[WALL], planes[BOX]
    n_players = int(player.sum())
    if n_players != 1:
        raise ValueError(f"board must have exactly one player, found {n_players}")
    if np.any(player & wall) or np.any(box & wall):
        raise ValueError("player or box overlaps a wall")
    if np.any(player & box):
        raise ValueError("player shares a cell with a box")
    if np.any(planes > 1):
        raise ValueError("planes must be binary")


@dataclass(frozen=True)
class Trajectory:
    states: list[PuzzleState]
    executed: list[int] = field(default_factory=list)

    @property
    def last(self) -> PuzzleState:
        return self.states[-1]


def _player_coords(boards: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, _, h, w = boards.shape
    flat = boards[:, PLAYER].reshape(n, h * w).argmax(axis=1)
    return flat // w, flat % w


def step_batch(boards: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Apply one action to each board of a ``(N, 4, H, W)`` stack.

    Blocked moves and the stop action leave the board unchanged.  Returns a
    new array; the input is not modified.
    """
    boards = np.asarray(boards)
    actions = np.asarray(actions, dtype=np.int64)
    n, _, h, w = boards.shape
    out = boards.copy()
    if n == 0:
        return out
    idx = np.arange(n)
    r, c = _player_coords(boards)
    dr, dc = DROW[actions], DCOL[actions]
    r1, c1 = r + dr, c + dc
    r2, c2 = r1 + dr, c1 + dc
    in1 = (r1 >= 0) & (r1 < h) & (c1 >= 0) & (c1 < w)
    in2 = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
    r1c, c1c = np.clip(r1, 0, h - 1), np.clip(c1, 0, w - 1)
    r2c, c2c = np.clip(r2, 0, h - 1), np.clip(c2, 0, w - 1)
    wall1 = boards[idx, WALL, r1c, c1c].astype(bool)
    box1 = boards[idx, BOX, r1c, c1c].astype(bool)
    free2 = in2 & ~boards[idx, WALL, r2c, c2c].astype(bool) & ~boards[idx, BOX, r2c, c2c].astype(bool)
    moving = (actions != STOP) & in1 & ~wall1 & (~box1 | free2)
    pushing = moving & box1

    m = idx[moving]
    out[m, PLAYER, r[moving], c[moving]] = 0
    out[m, PLAYER, r1[moving], c1[moving]] = 1
    p = idx[pushing]
    out[p, BOX, r1[pushing], c1[pushing]] = 0
    out[p, BOX, r2[pushing], c2[pushing]] = 1
    return out


def run_plan_batch(
    boards: np.ndarray, plans: np.ndarray, *, record: bool = False
) -> tuple[np.ndarray, np.ndarray] | tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Execute equal-length raw action rows on a stack of boards.

    ``plans`` is ``(N, L)``; a stop ends the row.  Returns the final boards
    and the executed length of each row, plus the ``(L + 1, N, 4, H, W)``
    state history when ``record`` is set (frozen rows repeat their state).
    """
    plans = np.asarray(plans, dtype=np.int64)
    cur = np.asarray(boards)
    n = cur.shape[0]
    alive = np.ones(n, dtype=bool)
    lengths = np.zeros(n, dtype=np.int64)
    history = [cur] if record else None
    for t in range(plans.shape[1]):
        a = plans[:, t]
        alive &= a != STOP
        cur = step_batch(cur, np.where(alive, a, STOP))
        lengths += alive
        if record:
            history.append(cur)
    if record:
        return cur, lengths, np.stack(history)
    return cur, lengths


def apply_action(s: PuzzleState, a: int) -> PuzzleState:
    if not 0 <= int(a) < N_ACTIONS:
        raise ValueError(f"action must be in [0, 4], got {a}")
    nxt = step_batch(s.planes[None], np.array([int(a)]))[0]
    return PuzzleState(nxt, check=False)


def truncate_at_stop(plan: Sequence[int]) -> list[int]:
    out = []
    for a in plan:
        if int(a) == STOP:
            break
        out.append(int(a))
    return out


def run_plan(s: PuzzleState, plan: Sequence[int]) -> Trajectory:
    """Execute ``plan`` from ``s``; the first stop ends execution."""
    executed = truncate_at_stop(plan)
    states = [s]
    for a in executed:
        states.append(apply_action(states[-1], a))
    return Trajectory(states, executed)


def run_executed(s: PuzzleState, plan: Sequence[int]) -> Trajectory:
    """Execute an already stop-free action list (segment plans concatenated)."""
    states = [s]
    for a in plan:
        if int(a) == STOP:
            raise ValueError("executed plans must not contain stop")
        states.append(apply_action(states[-1], a))
    return Trajectory(states, [int(a) for a in plan])


def _planes_of(x) -> np.ndarray:
    if isinstance(x, PuzzleState):
        return x.planes
    return np.asarray(x)


def distance(x, y, player_weight: float = DEFAULT_PLAYER_WEIGHT) -> float:
    """Weighted L1 gap between the box and player planes of ``x`` and ``y``.

    Either argument may be a :class:`PuzzleState` or a real-valued
    ``(4, H, W)`` goal array.
    """
    xp, yp = _planes_of(x), _planes_of(y)
    if xp.shape != yp.shape:
        raise ValueError(f"shape mismatch: {xp.shape} vs {yp.shape}")
    xp = xp.astype(np.float64)
    yp = yp.astype(np.float64)
    return float(
        np.abs(xp[BOX] - yp[BOX]).sum() + player_weight * np.abs(xp[PLAYER] - yp[PLAYER]).sum()
    )


def distance_batch(xs: np.ndarray, ys: np.ndarray, player_weight: float = DEFAULT_PLAYER_WEIGHT) -> np.ndarray:
    """Row-wise :func:`distance` for ``(N, 4, H, W)`` stacks (``ys`` may broadcast)."""
    xs = np.asarray(xs, dtype=np.float32)
    ys = np.asarray(ys, dtype=np.float32)
    if xs.shape[1:] != ys.shape[1:]:
        raise ValueError(f"shape mismatch: {xs.shape} vs {ys.shape}")
    box = np.abs(xs[:, BOX] - ys[:, BOX]).sum(axis=(1, 2), dtype=np.float64)
    player = np.abs(xs[:, PLAYER] - ys[:, PLAYER]).sum(axis=(1, 2), dtype=np.float64)
    return box + player_weight * player


def is_solved(s: PuzzleState) -> bool:
    return bool(np.array_equal(s.planes[BOX], s.planes[GOAL]))


def solved_batch(boards: np.ndarray) -> np.ndarray:
    return np.all(boards[:, BOX] == boards[:, GOAL], axis=(1, 2))


def stack_states(states: Sequence[PuzzleState]) -> np.ndarray:
    return np.stack([s.planes for s in states])


def unstack_states(boards: np.ndarray) -> list[PuzzleState]:
    return [PuzzleState(b, check=False) for b in boards]
