"""Level ingestion, serialization, procedural generation and evaluation targets."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .sokoban import (
    BOX,
    DCOL,
    DROW,
    GOAL,
    PLAYER,
    WALL,
    PuzzleState,
    is_solved,
    run_plan,
)

GLYPHS = {
    "#": (0, 1, 0, 0),
    "@": (1, 0, 0, 0),
    "+": (1, 0, 0, 1),
    "$": (0, 0, 1, 0),
    "*": (0, 0, 1, 1),
    ".": (0, 0, 0, 1),
    " ": (0, 0, 0, 0),
}

SPLITS = ("train", "valid", "test", "generated")


class LevelFormatError(ValueError):
    """Malformed level text; the message names the level id and row."""


@dataclass
class LevelSet:
    levels: list[PuzzleState]
    split_tag: str = "train"
    source: str = ""
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.split_tag not in SPLITS:
            raise ValueError(f"unknown split tag {self.split_tag!r}")
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.levels))]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    def __iter__(self):
        return iter(self.levels)


def _parse_block(level_id: str, rows: list[str], shape) -> PuzzleState:
    if shape is not None and len(rows) != shape[0]:
        raise LevelFormatError(f"level {level_id}: expected {shape[0]} rows, got {len(rows)}")
    width = shape[1] if shape is not None else len(rows[0])
    planes = np.zeros((4, len(rows), width), dtype=np.uint8)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise LevelFormatError(
                f"level {level_id}, row {r}: expected {width} characters, got {len(row)}"
            )
        for c, ch in enumerate(row):
            try:
                planes[:, r, c] = GLYPHS[ch]
            except KeyError:
                raise LevelFormatError(
                    f"level {level_id}, row {r}, column {c}: unknown character {ch!r}"
                ) from None
    n_players = int(planes[PLAYER].sum())
    if n_players != 1:
        raise LevelFormatError(f"level {level_id}: expected one player, found {n_players}")
    n_box, n_goal = int(planes[BOX].sum()), int(planes[GOAL].sum())
    if n_box != n_goal:
        raise LevelFormatError(f"level {level_id}: {n_box} boxes but {n_goal} goals")
    return PuzzleState(planes)


def parse_boxoban(text: str, *, shape: tuple[int, int] | None = None, split_tag: str = "train",
                  source: str = "") -> LevelSet:
    """Parse Boxoban-format text.

    Each level is an optional ``; <id>`` comment line followed by its grid
    rows; blank lines and comment lines separate levels.  With ``shape``
    given (``(10, 10)`` for the official files) row counts and widths are
    checked against it, otherwise each block only has to be rectangular.
    """
    levels, ids = [], []
    rows: list[str] = []
    current_id = None

    def flush():
        nonlocal rows, current_id
        if rows:
            level_id = current_id if current_id is not None else str(len(levels))
            levels.append(_parse_block(level_id, rows, shape))
            ids.append(level_id)
        rows = []
        current_id = None

    for line in text.split("\n"):
        line = line.rstrip("\r")
        if line.startswith(";"):
            flush()
            current_id = line[1:].strip()
        elif line == "":
            flush()
        else:
            rows.append(line)
    flush()
    return LevelSet(levels, split_tag=split_tag, source=source, ids=ids)


def read_level_file(path, **kwargs) -> LevelSet:
    path = Path(path)
    kwargs.setdefault("source", str(path))
    return parse_boxoban(path.read_text(), **kwargs)


def cell_glyph(player: bool, wall: bool, box: bool, goal: bool) -> str:
    if wall:
        return "#"
    if box:
        return "*" if goal else "$"
    if player:
        return "+" if goal else "@"
    return "." if goal else " "


def serialize_level(s: PuzzleState) -> str:
    p = s.planes.astype(bool)
    return "\n".join(
        "".join(cell_glyph(p[PLAYER, r, c], p[WALL, r, c], p[BOX, r, c], p[GOAL, r, c])
                for c in range(s.width))
        for r in range(s.height)
    )


def serialize_levels(levels: Iterable[PuzzleState], ids: Sequence[str] | None = None) -> str:
    blocks = []
    for i, s in enumerate(levels):
        level_id = ids[i] if ids is not None else str(i)
        blocks.append(f"; {level_id}\n{serialize_level(s)}\n")
    return "\n".join(blocks)


def write_level_file(path, levels: LevelSet | Sequence[PuzzleState]) -> None:
    ids = levels.ids if isinstance(levels, LevelSet) else None
    Path(path).write_text(serialize_levels(list(levels), ids))


# --------------------------------------------------------------------------
# procedural generation by reverse play


@dataclass(frozen=True)
class GeneratorParams:
    width: int = 10
    height: int = 10
    n_boxes: int = 4
    wall_density: float = 0.15
    reverse_steps: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.n_boxes < 1:
            raise ValueError("n_boxes must be >= 1")
        if self.width < 3 or self.height < 3:
            raise ValueError("board must be at least 3x3")
        if (self.width - 2) * (self.height - 2) < self.n_boxes + 2:
            raise ValueError("board interior too small for boxes and player")
        if not 0.0 <= self.wall_density < 1.0:
            raise ValueError("wall_density must be in [0, 1)")
        if self.reverse_steps < 0:
            raise ValueError("reverse_steps must be >= 0")


class GeneratorError(RuntimeError):
    pass


MAX_GENERATOR_ATTEMPTS = 32


def _neighbors(h, w, r, c):
    for a in range(4):
        rr, cc = r + DROW[a], c + DCOL[a]
        if 0 <= rr < h and 0 <= cc < w:
            yield a, int(rr), int(cc)


def _largest_component(floor: np.ndarray) -> np.ndarray:
    h, w = floor.shape
    seen = np.zeros_like(floor, dtype=bool)
    best = np.zeros_like(floor, dtype=bool)
    for r0, c0 in zip(*np.nonzero(floor)):
        if seen[r0, c0]:
            continue
        comp = np.zeros_like(floor, dtype=bool)
        queue = deque([(int(r0), int(c0))])
        seen[r0, c0] = comp[r0, c0] = True
        while queue:
            r, c = queue.popleft()
            for _, rr, cc in _neighbors(h, w, r, c):
                if floor[rr, cc] and not seen[rr, cc]:
                    seen[rr, cc] = comp[rr, cc] = True
                    queue.append((rr, cc))
        if comp.sum() > best.sum():
            best = comp
    return best


def _walk_tree(free: np.ndarray, start: tuple[int, int]) -> dict:
    """BFS parents over free cells: cell -> (previous cell, action taken)."""
    h, w = free.shape
    parents = {start: None}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for a, rr, cc in _neighbors(h, w, r, c):
            if free[rr, cc] and (rr, cc) not in parents:
                parents[(rr, cc)] = ((r, c), a)
                queue.append((rr, cc))
    return parents


def _path_to(parents: dict, cell) -> list[int]:
    moves = []
    while parents[cell] is not None:
        cell, a = parents[cell]
        moves.append(a)
    return moves[::-1]


def _opposite(a: int) -> int:
    return 3 - a


def _try_generate(p: GeneratorParams, rng: np.random.Generator):
    h, w = p.height, p.width
    interior = np.zeros((h, w), dtype=bool)
    interior[1:-1, 1:-1] = True
    floor = interior & (rng.random((h, w)) >= p.wall_density)
    floor = _largest_component(floor)
    cells = np.argwhere(floor)
    if len(cells) < p.n_boxes + 2:
        return None
    wall = ~floor
    pick = rng.choice(len(cells), size=p.n_boxes, replace=False)
    box = np.zeros((h, w), dtype=bool)
    box[tuple(cells[pick].T)] = True
    goal = box.copy()

    player_options = [
        (rr, cc)
        for r, c in cells[pick]
        for _, rr, cc in _neighbors(h, w, int(r), int(c))
        if floor[rr, cc] and not box[rr, cc]
    ]
    if not player_options:
        free = np.argwhere(floor & ~box)
        player_options = [tuple(int(x) for x in free[rng.integers(len(free))])]
    player = tuple(int(x) for x in player_options[rng.integers(len(player_options))])

    reverse_moves: list[int] = []
    pulls = 0
    while pulls < p.reverse_steps:
        parents = _walk_tree(floor & ~box, player)
        options = []
        for (r, c) in parents:
            for a, rr, cc in _neighbors(h, w, r, c):
                # pulling in direction a: player steps to (rr, cc), box behind follows
                br, bc = r - DROW[a], c - DCOL[a]
                if not (0 <= br < h and 0 <= bc < w):
                    continue
                if floor[rr, cc] and not box[rr, cc] and box[br, bc]:
                    options.append(((r, c), a))
        if not options:
            break
        cell, a = options[rng.integers(len(options))]
        reverse_moves.extend(_path_to(parents, cell))
        player = cell
        while True:
            r, c = player
            rr, cc = r + DROW[a], c + DCOL[a]
            br, bc = r - DROW[a], c - DCOL[a]
            box[br, bc] = False
            box[r, c] = True
            player = (int(rr), int(cc))
            reverse_moves.append(a)
            pulls += 1
            nr, nc = player[0] + DROW[a], player[1] + DCOL[a]
            can_continue = 0 <= nr < h and 0 <= nc < w and floor[nr, nc] and not box[nr, nc]
            if pulls >= p.reverse_steps or not can_continue or rng.random() < 0.5:
                break

    planes = np.zeros((4, h, w), dtype=np.uint8)
    planes[PLAYER][player] = 1
    planes[WALL] = wall
    planes[BOX] = box
    planes[GOAL] = goal
    level = PuzzleState(planes)
    witness = [_opposite(a) for a in reversed(reverse_moves)]
    traj = run_plan(level, witness)
    for t, s in enumerate(traj.states):
        if is_solved(s):
            witness = witness[:t]
            break
    return level, witness


def generate_level(params: GeneratorParams) -> tuple[PuzzleState, list[int]]:
    """Generate a level and a witness plan that solves it.

    Boxes start on their goals and the player makes ``reverse_steps`` random
    pulls, walking freely between them; the recorded moves reversed and
    inverted form the witness, cut at the first solved prefix.
    """
    for attempt in range(MAX_GENERATOR_ATTEMPTS):
        rng = np.random.default_rng([params.seed, attempt])
        out = _try_generate(params, rng)
        if out is None:
            continue
        level, witness = out
        if params.reverse_steps == 0 or not is_solved(level):
            return level, witness
    raise GeneratorError(
        f"no non-trivial level after {MAX_GENERATOR_ATTEMPTS} attempts for {params}"
    )


def generate_levels(params: GeneratorParams, n: int) -> tuple[LevelSet, list[list[int]]]:
    levels, witnesses, ids = [], [], []
    for k in range(n):
        sub = GeneratorParams(params.width, params.height, params.n_boxes, params.wall_density,
                              params.reverse_steps, seed=params.seed * 1_000_003 + k)
        level, witness = generate_level(sub)
        levels.append(level)
        witnesses.append(witness)
        ids.append(str(k))
    return LevelSet(levels, "generated", source=f"generator seed={params.seed}", ids=ids), witnesses


# --------------------------------------------------------------------------
# evaluation targets


def empty_cells(s: PuzzleState) -> np.ndarray:
    """Cells where the player may stand once every box sits on a goal."""
    return np.argwhere((s.wall == 0) & (s.goal == 0))


def make_targets(s: PuzzleState, mode: str = "all_empty",
                 rng: np.random.Generator | int | None = None) -> list[PuzzleState]:
    cells = empty_cells(s)
    if len(cells) == 0:
        raise ValueError("no empty cell available for the player")
    if mode == "single_random":
        rng = np.random.default_rng(rng)
        cells = cells[[rng.integers(len(cells))]]
    elif mode != "all_empty":
        raise ValueError(f"unknown targets mode {mode!r}")
    base = s.planes.copy()
    base[BOX] = base[GOAL]
    base[PLAYER] = 0
    targets = []
    for r, c in cells:
        t = base.copy()
        t[PLAYER, r, c] = 1
        targets.append(PuzzleState(t, check=False))
    return targets
