"""Draw landmark trees as text or as a PPM image.

Row ``k`` of the figure shows the start, the landmarks of every node within
``k`` levels of the root (in plan order) and the target.  Continuous MS
predictions are turned into boards by a per-cell argmax over
floor/player/wall/box, with the goal channel overlaid when above one half.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .hierarchy import LandmarkTree
from .levels import cell_glyph
from .sokoban import BOX, GOAL, PLAYER, WALL

# floor, player, wall, box
_COLORS = np.array([[235, 235, 235], [40, 110, 220], [70, 70, 70], [200, 140, 40]], dtype=np.float64)
_GOAL_COLOR = np.array([220, 40, 40], dtype=np.float64)


def cell_classes(planes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell class (0 floor, 1 player, 2 wall, 3 box), confidence and goal flag."""
    x = np.clip(np.asarray(planes, dtype=np.float64), 0.0, 1.0)
    occupied = np.stack([x[PLAYER], x[WALL], x[BOX]])
    scores = np.concatenate([1.0 - occupied.max(axis=0)[None], occupied])
    cls = scores.argmax(axis=0)
    conf = np.take_along_axis(scores, cls[None], axis=0)[0]
    return cls, conf, x[GOAL] > 0.5


def board_lines(planes: np.ndarray) -> list[str]:
    cls, _, goal = cell_classes(planes)
    return ["".join(cell_glyph(c == 1, c == 2, c == 3, bool(g)) for c, g in zip(row, grow))
            for row, grow in zip(cls, goal)]


def _in_order(tree: LandmarkTree, min_level: int) -> list[np.ndarray]:
    if tree.level < min_level or not tree.children:
        return []
    left, right = tree.children
    return _in_order(left, min_level) + [tree.predicted_w] + _in_order(right, min_level)


def landmark_rows(tree: LandmarkTree) -> list[list[np.ndarray]]:
    """Boards for each row: start, landmarks down to a given depth, target."""
    start = tree.problem.u.planes
    target = tree.problem.v
    return [[start] + _in_order(tree, tree.level - k + 1) + [target] for k in range(1, tree.level + 1)]


def render_ascii(tree: LandmarkTree, sep: str = " ") -> str:
    blocks = []
    for k, row in enumerate(landmark_rows(tree), start=1):
        boards = [board_lines(b) for b in row]
        lines = [sep.join(parts) for parts in zip(*boards)]
        blocks.append(f"depth {k}\n" + "\n".join(lines))
    if not blocks:
        blocks.append("depth 0\n" + "\n".join(
            a + sep + b for a, b in zip(board_lines(tree.problem.u.planes), board_lines(tree.problem.v))))
    return "\n\n".join(blocks) + "\n"


def _board_pixels(planes: np.ndarray, cell: int) -> np.ndarray:
    cls, conf, goal = cell_classes(planes)
    rgb = _COLORS[cls]
    # low confidence fades toward white
    rgb = 255.0 - conf[..., None] * (255.0 - rgb)
    img = np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)
    if goal.any():
        m = max(1, cell // 4)
        rr, cc = np.nonzero(goal)
        for r, c in zip(rr, cc):
            img[r * cell + m:(r + 1) * cell - m, c * cell + m:(c + 1) * cell - m] = \
                0.5 * img[r * cell + m:(r + 1) * cell - m, c * cell + m:(c + 1) * cell - m] + 0.5 * _GOAL_COLOR
    return img


def render_image(tree: LandmarkTree, cell: int = 8, gap: int = 4) -> np.ndarray:
    """RGB uint8 image of the landmark rows."""
    rows = landmark_rows(tree) or [[tree.problem.u.planes, tree.problem.v]]
    h, w = tree.problem.u.shape
    bh, bw = h * cell, w * cell
    ncols = max(len(r) for r in rows)
    img = np.full((len(rows) * (bh + gap) + gap, ncols * (bw + gap) + gap, 3), 255.0)
    for i, row in enumerate(rows):
        for j, board in enumerate(row):
            y, x = gap + i * (bh + gap), gap + j * (bw + gap)
            img[y:y + bh, x:x + bw] = _board_pixels(board, cell)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_ppm(path, img: np.ndarray) -> None:
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def render_landmarks(tree: LandmarkTree, fmt: str = "ascii"):
    """ASCII text, or an RGB array for ``fmt="image"``."""
    if fmt == "ascii":
        return render_ascii(tree)
    if fmt == "image":
        return render_image(tree)
    raise ValueError(f"unknown render format {fmt!r}")
