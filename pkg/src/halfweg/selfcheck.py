"""Quick comparisons of the fast code paths against the slow oracles."""
from __future__ import annotations

import time

import numpy as np

from . import nn, oracles
from .search import exhaustive_search_batch, signed_scores
from .sokoban import DEFAULT_PLAYER_WEIGHT, step_batch


def random_board(rng: np.random.Generator, h: int, w: int, n_boxes: int | None = None,
                 wall_p: float = 0.2) -> np.ndarray:
    """A random valid board: walls anywhere, boxes and the player on free cells."""
    wall = rng.random((h, w)) < wall_p
    free = np.flatnonzero(~wall)
    if len(free) < 3:
        wall[:] = False
        free = np.arange(h * w)
    k = n_boxes if n_boxes is not None else int(rng.integers(1, min(4, len(free) - 1) + 1))
    cells = rng.choice(free, size=k + 1, replace=False)
    board = np.zeros((4, h, w), dtype=np.uint8)
    board[1] = wall
    board[0].flat[cells[0]] = 1
    board[2].flat[cells[1:]] = 1
    goals = rng.choice(free, size=k, replace=False)
    board[3].flat[goals] = 1
    return board


def layer_case(kind: str, rng: np.random.Generator):
    """A one-layer net of ``kind`` with random shapes, random parameters and a matching input."""
    b, c, f = (int(v) for v in rng.integers(1, 4, size=3))
    h, w = (int(v) for v in rng.integers(2, 5, size=2))
    net = {"conv3x3": [nn.conv3x3(c, f)], "resnet_block": [nn.resnet_block(c)],
           "linear": [nn.linear(c * h * w, f)], "relu": [nn.relu()],
           "softmax_over_last": [nn.softmax_over_last()], "reshape": [nn.reshape(h * w, c)]}[kind]
    params = nn.init_params(net, rng)
    for name in params.tensors:
        params.tensors[name] = (rng.normal(size=params.tensors[name].shape) * 0.5).astype(np.float32)
    x = rng.normal(size=(b, c, h, w)).astype(np.float32)
    return net, params, x


def check_emulator(n: int, rng: np.random.Generator) -> tuple[bool, str]:
    mismatches = 0
    for shape in ((6, 6), (10, 10)):
        boards = np.stack([random_board(rng, *shape) for _ in range(n // 2)])
        actions = rng.integers(0, 5, size=len(boards))
        fast = step_batch(boards, actions)
        for b, a, f in zip(boards, actions, fast):
            if not np.array_equal(oracles.naive_step(b, int(a)), f):
                mismatches += 1
    return mismatches == 0, f"{n} pairs, {mismatches} mismatches"


def check_exhaustive(n: int, rng: np.random.Generator) -> tuple[bool, str]:
    bad = 0
    for _ in range(n):
        u = random_board(rng, 6, 6, n_boxes=1)
        reach = list(oracles.bfs_states(u, 4).values())
        v = reach[int(rng.integers(len(reach)))][0].astype(np.float32)
        out = exhaustive_search_batch(u[None], v[None], [0])
        got = float(signed_scores(out.finals, v[None], [0])[0])
        want = oracles.bfs_best_distance(u, v, 4, DEFAULT_PLAYER_WEIGHT)
        bad += abs(got - want) > 1e-9
    return bad == 0, f"{n} problems, {bad} suboptimal"


def check_conv(rng: np.random.Generator) -> tuple[bool, str]:
    layer = [nn.conv3x3(3, 5)]
    params = nn.init_params(layer, rng)
    params.tensors["0.b"][:] = rng.normal(size=5)
    x = rng.normal(size=(2, 3, 5, 4)).astype(np.float32)
    y, _ = nn.forward(layer, params, x)
    ref = oracles.naive_conv3x3(x, params.tensors["0.w"], params.tensors["0.b"])
    err = float(np.abs(y - ref).max())
    return err < 1e-4, f"max abs error {err:.2e}"


def run_selfcheck(quick: bool = False, seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in (
        ("emulator vs naive simulator", lambda: check_emulator(1000 if quick else 10_000, rng)),
        ("exhaustive search vs BFS", lambda: check_exhaustive(20 if quick else 200, rng)),
        ("conv3x3 vs nested loops", lambda: check_conv(rng)),
    ):
        t0 = time.perf_counter()
        ok, detail = fn()
        out.append((name, ok, f"{detail} ({time.perf_counter() - t0:.1f}s)"))
    return out
