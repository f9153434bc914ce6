"""Independent reference implementations used to check the fast paths.

Nothing here shares code with the batched emulator, the search routines or
the network library; everything is deliberately written the slow, obvious
way.
"""
from __future__ import annotations

from collections import deque
from typing import Callable, Sequence

import numpy as np

MOVES = {0: (-1, 0), 1: (0, 1), 2: (0, -1), 3: (1, 0)}


def naive_step(planes: np.ndarray, action: int) -> np.ndarray:
    """Grid-walk Sokoban step on plain nested lists."""
    player = [[int(v) for v in row] for row in planes[0]]
    wall = [[int(v) for v in row] for row in planes[1]]
    box = [[int(v) for v in row] for row in planes[2]]
    goal = [[int(v) for v in row] for row in planes[3]]
    h, w = len(wall), len(wall[0])
    if action not in MOVES:
        return np.array([player, wall, box, goal], dtype=np.uint8)
    pr = pc = None
    for r in range(h):
        for c in range(w):
            if player[r][c]:
                pr, pc = r, c
    dr, dc = MOVES[action]
    r1, c1 = pr + dr, pc + dc

    def inside(r, c):
        return 0 <= r < h and 0 <= c < w

    if inside(r1, c1) and not wall[r1][c1]:
        if box[r1][c1]:
            r2, c2 = r1 + dr, c1 + dc
            if inside(r2, c2) and not wall[r2][c2] and not box[r2][c2]:
                box[r1][c1] = 0
                box[r2][c2] = 1
                player[pr][pc] = 0
                player[r1][c1] = 1
        else:
            player[pr][pc] = 0
            player[r1][c1] = 1
    return np.array([player, wall, box, goal], dtype=np.uint8)


def naive_distance(x: np.ndarray, y: np.ndarray, player_weight: float) -> float:
    total = 0.0
    for r in range(x.shape[1]):
        for c in range(x.shape[2]):
            total += abs(float(x[2, r, c]) - float(y[2, r, c]))
            total += player_weight * abs(float(x[0, r, c]) - float(y[0, r, c]))
    return total


def bfs_states(planes: np.ndarray, max_depth: int) -> dict[bytes, tuple[np.ndarray, int]]:
    """Every state reachable within ``max_depth`` moves, with its depth."""
    start = np.asarray(planes, dtype=np.uint8)
    seen = {start.tobytes(): (start, 0)}
    frontier = deque([(start, 0)])
    while frontier:
        s, depth = frontier.popleft()
        if depth == max_depth:
            continue
        for a in range(4):
            nxt = naive_step(s, a)
            key = nxt.tobytes()
            if key not in seen:
                seen[key] = (nxt, depth + 1)
                frontier.append((nxt, depth + 1))
    return seen


def bfs_best_distance(planes: np.ndarray, goal: np.ndarray, max_depth: int, player_weight: float,
                      flee: bool = False) -> float:
    """Optimal (min, or max when fleeing) distance over plans of at most ``max_depth`` moves."""
    values = [naive_distance(s, goal, player_weight) for s, _ in bfs_states(planes, max_depth).values()]
    return max(values) if flee else min(values)


def bfs_solve(planes: np.ndarray, max_states: int = 200_000) -> list[int] | None:
    """Shortest solution by breadth-first search, ``None`` if none within budget."""
    start = np.asarray(planes, dtype=np.uint8)
    if np.array_equal(start[2], start[3]):
        return []
    parents = {start.tobytes(): None}
    frontier = deque([start])
    while frontier and len(parents) < max_states:
        s = frontier.popleft()
        for a in range(4):
            nxt = naive_step(s, a)
            key = nxt.tobytes()
            if key in parents:
                continue
            parents[key] = (s.tobytes(), a)
            if np.array_equal(nxt[2], nxt[3]):
                plan = []
                while parents[key] is not None:
                    key, act = parents[key]
                    plan.append(act)
                return plan[::-1]
            frontier.append(nxt)
    return None


def naive_conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 convolution (cross-correlation) by nested loops, NCHW."""
    n, c, h, wd = x.shape
    f = w.shape[0]
    out = np.zeros((n, f, h, wd), dtype=np.float64)
    for i in range(n):
        for o in range(f):
            for r in range(h):
                for q in range(wd):
                    acc = float(b[o])
                    for ch in range(c):
                        for dr in range(3):
                            for dq in range(3):
                                rr, qq = r + dr - 1, q + dq - 1
                                if 0 <= rr < h and 0 <= qq < wd:
                                    acc += float(x[i, ch, rr, qq]) * float(w[o, ch, dr, dq])
                    out[i, o, r, q] = acc
    return out


def finite_difference(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-3,
                      skip: Callable[[], object] | None = None):
    """Central differences of ``f`` with respect to every entry of ``arr`` (mutated in place).

    When ``skip`` is given it is evaluated at ``+eps`` and ``-eps``; entries
    where the two results differ (an activation pattern flip) are reported
    as NaN because the function is not differentiable across that interval.
    """
    grad = np.zeros(arr.shape, dtype=np.float64)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + eps
        fp = f()
        sp = skip() if skip else None
        arr[idx] = orig - eps
        fm = f()
        sm = skip() if skip else None
        arr[idx] = orig
        if skip is not None and not _same(sp, sm):
            grad[idx] = np.nan
        else:
            grad[idx] = (fp - fm) / (2 * eps)
    return grad


def _same(a, b) -> bool:
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(a, b))


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-relative error over the entries where the numeric gradient is defined."""
    ok = ~np.isnan(numeric)
    a = np.asarray(analytic, dtype=np.float64)[ok]
    n = numeric[ok]
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def hand_adam(theta: float, grads: Sequence[float], lr: float, b1=0.9, b2=0.999, eps=1e-8) -> float:
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta -= lr * mhat / (vhat ** 0.5 + eps)
    return theta


def relu_pattern(tape) -> list[np.ndarray]:
    """Which ReLU units were active in a recorded forward pass."""
    out = []
    for kind, _, _, _, cache in tape.caches:
        if kind == "relu":
            out.append(cache)
        elif kind == "resnet_block":
            out += [cache[1] > 0, cache[3] > 0]
    return out


def gradient_check(net, params, x: np.ndarray, rng: np.random.Generator, eps: float = 1e-3):
    """Relative error of backprop against central differences, per tensor and for the input.

    The loss is a fixed random projection of the output, accumulated in
    float64.  Returns ``(errors, n_skipped)``; ``errors`` has one entry per
    tensor, one for the input and ``"all"`` over every coordinate together.
    """
    from . import nn

    y0, _ = nn.forward(net, params, x)
    proj = rng.normal(size=y0.shape)

    def loss():
        y, _ = nn.forward(net, params, x)
        return float((y.astype(np.float64) * proj).sum())

    def pattern():
        return relu_pattern(nn.forward(net, params, x)[1])

    _, tape = nn.forward(net, params, x)
    grads = nn.backward(tape, proj.astype(np.float32))
    errors, skipped = {}, 0
    every_g, every_fd = [], []
    for name in sorted(params.tensors):
        fd = finite_difference(loss, params.tensors[name], eps, pattern)
        skipped += int(np.isnan(fd).sum())
        errors[name] = relative_error(grads[name], fd)
        every_g.append(grads[name].ravel())
        every_fd.append(fd.ravel())
    fd = finite_difference(loss, x, eps, pattern)
    skipped += int(np.isnan(fd).sum())
    errors["input"] = relative_error(tape.input_grad, fd)
    every_g.append(tape.input_grad.ravel())
    every_fd.append(fd.ravel())
    errors["all"] = relative_error(np.concatenate(every_g), np.concatenate(every_fd))
    return errors, skipped
