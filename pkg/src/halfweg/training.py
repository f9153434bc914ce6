"""Self-play, search distillation and gradient updates."""
from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .hierarchy import PlanningProblem, rollout_batch
from .levels import LevelSet
from .models import Ensemble, encode_batch, ma_forward, ms_forward
from .search import ensemble_search_batch
from .sokoban import DEFAULT_PLAYER_WEIGHT, STOP, PuzzleState, run_plan_batch, step_batch


@dataclass
class IterationConfig:
    episodes: int = 256
    episode_length: int = 200
    p_random: float = 0.2
    problems: int = 1024
    n_dss: int = 100
    batch_size: int = 256
    epochs: int = 1
    R: int = 5
    d: int = 4
    lr: float = 1e-3
    refinement: bool = True
    exclude_top_search: bool = False
    buffer_capacity: int = 500_000
    player_weight: float = DEFAULT_PLAYER_WEIGHT
    global_stop: bool = False
    search_chunk_rows: int = 8192
    same_level_goals: float = 0.0

    def __post_init__(self):
        for f in ("episodes", "episode_length", "problems", "n_dss", "batch_size", "epochs", "R", "d",
                  "buffer_capacity"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if not 0.0 <= self.p_random <= 1.0:
            raise ValueError("p_random must be in [0, 1]")
        if not 0.0 <= self.same_level_goals <= 1.0:
            raise ValueError("same_level_goals must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "IterationConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


class ReplayBuffer:
    """Fixed-capacity ring of boards with the index of the level they came from."""

    def __init__(self, capacity: int, shape: tuple[int, int]):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.shape = tuple(shape)
        self.boards = np.zeros((capacity, 4) + self.shape, dtype=np.uint8)
        self.level_ids = np.full(capacity, -1, dtype=np.int64)
        self.size = 0
        self.pushes = 0
        self._next = 0
        self._groups = None

    def __len__(self):
        return self.size

    def push(self, boards: np.ndarray, level_ids) -> None:
        boards = np.asarray(boards, dtype=np.uint8)
        level_ids = np.broadcast_to(np.asarray(level_ids, dtype=np.int64), (len(boards),))
        if len(boards) > self.capacity:
            boards = boards[-self.capacity:]
            level_ids = level_ids[-self.capacity:]
        n = len(boards)
        slots = (self._next + np.arange(n)) % self.capacity
        self.boards[slots] = boards
        self.level_ids[slots] = level_ids
        self._next = int((self._next + n) % self.capacity)
        self.size = min(self.capacity, self.size + n)
        self.pushes += n
        self._groups = None

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("replay buffer is empty")
        return rng.integers(self.size, size=n)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.boards[self.sample_indices(rng, n)]

    def sample_like(self, rng: np.random.Generator, level_ids) -> np.ndarray:
        """Indices of uniformly drawn stored states, one per entry of ``level_ids``,
        each from that level.  Levels with nothing stored fall back to any state."""
        level_ids = np.asarray(level_ids, dtype=np.int64)
        if self.size == 0:
            raise ValueError("replay buffer is empty")
        if self._groups is None:
            order = np.argsort(self.level_ids[: self.size], kind="stable")
            self._groups = (order, self.level_ids[order])
        order, sorted_ids = self._groups
        lo = np.searchsorted(sorted_ids, level_ids, "left")
        hi = np.searchsorted(sorted_ids, level_ids, "right")
        count = hi - lo
        pick = lo + (rng.random(len(level_ids)) * count).astype(np.int64)
        out = order[np.minimum(pick, self.size - 1)]
        missing = count == 0
        if missing.any():
            out[missing] = rng.integers(self.size, size=int(missing.sum()))
        return out

    def states(self) -> list[PuzzleState]:
        return [PuzzleState(b, check=False) for b in self.boards[: self.size]]


def random_walk(boards: np.ndarray, steps: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Walk each board for its own number of random moves."""
    steps = np.asarray(steps)
    cur = np.asarray(boards, dtype=np.uint8)
    for t in range(int(steps.max(initial=0))):
        a = np.where(steps > t, rng.integers(0, 4, size=len(cur)), STOP)
        cur = step_batch(cur, a)
    return cur


def self_play(levels: LevelSet, ens: Ensemble, buffer: ReplayBuffer, cfg: IterationConfig,
              rng: np.random.Generator) -> dict:
    """Explore the levels and push every visited state into ``buffer``.

    Episodes run in lockstep.  At each decision an episode either takes one
    to four random moves or runs a random policy level toward (b = 0) or
    away from (b = 1) a goal drawn from the buffer.  When the buffer was
    empty on entry, goals are random-walk states of the episode's own level.
    """
    if len(levels) == 0:
        raise ValueError("self-play needs at least one level")
    cold = len(buffer) == 0
    starts = np.stack([s.planes for s in levels.levels])
    n = cfg.episodes
    level_idx = rng.integers(len(levels), size=n)
    cur = starts[level_idx].copy()
    buffer.push(cur, level_idx)
    executed = np.zeros(n, dtype=np.int64)
    decisions = 0
    policy_calls = Counter()
    pushed = n
    while True:
        active = np.nonzero(executed < cfg.episode_length)[0]
        if len(active) == 0 or decisions >= 2 * cfg.episode_length:
            break
        decisions += 1
        explore = rng.random(len(active)) < cfg.p_random
        walkers = active[explore]
        if len(walkers):
            k = rng.integers(1, 5, size=len(walkers))
            acts = rng.integers(0, 4, size=(len(walkers), 4))
            acts[np.arange(4)[None, :] >= k[:, None]] = STOP
            ends, lengths, hist = run_plan_batch(cur[walkers], acts, record=True)
            pushed += _push_history(buffer, hist, lengths, level_idx[walkers])
            cur[walkers] = ends
            executed[walkers] += lengths
        planners = active[~explore]
        if len(planners) == 0:
            continue
        tiers = rng.integers(0, cfg.R + 1, size=len(planners))
        bs = rng.integers(0, 2, size=len(planners))
        if cold:
            goals = random_walk(starts[level_idx[planners]], rng.integers(1, 21, size=len(planners)), rng)
        else:
            goals = buffer.boards[mixed_goal_indices(buffer, rng, level_idx[planners], cfg.same_level_goals)]
        for tier in np.unique(tiers):
            sel = tiers == tier
            rows = planners[sel]
            out = rollout_batch(ens, int(tier), cur[rows], goals[sel].astype(np.float32), bs[sel],
                                global_stop=cfg.global_stop)
            _, lengths, hist = run_plan_batch(cur[rows], out.plans, record=True)
            pushed += _push_history(buffer, hist, lengths, level_idx[rows])
            cur[rows] = out.finals
            # empty plans still use up a decision so episodes always end
            executed[rows] += np.maximum(lengths, 1)
            policy_calls[int(tier)] += len(rows)
    return {"pushed": pushed, "decisions": decisions, "cold_start": cold,
            "policy_calls": dict(policy_calls)}


def _push_history(buffer: ReplayBuffer, hist: np.ndarray, lengths: np.ndarray, level_ids) -> int:
    # hist is (L + 1, N, ...); row k contributes states 1..lengths[k]
    t = np.arange(1, hist.shape[0])[:, None]
    mask = t <= lengths[None, :]
    if not mask.any():
        return 0
    tt, kk = np.nonzero(mask)
    order = np.lexsort((tt, kk))
    tt, kk = tt[order], kk[order]
    buffer.push(hist[tt + 1, kk], np.asarray(level_ids)[kk])
    return len(tt)


def mixed_goal_indices(buffer: ReplayBuffer, rng: np.random.Generator, level_ids,
                       same_level: float) -> np.ndarray:
    """Buffer indices of goals: from the given levels with probability ``same_level``,
    otherwise uniform over the whole buffer."""
    level_ids = np.asarray(level_ids, dtype=np.int64)
    idx = buffer.sample_indices(rng, len(level_ids))
    if same_level > 0:
        tied = rng.random(len(level_ids)) < same_level
        if tied.any():
            idx[tied] = buffer.sample_like(rng, level_ids[tied])
    return idx


class LevelGoalPool:
    """Subgoal pool for search that draws, per problem, from the problem's own level
    with probability ``same_level``.  Requests must be a multiple of the problem count
    and are laid out problem-major, matching the search routines."""

    def __init__(self, buffer: ReplayBuffer, level_ids, same_level: float):
        self.buffer = buffer
        self.level_ids = np.asarray(level_ids, dtype=np.int64)
        self.same_level = same_level

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        per = n // max(1, len(self.level_ids))
        if per * len(self.level_ids) != n:
            raise ValueError("goal request does not match the problem batch")
        ids = np.repeat(self.level_ids, per)
        return self.buffer.boards[mixed_goal_indices(self.buffer, rng, ids, self.same_level)]


def sample_problems_arrays(buffer: ReplayBuffer, n: int, rng: np.random.Generator,
                           same_level: float = 0.0, return_levels: bool = False):
    if len(buffer) == 0:
        raise ValueError("cannot sample problems from an empty buffer")
    ui = buffer.sample_indices(rng, n)
    levels = buffer.level_ids[ui]
    us = buffer.boards[ui]
    vs = buffer.boards[mixed_goal_indices(buffer, rng, levels, same_level)].astype(np.float32)
    bs = rng.integers(0, 2, size=n)
    if return_levels:
        return us, vs, bs, levels
    return us, vs, bs


def sample_problems(buffer: ReplayBuffer, n: int, rng: np.random.Generator,
                    same_level: float = 0.0) -> list[PlanningProblem]:
    """Uniform start and goal from the buffer, uniform direction flag.

    With ``same_level`` of 0 the goal is independent of the start; otherwise it
    comes from the start's level with that probability.
    """
    if n == 0:
        return []
    us, vs, bs = sample_problems_arrays(buffer, n, rng, same_level)
    return [PlanningProblem(PuzzleState(u, check=False), v, int(b)) for u, v, b in zip(us, vs, bs)]


# --------------------------------------------------------------------------
# training rows


@dataclass
class TrainingRow:
    kind: str
    u: np.ndarray
    v: np.ndarray
    b: int
    r: int | None
    target: np.ndarray


def ms_target_indices(length: int, R: int, d: int) -> list[int]:
    """Trajectory index used as the MS target for depths 1..R."""
    return [min((2 ** (r - 1)) * d, length) for r in range(1, R + 1)]


@dataclass
class RowBatch:
    """Column-stacked training rows for both models."""

    ma_u: np.ndarray
    ma_v: np.ndarray
    ma_b: np.ndarray
    ma_target: np.ndarray
    ms_u: np.ndarray
    ms_v: np.ndarray
    ms_b: np.ndarray
    ms_r: np.ndarray
    ms_target: np.ndarray
    ms_target_index: np.ndarray

    @property
    def n_ma(self) -> int:
        return len(self.ma_u)

    @property
    def n_ms(self) -> int:
        return len(self.ms_u)


def build_rows_batch(us, vs, bs, plans: np.ndarray, lengths: np.ndarray, R: int, d: int,
                     refinement: bool = True) -> RowBatch:
    """Training rows for a batch of solved problems.

    ``plans`` are stop-padded rows whose first ``lengths[k]`` entries are the
    chosen plan for problem ``k``.
    """
    us = np.asarray(us, dtype=np.uint8)
    vs = np.asarray(vs, dtype=np.float32)
    n = len(us)
    bs = np.broadcast_to(np.asarray(bs, dtype=np.int64), (n,))
    plans = np.asarray(plans, dtype=np.int64)
    if plans.shape[1] < d:
        plans = np.concatenate([plans, np.full((n, d - plans.shape[1]), STOP)], axis=1)
    _, _, hist = run_plan_batch(us, plans, record=True)
    cap = plans.shape[1]
    rows = np.arange(n)

    ma_target = plans[:, :d]
    u_d = hist[min(d, cap)]
    zeros = np.zeros(n, dtype=np.int64)

    ms_idx = np.stack([np.minimum((2 ** (r - 1)) * d, lengths) for r in range(1, R + 1)], axis=1)
    ms_tgt = hist[ms_idx.T, rows[None, :]]  # (R, n, 4, H, W)
    u_last = hist[lengths, rows]
    depth = np.repeat(np.arange(1, R + 1), n)

    ma_parts = [(us, vs, bs)]
    ms_parts = [(np.tile(us, (R, 1, 1, 1)), np.tile(vs, (R, 1, 1, 1)), np.tile(bs, R))]
    if refinement:
        ma_parts.append((us, u_d.astype(np.float32), zeros))
        ms_parts.append((np.tile(us, (R, 1, 1, 1)), np.tile(u_last.astype(np.float32), (R, 1, 1, 1)),
                         np.tile(zeros, R)))
    k = len(ma_parts)
    return RowBatch(
        ma_u=np.concatenate([p[0] for p in ma_parts]),
        ma_v=np.concatenate([p[1] for p in ma_parts]),
        ma_b=np.concatenate([p[2] for p in ma_parts]),
        ma_target=np.tile(ma_target, (k, 1)),
        ms_u=np.concatenate([p[0] for p in ms_parts]),
        ms_v=np.concatenate([p[1] for p in ms_parts]),
        ms_b=np.concatenate([p[2] for p in ms_parts]),
        ms_r=np.tile(depth, k),
        ms_target=np.tile(ms_tgt.reshape((R * n,) + ms_tgt.shape[2:]), (k, 1, 1, 1)),
        ms_target_index=np.tile(ms_idx.T.ravel(), k),
    )


def build_rows(problem: PlanningProblem, plan: Sequence[int], R: int, d: int,
               refinement: bool = True) -> list[TrainingRow]:
    """Rows contributed by one problem and its chosen plan."""
    plan = [int(a) for a in plan]
    padded = np.array([plan + [STOP] * max(0, d - len(plan))], dtype=np.int64)
    rb = build_rows_batch(problem.u.planes[None], problem.v[None], [problem.b], padded,
                          np.array([len(plan)]), R, d, refinement)
    rows = [TrainingRow("ma", rb.ma_u[0], rb.ma_v[0], int(rb.ma_b[0]), None, rb.ma_target[0])]
    if refinement:
        rows.append(TrainingRow("ma_refine", rb.ma_u[1], rb.ma_v[1], 0, None, rb.ma_target[1]))
    for j in range(rb.n_ms):
        kind = "ms" if j < R else "ms_refine"
        rows.append(TrainingRow(kind, rb.ms_u[j], rb.ms_v[j], int(rb.ms_b[j]), int(rb.ms_r[j]),
                                rb.ms_target[j]))
    return rows


# --------------------------------------------------------------------------
# gradient updates


def ma_loss_and_grads(ens: Ensemble, u, v, b, target):
    logits, tape = ma_forward(ens, encode_batch(u, v, b), tape=True)
    loss, g = nn.cross_entropy(logits, target)
    return loss, nn.backward(tape, g)


def ms_loss_and_grads(ens: Ensemble, u, v, b, r, target):
    pred, tape = ms_forward(ens, encode_batch(u, v, b, r, ens.cfg.R), tape=True)
    loss, g = nn.mse(pred, target)
    return loss, nn.backward(tape, g)


def fit_rows(ens: Ensemble, rows: RowBatch, cfg: IterationConfig, rng: np.random.Generator) -> dict:
    """Shuffled mini-batch Adam updates of MA (cross-entropy) and MS (MSE)."""
    ma_losses, ms_losses = [], []
    bsz = cfg.batch_size
    for _ in range(cfg.epochs):
        order = rng.permutation(rows.n_ma)
        for lo in range(0, rows.n_ma, bsz):
            sel = order[lo:lo + bsz]
            loss, grads = ma_loss_and_grads(ens, rows.ma_u[sel], rows.ma_v[sel], rows.ma_b[sel],
                                            rows.ma_target[sel])
            nn.optimizer_step(ens.ma, grads, cfg.lr)
            ma_losses.append(loss)
        order = rng.permutation(rows.n_ms)
        for lo in range(0, rows.n_ms, bsz):
            sel = order[lo:lo + bsz]
            loss, grads = ms_loss_and_grads(ens, rows.ms_u[sel], rows.ms_v[sel], rows.ms_b[sel],
                                            rows.ms_r[sel], rows.ms_target[sel])
            nn.optimizer_step(ens.ms, grads, cfg.lr)
            ms_losses.append(loss)
    return {
        "ma_loss_first": ma_losses[0] if ma_losses else float("nan"),
        "ma_loss": float(np.mean(ma_losses[-max(1, len(ma_losses) // cfg.epochs):])) if ma_losses else float("nan"),
        "ms_loss_first": ms_losses[0] if ms_losses else float("nan"),
        "ms_loss": float(np.mean(ms_losses[-max(1, len(ms_losses) // cfg.epochs):])) if ms_losses else float("nan"),
        "ma_losses": ma_losses,
        "ms_losses": ms_losses,
    }


def search_problems(ens: Ensemble, buffer: ReplayBuffer, us, vs, bs, cfg: IterationConfig,
                    rng: np.random.Generator, level_ids=None):
    """Ensemble search over the problem batch, chunked to bound memory."""
    per_chunk = max(1, cfg.search_chunk_rows // cfg.n_dss)
    if level_ids is None:
        level_ids = np.full(len(us), -1)
    chunks = []
    for lo in range(0, len(us), per_chunk):
        sl = slice(lo, lo + per_chunk)
        pool = LevelGoalPool(buffer, level_ids[sl], cfg.same_level_goals)
        chunks.append(ensemble_search_batch(ens, us[sl], vs[sl], bs[sl], pool, cfg.n_dss, rng,
                                            exclude_top=cfg.exclude_top_search,
                                            player_weight=cfg.player_weight))
    cap = max(c.best.plans.shape[1] for c in chunks)
    plans = np.concatenate([
        np.pad(c.best.plans, ((0, 0), (0, cap - c.best.plans.shape[1])), constant_values=STOP)
        for c in chunks
    ])
    lengths = np.concatenate([c.best.lengths for c in chunks])
    winners = np.concatenate([c.winner for c in chunks])
    scores = np.concatenate([c.scores for c in chunks])
    return plans, lengths, winners, scores


def train_iteration(levels: LevelSet, ens: Ensemble, buffer: ReplayBuffer, cfg: IterationConfig,
                    rng: np.random.Generator) -> dict:
    """One full iteration: explore, sample, search, build rows, update."""
    t0 = time.perf_counter()
    play = self_play(levels, ens, buffer, cfg, rng)
    t1 = time.perf_counter()
    us, vs, bs, ids = sample_problems_arrays(buffer, cfg.problems, rng, cfg.same_level_goals,
                                             return_levels=True)
    plans, lengths, winners, scores = search_problems(ens, buffer, us, vs, bs, cfg, rng, ids)
    t2 = time.perf_counter()
    rows = build_rows_batch(us, vs, bs, plans, lengths, cfg.R, cfg.d, cfg.refinement)
    fit = fit_rows(ens, rows, cfg, rng)
    t3 = time.perf_counter()
    wins = np.bincount(winners, minlength=cfg.R + 1)
    # buckets: empty, then (2^(i-1) d, 2^i d] per policy capacity
    edges = [-0.5, 0.5] + [(2 ** i) * cfg.d + 0.5 for i in range(cfg.R + 1)]
    hist = np.histogram(lengths, bins=edges)[0]
    return {
        "ma_loss_first": fit["ma_loss_first"],
        "ma_loss": fit["ma_loss"],
        "ms_loss_first": fit["ms_loss_first"],
        "ms_loss": fit["ms_loss"],
        "buffer_size": len(buffer),
        "pushed": play["pushed"],
        "cold_start": play["cold_start"],
        "wins": [int(w) for w in wins],
        "plan_length_hist": [int(h) for h in hist],
        "mean_plan_length": float(lengths.mean()),
        "mean_score": float(scores.mean()),
        "n_ma_rows": rows.n_ma,
        "n_ms_rows": rows.n_ms,
        "time_self_play": t1 - t0,
        "time_search": t2 - t1,
        "time_fit": t3 - t2,
    }


class Trainer:
    """Holds everything a training run needs to resume."""

    def __init__(self, levels: LevelSet, ens: Ensemble, cfg: IterationConfig, seed: int = 0,
                 buffer: ReplayBuffer | None = None):
        if ens.cfg.R != cfg.R or ens.cfg.d != cfg.d:
            raise ValueError("model and iteration configs disagree on R or d")
        self.levels = levels
        self.ens = ens
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.buffer = buffer or ReplayBuffer(cfg.buffer_capacity, levels[0].shape)
        self.iteration = 0
        self.history: list[dict] = []

    def step(self, probe=None) -> dict:
        t0 = time.perf_counter()
        metrics = train_iteration(self.levels, self.ens, self.buffer, self.cfg, self.rng)
        self.iteration += 1
        metrics["iteration"] = self.iteration
        if probe is not None:
            metrics["probe_solved"] = probe(self.ens)
        metrics["wall_time"] = time.perf_counter() - t0
        self.history.append(metrics)
        return metrics

    def run(self, iterations: int, *, log_path=None, probe=None, probe_every: int = 1,
            callback=None) -> list[dict]:
        out = []
        for _ in range(iterations):
            use_probe = probe if probe is not None and (self.iteration + 1) % probe_every == 0 else None
            metrics = self.step(use_probe)
            if log_path is not None:
                append_metrics(log_path, metrics)
            if callback is not None:
                callback(metrics)
            out.append(metrics)
        return out


def append_metrics(path, metrics: dict) -> None:
    with Path(path).open("a") as fh:
        fh.write(json.dumps(metrics, sort_keys=True) + "\n")
