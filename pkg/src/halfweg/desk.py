"""The small training setup: 6x6 boards, one box, the tiny model, R = 2.

Used by the acceptance suite, ``demos/04_desk_training.py`` and
``demos/desk.cfg``.  Evaluation levels are drawn from a separate generator
seed and kept only when their shortest solution is 5 to 12 moves: shorter
ones are solved by chance, and the cut keeps an untrained ensemble near a
zero solve rate so the trained/untrained gap measures learning.
"""
from __future__ import annotations

import time

from .levels import GeneratorParams, LevelSet, generate_levels
from .models import Ensemble, ModelConfig
from .oracles import bfs_solve
from .training import IterationConfig, Trainer

R = 2
MODEL = "tiny"
TRAIN_LEVELS = GeneratorParams(width=6, height=6, n_boxes=1, wall_density=0.15, reverse_steps=8, seed=1)
N_TRAIN_LEVELS = 1000
EVAL_LEVELS = GeneratorParams(width=6, height=6, n_boxes=1, wall_density=0.15, reverse_steps=8, seed=99)
N_EVAL_LEVELS = 100
EVAL_OPTIMUM = (5, 12)
ITERATIONS = 400
SEED = 0

ITERATION = IterationConfig(
    episodes=128,
    episode_length=40,
    p_random=0.2,
    problems=1024,
    n_dss=10,
    batch_size=64,
    epochs=2,
    R=R,
    d=4,
    lr=1e-3,
    buffer_capacity=50_000,
    same_level_goals=1.0,
)


def train_levels(n: int = N_TRAIN_LEVELS) -> LevelSet:
    return generate_levels(TRAIN_LEVELS, n)[0]


def eval_levels(n: int = N_EVAL_LEVELS, optimum: tuple[int, int] = EVAL_OPTIMUM) -> LevelSet:
    """The first ``n`` generated levels whose BFS-optimal solution length lies in ``optimum``."""
    lo, hi = optimum
    kept, ids = [], []
    batch, start = 4 * n, 0
    while len(kept) < n:
        params = GeneratorParams(EVAL_LEVELS.width, EVAL_LEVELS.height, EVAL_LEVELS.n_boxes,
                                 EVAL_LEVELS.wall_density, EVAL_LEVELS.reverse_steps,
                                 EVAL_LEVELS.seed + start)
        levels, _ = generate_levels(params, batch)
        for k, s in enumerate(levels.levels):
            sol = bfs_solve(s.planes)
            if sol is not None and lo <= len(sol) <= hi:
                kept.append(s)
                ids.append(f"{params.seed}-{k}")
                if len(kept) == n:
                    break
        start += 1
    return LevelSet(kept, "test", source="desk eval", ids=ids)


def new_ensemble(seed: int = SEED) -> Ensemble:
    return Ensemble.init(ModelConfig.preset(MODEL, 6, 6, d=ITERATION.d, R=R), seed)


def run(iterations: int = ITERATIONS, *, seed: int = SEED, levels: LevelSet | None = None,
        callback=None, log_path=None) -> tuple[Trainer, float]:
    """Train a fresh desk ensemble; returns the trainer and the wall time in seconds."""
    levels = levels if levels is not None else train_levels()
    trainer = Trainer(levels, new_ensemble(seed), ITERATION, seed=seed)
    t0 = time.perf_counter()
    trainer.run(iterations, callback=callback, log_path=log_path)
    return trainer, time.perf_counter() - t0
