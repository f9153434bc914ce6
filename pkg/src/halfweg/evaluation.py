"""Evaluation protocols: targets x searches grid, solve rate and solution length."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .hierarchy import rollout_batch
from .levels import LevelSet, make_targets
from .models import Ensemble
from .search import two_leg_search_batch
from .sokoban import DEFAULT_PLAYER_WEIGHT, PuzzleState, run_plan_batch, solved_batch

TARGET_MODES = {"1": "single_random", "single_random": "single_random",
                "all": "all_empty", "all_empty": "all_empty"}


@dataclass
class LevelRecord:
    level_id: str
    solved: bool
    solution_length: int | None
    solution: list[int] | None
    n_targets: int
    n_calls: int


@dataclass
class PolicyRow:
    level: int
    solved_percent: float
    targets_mode: str
    searches: int
    mean_solution_length: float | None
    n_levels: int


@dataclass
class EvalReport:
    rows: list[PolicyRow] = field(default_factory=list)
    details: dict[int, list[LevelRecord]] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def row(self, level: int) -> PolicyRow:
        for r in self.rows:
            if r.level == level:
                return r
        raise KeyError(level)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "details": {str(k): [asdict(x) for x in v] for k, v in self.details.items()},
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def table(self) -> str:
        head = f"{'Policy':>6} | {'Solved %':>8} | {'Targets':>9} | {'Searches':>8} | {'Length':>7} | {'Levels':>6}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            length = "-" if r.mean_solution_length is None else f"{r.mean_solution_length:.1f}"
            searches = "-" if r.searches == 0 else str(r.searches)
            lines.append(f"{'PL_' + str(r.level):>6} | {r.solved_percent:8.1f} | {r.targets_mode:>9} | "
                         f"{searches:>8} | {length:>7} | {r.n_levels:>6}")
        return "\n".join(lines)


def first_solved(start_boards: np.ndarray, plans: np.ndarray) -> np.ndarray:
    """Index of the first solved state along each plan, -1 when never solved."""
    _, lengths, hist = run_plan_batch(start_boards, plans, record=True)
    solved = np.stack([solved_batch(h) for h in hist])  # (L + 1, N)
    # states past the executed length repeat the last one, so they add nothing new
    t = np.arange(hist.shape[0])[:, None]
    solved &= t <= lengths[None, :]
    any_solved = solved.any(axis=0)
    return np.where(any_solved, solved.argmax(axis=0), -1)


def explore_pool(level: PuzzleState, ens: Ensemble, rng: np.random.Generator,
                 n_states: int = 1000) -> np.ndarray:
    """Goal pool for test-time search: random walks plus policy rollouts on one level."""
    from .training import IterationConfig, ReplayBuffer, self_play

    buf = ReplayBuffer(n_states, level.shape)
    cfg = IterationConfig(episodes=16, episode_length=max(8, n_states // 16), p_random=0.5,
                          R=ens.cfg.R, d=ens.cfg.d)
    levels = LevelSet([level], "generated")
    while buf.pushes < n_states:
        self_play(levels, ens, buf, cfg, rng)
    return buf.boards[: buf.size].copy()


def evaluate_level(level: PuzzleState, ens: Ensemble, level_i: int, targets_mode: str,
                   searches: int, seed=0, *, pool_size: int = 1000,
                   player_weight: float = DEFAULT_PLAYER_WEIGHT, global_stop: bool = False,
                   level_id: str = "") -> LevelRecord:
    # separate streams so targets do not depend on how much searching happened
    seed = list(np.atleast_1d(seed))
    mode = TARGET_MODES[targets_mode]
    targets = make_targets(level, mode, np.random.default_rng(seed + [0]))
    rng = np.random.default_rng(seed + [1])
    n_t = len(targets)
    us = np.repeat(level.planes[None], n_t, axis=0)
    vs = np.stack([t.planes for t in targets]).astype(np.float32)
    bs = np.zeros(n_t, dtype=np.int64)
    if searches and level_i >= 1:
        pool = explore_pool(level, ens, rng, pool_size)
        cs = two_leg_search_batch(ens, level_i, us, vs, bs, pool, searches, rng,
                                  include_plain=True, global_stop=global_stop,
                                  player_weight=player_weight)
        plans = cs.candidates.plans
        starts = np.repeat(us, cs.n_candidates, axis=0)
        n_calls = n_t * searches
    else:
        plans = rollout_batch(ens, level_i, us, vs, bs, global_stop=global_stop).plans
        starts = us
        n_calls = n_t
    hit = first_solved(starts, plans)
    if (hit >= 0).any():
        k = int(np.where(hit >= 0, hit, np.iinfo(np.int64).max).argmin())
        length = int(hit[k])
        return LevelRecord(level_id, True, length, [int(a) for a in plans[k, :length]], n_t, n_calls)
    return LevelRecord(level_id, False, None, None, n_t, n_calls)


def evaluate(levels: LevelSet, ens: Ensemble, level_i: int | list[int], targets_mode: str = "all",
             searches: int | None = None, seed: int = 0, *, pool_size: int = 1000,
             player_weight: float = DEFAULT_PLAYER_WEIGHT, global_stop: bool = False) -> EvalReport:
    """Solve rate of PL_level_i on each level.

    A level counts as solved when any executed prefix of any produced plan
    reaches a solved board; the solution length is the number of steps to the
    earliest such board.  ``searches`` of ``None`` or ``0`` calls the
    hierarchy once per target.
    """
    searches = int(searches or 0)
    report = EvalReport(notes={
        "seed": seed,
        "goal_pool": f"per-level exploration, {pool_size} states" if searches else "none",
        "player_weight": player_weight,
    })
    tiers = [level_i] if isinstance(level_i, int) else list(level_i)
    for tier in tiers:
        records = [
            evaluate_level(s, ens, tier, targets_mode, searches, [seed, tier, k], pool_size=pool_size,
                           player_weight=player_weight, global_stop=global_stop,
                           level_id=levels.ids[k])
            for k, s in enumerate(levels.levels)
        ]
        solved = [r for r in records if r.solved]
        report.rows.append(PolicyRow(
            level=tier,
            solved_percent=100.0 * len(solved) / max(1, len(records)),
            targets_mode=TARGET_MODES[targets_mode],
            searches=searches,
            mean_solution_length=float(np.mean([r.solution_length for r in solved])) if solved else None,
            n_levels=len(records),
        ))
        report.details[tier] = records
    return report
