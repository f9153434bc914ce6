"""Plan search used to produce training targets and at evaluation time."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .hierarchy import BatchPlans, PlanningProblem, _concat, rollout_batch
from .models import Ensemble
from .sokoban import DEFAULT_PLAYER_WEIGHT, STOP, PuzzleState, distance_batch, run_plan_batch


@dataclass
class SearchResult:
    plan: list[int]
    achieved: PuzzleState
    score: float
    source_level: int
    n_evaluated: int = 1


def signed_scores(finals, vs, bs, player_weight=DEFAULT_PLAYER_WEIGHT) -> np.ndarray:
    """Distance to the goal, negated for rows that flee it (b = 1)."""
    dist = distance_batch(finals, vs, player_weight)
    return np.where(np.asarray(bs) == 1, -dist, dist)


def all_sequences(d: int, n_actions: int) -> np.ndarray:
    """Every action sequence of length ``d`` in lexicographic order."""
    return np.array(list(itertools.product(range(n_actions), repeat=d)), dtype=np.int64).reshape(-1, d)


def sample_goals(pool, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` goal planes from an array pool or an object with ``sample``."""
    if hasattr(pool, "sample"):
        return pool.sample(rng, n)
    pool = np.asarray(pool)
    if len(pool) == 0:
        raise ValueError("goal pool is empty")
    return pool[rng.integers(len(pool), size=n)]


def exhaustive_search_batch(us, vs, bs, d: int = 4, n_actions: int = 5,
                            player_weight: float = DEFAULT_PLAYER_WEIGHT,
                            chunk_rows: int = 1 << 14, return_counts: bool = False):
    """Best length-``d`` plan for every row, by brute force over all sequences.

    Ties go to the shorter executed plan, then the lexicographically smaller
    raw sequence.  ``finals`` holds the achieved boards; scores are
    recomputable with :func:`signed_scores`.  With ``return_counts`` the
    number of sequences scored per row is returned as well.
    """
    us = np.asarray(us, dtype=np.uint8)
    vs = np.asarray(vs, dtype=np.float32)
    n = len(us)
    bs = np.broadcast_to(np.asarray(bs), (n,))
    seqs = all_sequences(d, n_actions)
    s = len(seqs)
    best_plans = np.full((n, d), STOP, dtype=np.int64)
    best_len = np.zeros(n, dtype=np.int64)
    finals = np.empty_like(us)
    counts = np.zeros(n, dtype=np.int64)
    per_chunk = max(1, chunk_rows // s)
    for lo in range(0, n, per_chunk):
        hi = min(n, lo + per_chunk)
        m = hi - lo
        boards = np.repeat(us[lo:hi], s, axis=0)
        ends, lengths = run_plan_batch(boards, np.tile(seqs, (m, 1)))
        scores = signed_scores(ends, np.repeat(vs[lo:hi], s, axis=0),
                               np.repeat(bs[lo:hi], s), player_weight).reshape(m, s)
        lengths = lengths.reshape(m, s)
        counts[lo:hi] += np.isfinite(scores).sum(axis=1)
        order = np.arange(s)
        for k in range(m):
            j = np.lexsort((order, lengths[k], scores[k]))[0]
            best_len[lo + k] = lengths[k, j]
            best_plans[lo + k, : lengths[k, j]] = seqs[j, : lengths[k, j]]
            finals[lo + k] = ends[k * s + j]
    out = BatchPlans(best_plans, best_len, finals, np.zeros(n, dtype=bool))
    return (out, counts) if return_counts else out


def exhaustive_search(problem: PlanningProblem, d: int = 4, n_actions: int = 5,
                      player_weight: float = DEFAULT_PLAYER_WEIGHT) -> SearchResult:
    out, counts = exhaustive_search_batch(problem.u.planes[None], problem.v[None], [problem.b], d,
                                          n_actions, player_weight, return_counts=True)
    score = float(signed_scores(out.finals, problem.v[None], [problem.b], player_weight)[0])
    return SearchResult(out.plan(0), PuzzleState(out.finals[0], check=False), score, 0,
                        n_evaluated=int(counts[0]))


@dataclass
class CandidateSet:
    """All two-leg candidates for a batch of problems, best one per problem."""

    best: BatchPlans
    scores: np.ndarray
    candidates: BatchPlans
    n_candidates: int


def two_leg_search_batch(ens: Ensemble, level: int, us, vs, bs, goal_pool, n: int,
                         rng: np.random.Generator, *, include_plain: bool = True,
                         global_stop: bool = False,
                         player_weight: float = DEFAULT_PLAYER_WEIGHT) -> CandidateSet:
    """Two-leg subgoal search for PL_level over a batch of problems.

    Candidate 0 (when ``include_plain``) is the plain PL_level call; the other
    ``n`` candidates route through a sampled subgoal with a random direction
    flag on the first leg.
    """
    if level < 1:
        raise ValueError("two-leg search needs level >= 1")
    if n < 1:
        raise ValueError("candidate count must be >= 1")
    us = np.asarray(us, dtype=np.uint8)
    vs = np.asarray(vs, dtype=np.float32)
    p = len(us)
    bs = np.broadcast_to(np.asarray(bs, dtype=np.int64), (p,))

    ws = sample_goals(goal_pool, rng, p * n).astype(np.float32)
    bjs = rng.integers(0, 2, size=p * n)
    u_rep = np.repeat(us, n, axis=0)
    v_rep = np.repeat(vs, n, axis=0)
    b_rep = np.repeat(bs, n)
    first = rollout_batch(ens, level - 1, u_rep, ws, bjs, global_stop=global_stop)
    second = rollout_batch(ens, level - 1, first.finals, v_rep, b_rep,
                           halted=first.halted, global_stop=global_stop)
    plans, lengths = _concat(first, second)
    finals = second.finals
    if include_plain:
        plain = rollout_batch(ens, level, us, vs, bs, global_stop=global_stop)
        k = n + 1
        plans = np.concatenate([plain.plans[:, None], plans.reshape(p, n, -1)], axis=1).reshape(p * k, -1)
        lengths = np.concatenate([plain.lengths[:, None], lengths.reshape(p, n)], axis=1).ravel()
        finals = np.concatenate([plain.finals[:, None], finals.reshape((p, n) + finals.shape[1:])],
                                axis=1).reshape((p * k,) + finals.shape[1:])
    else:
        k = n
    scores = signed_scores(finals, np.repeat(vs, k, axis=0), np.repeat(bs, k),
                           player_weight).reshape(p, k)
    lens = lengths.reshape(p, k)
    order = np.arange(k)
    pick = np.array([np.lexsort((order, lens[j], scores[j]))[0] for j in range(p)], dtype=np.int64)
    rows = np.arange(p) * k + pick
    best = BatchPlans(plans[rows], lengths[rows], finals[rows], np.zeros(p, dtype=bool))
    cands = BatchPlans(plans, lengths, finals, np.zeros(p * k, dtype=bool))
    return CandidateSet(best, scores[np.arange(p), pick], cands, k)


def two_leg_search(level: int, problem: PlanningProblem, goal_pool, n: int, ens: Ensemble,
                   rng: np.random.Generator, *, include_plain: bool = True,
                   player_weight: float = DEFAULT_PLAYER_WEIGHT) -> SearchResult:
    out = two_leg_search_batch(ens, level, problem.u.planes[None], problem.v[None], [problem.b],
                               goal_pool, n, rng, include_plain=include_plain,
                               player_weight=player_weight)
    return SearchResult(out.best.plan(0), PuzzleState(out.best.finals[0], check=False),
                        float(out.scores[0]), level, n_evaluated=out.n_candidates)


@dataclass
class EnsembleChoice:
    best: BatchPlans
    scores: np.ndarray
    winner: np.ndarray
    level_scores: np.ndarray
    level_lengths: np.ndarray


def ensemble_search_batch(ens: Ensemble, us, vs, bs, goal_pool, n: int,
                          rng: np.random.Generator, *, exclude_top: bool = False,
                          player_weight: float = DEFAULT_PLAYER_WEIGHT) -> EnsembleChoice:
    """Search with every policy level and keep the best plan per problem.

    Ties go to the shorter plan, then the lower level.
    """
    us = np.asarray(us, dtype=np.uint8)
    vs = np.asarray(vs, dtype=np.float32)
    p = len(us)
    bs = np.broadcast_to(np.asarray(bs, dtype=np.int64), (p,))
    d, top = ens.cfg.d, ens.cfg.R
    levels = range(0, top if exclude_top else top + 1)
    results = []
    for level in levels:
        if level == 0:
            res = exhaustive_search_batch(us, vs, bs, d, player_weight=player_weight)
        else:
            res = two_leg_search_batch(ens, level, us, vs, bs, goal_pool, n, rng,
                                       player_weight=player_weight).best
        results.append(res)
    scores = np.stack([signed_scores(r.finals, vs, bs, player_weight) for r in results], axis=1)
    lengths = np.stack([r.lengths for r in results], axis=1)
    order = np.arange(len(results))
    winner = np.array([np.lexsort((order, lengths[j], scores[j]))[0] for j in range(p)], dtype=np.int64)
    cap = max(r.plans.shape[1] for r in results)
    plans = np.full((p, cap), STOP, dtype=np.int64)
    finals = np.empty_like(us)
    for j in range(p):
        r = results[winner[j]]
        plans[j, : r.plans.shape[1]] = r.plans[j]
        finals[j] = r.finals[j]
    best = BatchPlans(plans, lengths[np.arange(p), winner], finals, np.zeros(p, dtype=bool))
    return EnsembleChoice(best, scores[np.arange(p), winner], np.array(list(levels))[winner],
                          scores, lengths)


def ensemble_search(problem: PlanningProblem, ens: Ensemble, goal_pool, n: int = 100,
                    rng: np.random.Generator | None = None, *, exclude_top: bool = False,
                    player_weight: float = DEFAULT_PLAYER_WEIGHT) -> SearchResult:
    rng = np.random.default_rng(rng)
    out = ensemble_search_batch(ens, problem.u.planes[None], problem.v[None], [problem.b],
                                goal_pool, n, rng, exclude_top=exclude_top,
                                player_weight=player_weight)
    return SearchResult(out.best.plan(0), PuzzleState(out.best.finals[0], check=False),
                        float(out.scores[0]), int(out.winner[0]))
