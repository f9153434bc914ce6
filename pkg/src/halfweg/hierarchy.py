"""Recursive policies PL_0..PL_R built from the MA and MS networks.

``rollout_batch`` is the workhorse: it runs PL_i over many problems at once,
fusing every MA/MS call at the same tree position into one batched forward
pass.  The single-problem functions ``pl0``/``pl`` wrap it and keep the
landmark tree.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import Ensemble, decode_batch, encode_batch, ma_forward, ms_forward
from .sokoban import STOP, PuzzleState, run_plan_batch

# rows per forward pass; bounds the im2col buffer
FORWARD_CHUNK_CELLS = 1 << 11


@dataclass
class PlanningProblem:
    u: PuzzleState
    v: np.ndarray
    b: int = 0

    def __post_init__(self):
        if isinstance(self.v, PuzzleState):
            self.v = self.v.as_goal()
        self.v = np.asarray(self.v, dtype=np.float32)
        if self.v.shape != self.u.planes.shape:
            raise ValueError(f"goal shape {self.v.shape} does not match state {self.u.planes.shape}")
        if self.b not in (0, 1):
            raise ValueError("direction flag must be 0 or 1")


@dataclass
class LandmarkTree:
    level: int
    problem: PlanningProblem
    plan: list[int]
    final: PuzzleState
    predicted_w: np.ndarray | None = None
    realized_w: PuzzleState | None = None
    children: tuple = ()
    stopped: bool = False

    def leaves(self):
        if not self.children:
            yield self
            return
        for child in self.children:
            yield from child.leaves()

    def nodes(self):
        yield self
        for child in self.children:
            yield from child.nodes()


@dataclass
class BatchPlans:
    """Padded plans for a batch of problems (``STOP`` fills the tail)."""

    plans: np.ndarray
    lengths: np.ndarray
    finals: np.ndarray
    halted: np.ndarray
    trees: list | None = field(default=None, repr=False)

    def plan(self, k: int) -> list[int]:
        return [int(a) for a in self.plans[k, : self.lengths[k]]]


def _chunked(fn, ens, enc):
    h, w = enc.shape[2:]
    rows = max(1, FORWARD_CHUNK_CELLS // (h * w))
    if len(enc) <= rows:
        return fn(ens, enc)
    return np.concatenate([fn(ens, enc[k:k + rows]) for k in range(0, len(enc), rows)])


def ma_logits(ens: Ensemble, us, vs, bs) -> np.ndarray:
    return _chunked(ma_forward, ens, encode_batch(us, vs, bs))


def ms_predict(ens: Ensemble, us, vs, bs, r: int) -> np.ndarray:
    n = len(us)
    return _chunked(ms_forward, ens, encode_batch(us, vs, bs, np.full(n, r), ens.cfg.R))


def _concat(a: BatchPlans, b: BatchPlans) -> tuple[np.ndarray, np.ndarray]:
    n, half = a.plans.shape
    out = np.full((n, 2 * half), STOP, dtype=np.int64)
    out[:, :half] = a.plans
    rows = np.repeat(np.arange(n), half)
    cols = (a.lengths[:, None] + np.arange(half)[None, :]).ravel()
    vals = b.plans.ravel()
    keep = vals != STOP
    out[rows[keep], cols[keep]] = vals[keep]
    return out, a.lengths + b.lengths


def rollout_batch(ens: Ensemble, level: int, us: np.ndarray, vs: np.ndarray, bs, *,
                  halted: np.ndarray | None = None, global_stop: bool = False,
                  record: bool = False) -> BatchPlans:
    """Run PL_level on each ``(u, v, b)`` row.

    ``us`` is a uint8 board stack, ``vs`` a float goal stack of the same
    shape.  With ``global_stop`` a stop emitted by any leaf ends the whole
    plan (later leaves are forced empty); otherwise it only ends that leaf's
    segment.
    """
    us = np.asarray(us, dtype=np.uint8)
    vs = np.asarray(vs, dtype=np.float32)
    n = len(us)
    bs = np.broadcast_to(np.asarray(bs, dtype=np.int64), (n,))
    if halted is None:
        halted = np.zeros(n, dtype=bool)
    if level == 0:
        plans, stopped = decode_batch(ma_logits(ens, us, vs, bs))
        if global_stop:
            plans = np.where(halted[:, None], STOP, plans)
            stopped = stopped | halted
            halted = halted | stopped
        finals, lengths = run_plan_batch(us, plans)
        trees = None
        if record:
            trees = [
                LandmarkTree(0, PlanningProblem(PuzzleState(us[k], check=False), vs[k], int(bs[k])),
                             [int(a) for a in plans[k, :lengths[k]]],
                             PuzzleState(finals[k], check=False), stopped=bool(stopped[k]))
                for k in range(n)
            ]
        return BatchPlans(plans, lengths, finals, halted, trees)

    ws = ms_predict(ens, us, vs, bs, level)
    first = rollout_batch(ens, level - 1, us, ws, np.zeros(n, dtype=np.int64),
                          halted=halted, global_stop=global_stop, record=record)
    second = rollout_batch(ens, level - 1, first.finals, vs, bs,
                           halted=first.halted, global_stop=global_stop, record=record)
    plans, lengths = _concat(first, second)
    trees = None
    if record:
        trees = [
            LandmarkTree(level, PlanningProblem(PuzzleState(us[k], check=False), vs[k], int(bs[k])),
                         [int(a) for a in plans[k, :lengths[k]]],
                         second.trees[k].final, predicted_w=ws[k],
                         realized_w=first.trees[k].final,
                         children=(first.trees[k], second.trees[k]))
            for k in range(n)
        ]
    return BatchPlans(plans, lengths, second.finals, second.halted, trees)


def pl(i: int, problem: PlanningProblem, ens: Ensemble, *, global_stop: bool = False) -> LandmarkTree:
    """PL_i on one problem, returning its landmark tree."""
    if not 0 <= i <= ens.cfg.R:
        raise ValueError(f"policy level must be in [0, {ens.cfg.R}]")
    out = rollout_batch(ens, i, problem.u.planes[None], problem.v[None], [problem.b],
                        global_stop=global_stop, record=True)
    return out.trees[0]


def pl0(problem: PlanningProblem, ens: Ensemble) -> LandmarkTree:
    return pl(0, problem, ens)


def flatten_plan(tree: LandmarkTree, *, global_stop: bool = False) -> list[int]:
    """In-order concatenation of the leaf plans."""
    plan: list[int] = []
    for leaf in tree.leaves():
        plan.extend(leaf.plan)
        if global_stop and leaf.stopped:
            break
    return plan


def capacity(i: int, d: int) -> int:
    return (2 ** i) * d
