import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import halfweg.hierarchy as H
from halfweg.hierarchy import PlanningProblem, capacity, flatten_plan, pl, pl0, rollout_batch
from halfweg.models import Ensemble, ModelConfig
from halfweg.selfcheck import random_board
from halfweg.sokoban import STOP, PuzzleState, run_executed


@pytest.fixture(scope="module")
def ens():
    return Ensemble.init(ModelConfig.preset("tiny", 6, 6, R=5), 0)


def scripted_logits(seq_fn):
    """MA stand-in emitting one-hot logits for the sequences ``seq_fn(call_index, n)``."""
    calls = {"k": 0}

    def fake(ens, us, vs, bs):
        seqs = np.asarray(seq_fn(calls["k"], len(us)))
        calls["k"] += 1
        lg = np.zeros((len(us), seqs.shape[1], 5), dtype=np.float32)
        lg[np.arange(len(us))[:, None], np.arange(seqs.shape[1])[None], seqs] = 1.0
        return lg

    return fake


def problem(rng, b=0):
    u = PuzzleState(random_board(rng, 6, 6))
    v = PuzzleState(random_board(rng, 6, 6))
    return PlanningProblem(u, v, b)


def test_pl0_plan_bounded(ens, rng):
    for _ in range(20):
        t = pl0(problem(rng), ens)
        assert len(t.plan) <= 4 and STOP not in t.plan
        assert t.children == () and t.predicted_w is None


def test_all_leaves_stop_first(ens, rng, monkeypatch):
    monkeypatch.setattr(H, "ma_logits", scripted_logits(lambda k, n: np.full((n, 4), STOP)))
    t = pl(3, problem(rng), ens)
    assert t.plan == [] and flatten_plan(t) == []


def test_pl1_concatenates_leaves(ens, rng, monkeypatch):
    # first leaf: four moves, second leaf: three moves then stop
    seqs = {0: [1, 2, 1, 2], 1: [0, 3, 0, STOP]}
    monkeypatch.setattr(H, "ma_logits", scripted_logits(lambda k, n: np.tile(seqs[k], (n, 1))))
    t = pl(1, problem(rng), ens)
    assert len(t.plan) == 7
    assert t.plan == [1, 2, 1, 2, 0, 3, 0]
    assert flatten_plan(t) == t.plan


def test_segment_stop_versus_global_stop(ens, rng, monkeypatch):
    seqs = {0: [1, STOP, 0, 0], 1: [2, 2, STOP, 0]}
    p = problem(rng)
    monkeypatch.setattr(H, "ma_logits", scripted_logits(lambda k, n: np.tile(seqs[k], (n, 1))))
    assert pl(1, p, ens).plan == [1, 2, 2]
    monkeypatch.setattr(H, "ma_logits", scripted_logits(lambda k, n: np.tile(seqs[k], (n, 1))))
    t = pl(1, p, ens, global_stop=True)
    assert t.plan == [1]
    assert flatten_plan(t, global_stop=True) == [1]


def random_leaf_logits(rng, p_full=0.9):
    def fake(ens, us, vs, bs):
        n = len(us)
        seq = rng.integers(0, 4, size=(n, 4))
        cut = rng.random(n) > p_full
        pos = rng.integers(0, 4, size=n)
        seq[cut, pos[cut]] = STOP
        lg = np.zeros((n, 4, 5), dtype=np.float32)
        lg[np.arange(n)[:, None], np.arange(4)[None], seq] = 1.0
        return lg
    return fake


@pytest.mark.parametrize("i", range(6))
def test_capacity_law(ens, i, monkeypatch):
    rng = np.random.default_rng(i)
    monkeypatch.setattr(H, "ma_logits", random_leaf_logits(rng))
    us = np.stack([random_board(rng, 6, 6) for _ in range(200)])
    out = rollout_batch(ens, i, us, us.astype(np.float32), 0)
    assert out.lengths.max() == capacity(i, 4) == 2 ** i * 4
    assert out.plans.shape[1] == capacity(i, 4)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_tree_structure_and_replay(ens, rng, i):
    p = problem(rng, b=1)
    t = pl(i, p, ens)
    nodes = list(t.nodes())
    leaves = list(t.leaves())
    assert len(nodes) == 2 ** (i + 1) - 1
    assert len(leaves) == 2 ** i
    assert sum(1 for x in nodes if x.predicted_w is not None) == 2 ** i - 1
    assert len(t.plan) <= 2 ** i * 4
    for node in nodes:
        if node.children:
            first, second = node.children
            assert first.problem.b == 0
            np.testing.assert_array_equal(first.problem.v, node.predicted_w)
            assert node.realized_w == run_executed(node.problem.u, first.plan).last
            assert second.problem.u == node.realized_w
            assert second.problem.b == node.problem.b
            assert node.plan == first.plan + second.plan
    assert run_executed(p.u, flatten_plan(t)).last == t.final


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.integers(0, 1))
def test_batched_rollout_matches_single_trees(seed, i, b):
    rng = np.random.default_rng(seed)
    ens = Ensemble.init(ModelConfig.preset("tiny", 6, 6, R=3), seed % 7)
    us = np.stack([random_board(rng, 6, 6) for _ in range(3)])
    vs = np.stack([random_board(rng, 6, 6) for _ in range(3)]).astype(np.float32)
    out = rollout_batch(ens, i, us, vs, b)
    for k in range(3):
        t = pl(i, PlanningProblem(PuzzleState(us[k]), vs[k], b), ens)
        assert out.plan(k) == t.plan
        assert np.array_equal(out.finals[k], t.final.planes)
        assert np.array_equal(run_executed(PuzzleState(us[k]), out.plan(k)).last.planes, out.finals[k])


def test_level_range(ens, rng):
    with pytest.raises(ValueError):
        pl(6, problem(rng), ens)


def test_problem_validation(rng):
    u = PuzzleState(random_board(rng, 6, 6))
    with pytest.raises(ValueError):
        PlanningProblem(u, np.zeros((4, 5, 5)), 0)
    with pytest.raises(ValueError):
        PlanningProblem(u, u, 2)
