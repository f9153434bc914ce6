"""Acceptance criteria, one test each.  Every test prints a PASS/FAIL line
(run with ``-s`` to see them inline; conftest repeats them in the terminal summary).

Criteria 6 to 8 share one desk-scale training run (``halfweg.desk``).
"""
import time

import numpy as np
import pytest

import halfweg.hierarchy as H
from halfweg import desk, nn, oracles
from halfweg.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from halfweg.evaluation import evaluate
from halfweg.hierarchy import capacity, rollout_batch
from halfweg.levels import (GeneratorParams, generate_levels, parse_boxoban, serialize_levels,
                            write_level_file)
from halfweg.models import Ensemble, ModelConfig, encode_batch, ma_forward, ms_forward
from halfweg.search import exhaustive_search_batch
from halfweg.selfcheck import check_emulator, layer_case, random_board
from halfweg.sokoban import DEFAULT_PLAYER_WEIGHT, STOP, PuzzleState, is_solved, run_plan
from halfweg.training import build_rows, ms_target_indices

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {detail}"
    RESULTS[n] = line
    print("\n" + line, flush=True)


# ---------------------------------------------------------------- 1

def test_c01_emulator_matches_naive_simulator():
    t0 = time.perf_counter()
    ok, detail = check_emulator(10_000, np.random.default_rng(1))
    dt = time.perf_counter() - t0
    report(1, ok and dt < 10, f"emulator vs naive simulator, {detail}, {dt:.1f}s (limit 10s)")
    assert ok and dt < 10


# ---------------------------------------------------------------- 2

def test_c02_exhaustive_search_is_optimal():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    us, vs, want = [], [], []
    for _ in range(200):
        u = random_board(rng, 6, 6)
        reach = list(oracles.bfs_states(u, 4).values())
        v = reach[int(rng.integers(len(reach)))][0]
        us.append(u)
        vs.append(v)
        want.append(oracles.bfs_best_distance(u, v, 4, DEFAULT_PLAYER_WEIGHT))
    us, vs = np.stack(us), np.stack(vs).astype(np.float32)
    out, counts = exhaustive_search_batch(us, vs, np.zeros(200, dtype=np.int64), return_counts=True)
    got = [oracles.naive_distance(f, v, DEFAULT_PLAYER_WEIGHT) for f, v in zip(out.finals, vs)]
    n_equal = sum(g == w for g, w in zip(got, want))
    counts = set(counts.tolist())
    dt = time.perf_counter() - t0
    ok = n_equal == 200 and counts == {625} and dt < 120
    report(2, ok, f"{n_equal}/200 optimal, sequences per problem {sorted(counts)}, {dt:.1f}s (limit 120s)")
    assert ok


# ---------------------------------------------------------------- 3

def test_c03_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst, skipped = {}, 0
    for kind in nn.LAYER_KINDS:
        worst[kind] = 0.0
        for _ in range(20):
            net, params, x = layer_case(kind, rng)
            errors, n_skip = oracles.gradient_check(net, params, x, rng, eps=1e-3)
            worst[kind] = max(worst[kind], errors["all"])
            skipped += n_skip
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-3 and dt < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(3, ok, f"worst relative error per kind over 20 shapes: {detail}; "
                  f"{skipped} kink coordinates skipped; {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4

def random_leaves(rng, p_full=0.9):
    """Stand-in for MA: random 4-action leaves, cut by a stop with probability 1 - p_full."""
    def logits(ens, us, vs, bs):
        n = len(us)
        seq = rng.integers(0, 4, size=(n, 4))
        cut = rng.random(n) > p_full
        seq[cut, rng.integers(0, 4, size=int(cut.sum()))] = STOP
        out = np.zeros((n, 4, 5), dtype=np.float32)
        out[np.arange(n)[:, None], np.arange(4)[None], seq] = 1.0
        return out
    return logits


def test_c04_plan_capacity_law(monkeypatch):
    rng = np.random.default_rng(4)
    ens = Ensemble.init(ModelConfig.preset("tiny", 6, 6, R=5), 0)
    us = np.stack([random_board(rng, 6, 6) for _ in range(1000)])
    vs = np.stack([random_board(rng, 6, 6) for _ in range(1000)]).astype(np.float32)
    t0 = time.perf_counter()
    # the untrained network itself never exceeds the cap
    real = [int(rollout_batch(ens, i, us, vs, 0).lengths.max()) for i in range(6)]
    monkeypatch.setattr(H, "ma_logits", random_leaves(rng))
    maxima = [int(rollout_batch(ens, i, us, vs, 0).lengths.max()) for i in range(6)]
    dt = time.perf_counter() - t0
    caps = [capacity(i, 4) for i in range(6)]
    ok = maxima == caps == [2 ** i * 4 for i in range(6)] and all(r <= c for r, c in zip(real, caps)) \
        and dt < 60
    report(4, ok, f"max lengths over 1000 random trees {maxima} vs caps {caps}; "
                  f"untrained network maxima {real}; {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 5

def walk_plan(length, rng):
    planes = np.zeros((4, 12, 12), dtype=np.uint8)
    planes[0, 6, 6] = 1
    moves = [(-1, 0), (0, 1), (0, -1), (1, 0)]
    r, c, plan = 6, 6, []
    for _ in range(length):
        options = [a for a, (dr, dc) in enumerate(moves) if 0 <= r + dr < 12 and 0 <= c + dc < 12]
        a = options[int(rng.integers(len(options)))]
        r, c = r + moves[a][0], c + moves[a][1]
        plan.append(a)
    return H.PlanningProblem(PuzzleState(planes), np.zeros((4, 12, 12), np.float32), 0), plan


def test_c05_training_row_law():
    rng = np.random.default_rng(5)
    lines, ok = [], True
    for length in (2, 10, 128):
        problem, plan = walk_plan(length, rng)
        traj = run_plan(problem.u, plan).states
        want = [min(2 ** (r - 1) * 4, length) for r in range(1, 6)]
        idx = ms_target_indices(length, 5, 4)
        on = build_rows(problem, plan, 5, 4, refinement=True)
        off = build_rows(problem, plan, 5, 4, refinement=False)
        targets_ok = all(np.array_equal(row.target, traj[idx[row.r - 1]].planes)
                         for row in on if row.kind.startswith("ms"))
        ok &= idx == want and len(on) == 2 + 2 * 5 and len(off) == 1 + 5 and targets_ok
        lines.append(f"|a|={length}: indices {idx}, rows {len(on)}/{len(off)}")
    report(5, ok, "; ".join(lines) + " (refinements on/off)")
    assert ok


# ---------------------------------------------------------------- 6-8 desk run

@pytest.fixture(scope="session")
def desk_run():
    levels = desk.eval_levels()
    untrained = desk.new_ensemble()
    base = evaluate(levels, untrained, desk.R, "all", 0, seed=0)
    trainer, seconds = desk.run()
    trained = evaluate(levels, trainer.ens, list(range(desk.R + 1)), "all", 0, seed=0)
    return {"levels": levels, "untrained": untrained, "base": base, "trainer": trainer,
            "seconds": seconds, "trained": trained}


@pytest.mark.slow
def test_c06_desk_scale_learning(desk_run):
    base = desk_run["base"].row(desk.R).solved_percent
    top = desk_run["trained"].row(desk.R).solved_percent
    n_params = desk_run["trainer"].ens.n_parameters()
    hours = desk_run["seconds"] / 3600
    ok = (top >= 40 and base < 5 and top - base >= 35 and hours <= 2
          and max(n_params.values()) <= 60_000)
    report(6, ok, f"PL_{desk.R} all-empty targets solved {top:.1f}% trained vs {base:.1f}% untrained "
                  f"(gap {top - base:.1f}, need >= 35), {desk.ITERATIONS} iterations in {hours:.2f} h, "
                  f"parameters {n_params}")
    assert ok


@pytest.mark.slow
def test_c07_hierarchy_monotonicity(desk_run):
    rates = [desk_run["trained"].row(i).solved_percent for i in range(desk.R + 1)]
    drops = [a - b for a, b in zip(rates, rates[1:]) if b < a]
    ok = len(drops) <= 1 and all(d <= 2 for d in drops)
    report(7, ok, "single-call solved % by level " + " -> ".join(f"PL_{i} {r:.1f}" for i, r in enumerate(rates)))
    assert ok


@pytest.mark.slow
def test_c08_search_dominance(desk_run):
    levels = desk_run["levels"]
    lines, ok = [], True
    for name, ens in (("trained", desk_run["trainer"].ens), ("untrained", desk_run["untrained"])):
        plain = evaluate(levels, ens, desk.R, "all", 0, seed=8)
        searched = evaluate(levels, ens, desk.R, "all", 20, seed=8)
        a, b = plain.row(desk.R).solved_percent, searched.row(desk.R).solved_percent
        ok &= b >= a
        lines.append(f"{name} {a:.1f}% -> {b:.1f}%")
    report(8, ok, "solved % without -> with 20 searches: " + ", ".join(lines))
    assert ok


# ---------------------------------------------------------------- 9

def test_c09_round_trips(tmp_path):
    levels, _ = generate_levels(GeneratorParams(10, 10, 4, seed=9), 1000)
    text = serialize_levels(levels.levels, levels.ids)
    path = tmp_path / "official_format.txt"
    write_level_file(path, levels)
    back = parse_boxoban(path.read_text(), shape=(10, 10))
    same_levels = all(a == b for a, b in zip(levels.levels, back.levels)) and len(back) == 1000
    same_text = serialize_levels(back.levels, back.ids) == text == path.read_text()

    rng = np.random.default_rng(9)
    ens = Ensemble.init(ModelConfig.preset("tiny", 10, 10, R=5), 9)
    ckpt = tmp_path / "x.ckpt"
    save_checkpoint(ckpt, Checkpoint(ens, {"note": "round trip"}, rng.bit_generator.state, 3))
    ens2 = load_checkpoint(ckpt).ensemble
    us = np.stack([s.planes for s in levels.levels[:16]])
    vs = np.stack([s.planes for s in levels.levels[16:32]])
    bs = rng.integers(0, 2, 16)
    rs = rng.integers(1, 6, 16)
    same_ma = np.array_equal(ma_forward(ens, encode_batch(us, vs, bs)), ma_forward(ens2, encode_batch(us, vs, bs)))
    same_ms = np.array_equal(ms_forward(ens, encode_batch(us, vs, bs, rs, 5)),
                             ms_forward(ens2, encode_batch(us, vs, bs, rs, 5)))
    ok = same_levels and same_text and same_ma and same_ms
    report(9, ok, f"1000 synthesized official-format levels parse/serialize identical: {same_levels and same_text}; "
                  f"checkpoint forward outputs bit-identical: MA {same_ma}, MS {same_ms}")
    assert ok


# ---------------------------------------------------------------- 10

def test_c10_generator_soundness():
    levels, witnesses = generate_levels(GeneratorParams(10, 10, 4, seed=10), 1000)
    solved = sum(is_solved(run_plan(s, w).last) for s, w in zip(levels.levels, witnesses))
    counts_ok = []
    for k in range(1, 10):
        ls, ws = generate_levels(GeneratorParams(10, 10, k, seed=100 + k), 20)
        counts_ok.append(all(s.n_boxes == k for s in ls.levels)
                         and all(is_solved(run_plan(s, w).last) for s, w in zip(ls.levels, ws)))
    ok = solved == 1000 and all(counts_ok)
    report(10, ok, f"{solved}/1000 levels solved by their witness; box counts 1..9 honoured: "
                   f"{sum(counts_ok)}/9")
    assert ok
