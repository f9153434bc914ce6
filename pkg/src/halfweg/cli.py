"""Command line entry point: ``halfweg {train,eval,generate,render,selfcheck}``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .evaluation import evaluate
from .hierarchy import PlanningProblem, pl
from .levels import GeneratorParams, LevelSet, generate_levels, make_targets, read_level_file, write_level_file
from .models import MODEL_SIZES, Ensemble, ModelConfig
from .render import render_landmarks, write_ppm
from .training import Trainer, append_metrics


class UsageError(Exception):
    pass


def _add_generator_flags(p: argparse.ArgumentParser, defaults: GeneratorParams) -> None:
    p.add_argument("--width", type=int, default=defaults.width)
    p.add_argument("--height", type=int, default=defaults.height)
    p.add_argument("--boxes", type=int, default=defaults.n_boxes)
    p.add_argument("--wall-density", type=float, default=defaults.wall_density)
    p.add_argument("--reverse-steps", type=int, default=defaults.reverse_steps)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--count", type=int, default=100, help="number of generated levels")


def _generator_from(args) -> GeneratorParams:
    return GeneratorParams(args.width, args.height, args.boxes, args.wall_density, args.reverse_steps,
                           args.seed)


def _levels_from(args) -> LevelSet:
    if args.levels:
        path = Path(args.levels)
        if not path.exists():
            raise FileNotFoundError(f"level file not found: {path}")
        return read_level_file(path, split_tag="test")
    levels, _ = generate_levels(_generator_from(args), args.count)
    return levels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halfweg", description="Hierarchical Sokoban planner.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run training iterations from a config file")
    t.add_argument("config", help="key = value run configuration")
    t.add_argument("--resume", action="store_true", help="continue from the configured checkpoint")
    t.add_argument("--iterations", type=int, help="override the configured iteration count")

    e = sub.add_parser("eval", help="solve rate of a trained ensemble")
    e.add_argument("checkpoint")
    e.add_argument("--levels", help="Boxoban-format level file (otherwise generated)")
    e.add_argument("--level", type=int, nargs="+", default=None, help="policy level(s), default top")
    e.add_argument("--targets", choices=["1", "all"], default="all")
    e.add_argument("--searches", type=int, default=0)
    e.add_argument("--eval-seed", type=int, default=0)
    e.add_argument("--pool-size", type=int, default=1000)
    e.add_argument("--json", help="also write the report as JSON here")
    _add_generator_flags(e, GeneratorParams(width=6, height=6, n_boxes=1, seed=99))

    g = sub.add_parser("generate", help="write procedurally generated levels")
    g.add_argument("output")
    g.add_argument("--witness", help="also write witness plans, one per line")
    _add_generator_flags(g, GeneratorParams())

    r = sub.add_parser("render", help="draw the landmark tree of one planning call")
    r.add_argument("checkpoint")
    r.add_argument("levels", help="level file")
    r.add_argument("--index", type=int, default=0)
    r.add_argument("--level", type=int, default=None)
    r.add_argument("--target", type=int, default=0, help="index into the all-empty targets")
    r.add_argument("--image", help="write a PPM image here instead of printing text")

    s = sub.add_parser("selfcheck", help="compare fast paths against the reference oracles")
    s.add_argument("--quick", action="store_true")
    return parser


def cmd_train(args) -> int:
    run = load_config(args.config)
    iterations = args.iterations if args.iterations is not None else run.iterations
    if run.levels:
        levels = read_level_file(run.levels, split_tag="train")
    else:
        levels, _ = generate_levels(run.generator, run.n_levels)
    shape = levels[0].shape
    ckpt_path = Path(run.checkpoint)
    if args.resume:
        if not ckpt_path.exists():
            raise FileNotFoundError(f"no checkpoint to resume from: {ckpt_path}")
        ckpt = load_checkpoint(ckpt_path)
        ens = ckpt.ensemble
        start = ckpt.iteration
    else:
        filters, blocks = MODEL_SIZES[run.model]
        cfg = ModelConfig(shape[0], shape[1], run.filters or filters, run.blocks or blocks,
                          run.iteration.d, run.iteration.R)
        ens = Ensemble.init(cfg, run.seed)
        start, ckpt = 0, None
    trainer = Trainer(levels, ens, run.iteration, seed=run.seed)
    trainer.iteration = start
    if ckpt is not None and ckpt.rng_state is not None:
        trainer.rng.bit_generator.state = ckpt.rng_state
    print(f"training {iterations} iterations from {start} on {len(levels)} levels; "
          f"parameters {ens.n_parameters()}", flush=True)
    for _ in range(iterations):
        m = trainer.step()
        if run.log:
            append_metrics(run.log, m)
        print(f"iter {m['iteration']:4d}  ma {m['ma_loss']:.3f}  ms {m['ms_loss']:.4f}  "
              f"wins {m['wins']}  {m['wall_time']:.1f}s", flush=True)
        if m["iteration"] % run.checkpoint_every == 0:
            _save(ckpt_path, trainer, run)
    _save(ckpt_path, trainer, run)
    return 0


def _save(path, trainer: Trainer, run: RunConfig) -> None:
    config = {"run": {k: v for k, v in asdict(run).items() if k not in ("generator", "iteration")},
              "generator": asdict(run.generator), "iteration": asdict(run.iteration)}
    save_checkpoint(path, Checkpoint(trainer.ens, config, trainer.rng.bit_generator.state,
                                     trainer.iteration))


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    levels = _levels_from(args)
    tiers = args.level if args.level is not None else [ckpt.ensemble.cfg.R]
    for t in tiers:
        if not 0 <= t <= ckpt.ensemble.cfg.R:
            raise UsageError(f"--level {t} outside [0, {ckpt.ensemble.cfg.R}]")
    t0 = time.perf_counter()
    report = evaluate(levels, ckpt.ensemble, tiers, args.targets, args.searches, seed=args.eval_seed,
                      pool_size=args.pool_size)
    print(report.table())
    print(f"({len(levels)} levels, {time.perf_counter() - t0:.1f}s)")
    if args.json:
        Path(args.json).write_text(report.to_json())
    return 0


def cmd_generate(args) -> int:
    levels, witnesses = generate_levels(_generator_from(args), args.count)
    write_level_file(args.output, levels)
    if args.witness:
        Path(args.witness).write_text("".join(" ".join(map(str, w)) + "\n" for w in witnesses))
    print(f"wrote {len(levels)} levels to {args.output}")
    return 0


def cmd_render(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    levels = read_level_file(args.levels)
    if not 0 <= args.index < len(levels):
        raise UsageError(f"--index {args.index} outside [0, {len(levels)})")
    level = levels[args.index]
    targets = make_targets(level, "all_empty", np.random.default_rng(0))
    if not 0 <= args.target < len(targets):
        raise UsageError(f"--target {args.target} outside [0, {len(targets)})")
    tier = ckpt.ensemble.cfg.R if args.level is None else args.level
    tree = pl(tier, PlanningProblem(level, targets[args.target], 0), ckpt.ensemble)
    if args.image:
        write_ppm(args.image, render_landmarks(tree, "image"))
        print(f"wrote {args.image}")
    else:
        print(render_landmarks(tree, "ascii"), end="")
    return 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck(quick=args.quick)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "generate": cmd_generate, "render": cmd_render,
            "selfcheck": cmd_selfcheck}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FileNotFoundError, CheckpointError, ValueError) as err:
        print(f"halfweg {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
