"""Train the small 6x6 single-box setup for a few iterations and evaluate it.

The full desk run behind the acceptance suite uses ``halfweg.desk.ITERATIONS``
iterations; this demo defaults to far fewer so it finishes in minutes.

Run:  python demos/04_desk_training.py [iterations] [checkpoint]
"""
import sys

from halfweg import desk
from halfweg.checkpoint import Checkpoint, save_checkpoint
from halfweg.evaluation import evaluate

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 10
out = sys.argv[2] if len(sys.argv) > 2 else "desk.ckpt"

levels = desk.eval_levels(30)
print(f"{len(levels)} evaluation levels, shortest solutions 5 to 12 moves")
print(evaluate(levels, desk.new_ensemble(), [0, 1, 2], "all", 0).table())


def show(m):
    print(f"iter {m['iteration']:3d}  ma loss {m['ma_loss']:.3f}  ms loss {m['ms_loss']:.4f}  "
          f"search wins by level {m['wins']}  {m['wall_time']:.1f}s", flush=True)


trainer, seconds = desk.run(iterations, callback=show)
print(f"\ntrained {iterations} iterations in {seconds / 60:.1f} min")
print(evaluate(levels, trainer.ens, [0, 1, 2], "all", 0).table())
print(evaluate(levels, trainer.ens, 2, "all", 5, pool_size=200).table())

save_checkpoint(out, Checkpoint(trainer.ens, {"iteration": desk.ITERATION.to_dict()},
                                trainer.rng.bit_generator.state, trainer.iteration))
print("saved", out, "- try: halfweg render", out, "<level file>")
