"""Build the recursive plan of an untrained ensemble and draw its landmark tree.

The plan a level-i policy can emit is at most 2^i * d actions.  Landmarks
come from the MS network; untrained, they are blurry, which shows up as
low-confidence cells in the image output.

Run:  python demos/03_landmark_tree.py [out.ppm]
"""
import sys

import numpy as np

from halfweg import Ensemble, ModelConfig, capacity, make_targets, pl, render_landmarks
from halfweg.hierarchy import PlanningProblem
from halfweg.levels import GeneratorParams, generate_level
from halfweg.render import write_ppm

level, _ = generate_level(GeneratorParams(6, 6, 1, seed=4))
ens = Ensemble.init(ModelConfig.preset("tiny", 6, 6, R=3), seed=0)
print("parameters per net:", ens.n_parameters())

target = make_targets(level, "all_empty")[0]
for i in range(4):
    tree = pl(i, PlanningProblem(level, target, 0), ens)
    print(f"PL_{i}: plan length {len(tree.plan):3d} (capacity {capacity(i, 4)})")

tree = pl(2, PlanningProblem(level, target, 0), ens)
print()
print(render_landmarks(tree, "ascii"))
if len(sys.argv) > 1:
    write_ppm(sys.argv[1], render_landmarks(tree, "image"))
    print("wrote", sys.argv[1])
