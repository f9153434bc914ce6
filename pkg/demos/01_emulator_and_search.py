"""Play a tiny level by hand, then let exhaustive search find the best 4-move plan.

Run:  python demos/01_emulator_and_search.py
"""
import numpy as np

from halfweg import ACTION_NAMES, PuzzleState, distance, exhaustive_search, is_solved, parse_boxoban, run_plan
from halfweg.hierarchy import PlanningProblem
from halfweg.levels import serialize_level
from halfweg.oracles import bfs_solve

LEVEL = """; 0
#######
#@ $ .#
#     #
#######
"""

level = parse_boxoban(LEVEL)[0]
print("start\n" + serialize_level(level))

# moves are up, right, left, down, stop; bumping a wall is a no-op
traj = run_plan(level, [1, 1, 1])
print("after right x3 (the box lands on the goal):\n" + serialize_level(traj.last))
print("solved:", is_solved(traj.last))

# search towards the solved board: everything within 4 moves is tried
goal = traj.last
res = exhaustive_search(PlanningProblem(level, goal, 0))
print(f"\nexhaustive search tried {res.n_evaluated} sequences")
print("best plan:", [ACTION_NAMES[a] for a in res.plan], "score", res.score)

# fleeing (b = 1) maximizes the distance instead
away = exhaustive_search(PlanningProblem(level, level, 1))
print("fleeing plan:", [ACTION_NAMES[a] for a in away.plan],
      "distance reached", distance(away.achieved, level))

# the breadth-first oracle agrees on the shortest solution
print("BFS shortest solution length:", len(bfs_solve(level.planes)))
