"""Generate levels by reverse play, check their witness plans and round-trip the file format.

Run:  python demos/02_generate_levels.py
"""
import tempfile
from pathlib import Path

from halfweg import GeneratorParams, generate_levels, is_solved, make_targets, read_level_file, run_plan
from halfweg import write_level_file
from halfweg.levels import serialize_level

params = GeneratorParams(width=10, height=10, n_boxes=4, seed=0)
levels, witnesses = generate_levels(params, 20)
print(serialize_level(levels[0]))
print("witness plan length:", len(witnesses[0]))

ok = sum(is_solved(run_plan(s, w).last) for s, w in zip(levels.levels, witnesses))
print(f"{ok}/{len(levels)} levels solved by their witness")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "levels.txt"
    write_level_file(path, levels)
    back = read_level_file(path)
    same = all(a == b for a, b in zip(levels.levels, back.levels))
    print("file round trip identical:", same)

targets = make_targets(levels[0], "all_empty")
print("evaluation targets for level 0 (one per empty cell):", len(targets))
