import numpy as np
import pytest
from hypothesis import strategies as st

from halfweg.selfcheck import random_board
from halfweg.sokoban import PuzzleState


def board_from_rows(rows):
    """Board from glyph rows, e.g. ["#####", "#@$ #", ...]."""
    from halfweg.levels import GLYPHS

    h, w = len(rows), len(rows[0])
    planes = np.zeros((4, h, w), dtype=np.uint8)
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            planes[:, r, c] = GLYPHS[ch]
    return PuzzleState(planes)


@st.composite
def boards(draw, min_side=3, max_side=8, max_boxes=4):
    h = draw(st.integers(min_side, max_side))
    w = draw(st.integers(min_side, max_side))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    k = draw(st.integers(1, max_boxes))
    if h * w < k + 3:
        k = 1
    return random_board(rng, h, w, n_boxes=k, wall_p=0.15)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
