import numpy as np
import pytest

from halfweg.hierarchy import PlanningProblem, pl
from halfweg.levels import serialize_level
from halfweg.models import Ensemble, ModelConfig
from halfweg.render import board_lines, cell_classes, landmark_rows, render_landmarks, write_ppm
from halfweg.selfcheck import random_board
from halfweg.sokoban import PuzzleState


@pytest.fixture(scope="module")
def ens5():
    return Ensemble.init(ModelConfig(6, 6, 8, 1, 4, 5), 0)


def tree_at(ens, level, rng):
    u = PuzzleState(random_board(rng, 6, 6))
    v = PuzzleState(random_board(rng, 6, 6))
    return pl(level, PlanningProblem(u, v, 0), ens)


def test_exact_boards_match_serialized_glyphs(rng):
    for _ in range(50):
        s = PuzzleState(random_board(rng, 6, 7))
        assert board_lines(s.planes) == serialize_level(s).splitlines()


def test_soft_boards_take_the_argmax():
    x = np.zeros((4, 1, 3), dtype=np.float32)
    x[0, 0, 0] = 0.7       # player
    x[2, 0, 1] = 0.4       # box loses to floor (0.6)
    x[1, 0, 2] = 0.9
    x[3, 0, 2] = 0.8       # goal overlay
    cls, conf, goal = cell_classes(x)
    assert cls.tolist() == [[1, 0, 2]]
    assert conf[0].tolist() == pytest.approx([0.7, 0.6, 0.9])
    assert goal.tolist() == [[False, False, True]]


def test_level_one_shows_one_row_of_three(ens5, rng):
    tree = tree_at(ens5, 1, rng)
    rows = landmark_rows(tree)
    assert len(rows) == 1 and len(rows[0]) == 3
    text = render_landmarks(tree, "ascii")
    assert text.startswith("depth 1\n")
    assert len(text.strip().splitlines()) == 1 + 6
    assert len(text.splitlines()[1]) == 3 * 6 + 2


def test_row_widths_double(ens5, rng):
    tree = tree_at(ens5, 5, rng)
    rows = landmark_rows(tree)
    assert [len(r) for r in rows] == [2 ** k + 1 for k in range(1, 6)]
    assert max(len(r) for r in rows) <= 2 ** 5 + 1


def test_level_zero_renders_start_and_target(ens5, rng):
    text = render_landmarks(tree_at(ens5, 0, rng), "ascii")
    assert text.startswith("depth 0\n")


def test_image_and_ppm(ens5, rng, tmp_path):
    tree = tree_at(ens5, 2, rng)
    img = render_landmarks(tree, "image")
    assert img.dtype == np.uint8 and img.ndim == 3 and img.shape[2] == 3
    # two rows of boards, widest has five boards
    assert img.shape[0] == 4 + 2 * (6 * 8 + 4) and img.shape[1] == 4 + 5 * (6 * 8 + 4)
    path = tmp_path / "t.ppm"
    write_ppm(path, img)
    raw = path.read_bytes()
    assert raw.startswith(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
    assert len(raw) == len(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n") + img.size
    with pytest.raises(ValueError):
        render_landmarks(tree, "svg")


def test_level_five_ascii_width(ens5, rng):
    text = render_landmarks(tree_at(ens5, 5, rng), "ascii")
    widest = max(len(line) for line in text.splitlines())
    assert widest <= (2 ** 5 + 1) * (6 + 1)
