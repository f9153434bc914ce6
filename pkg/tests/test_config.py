import pytest

from halfweg.config import RunConfig, config_from_dict, dump_config, load_config, parse_key_values


def test_parse_with_comments():
    text = "# a comment\nmodel = tiny   # inline\nproblems = 64\ngen.n_boxes = 2\n; other\n"
    assert parse_key_values(text) == {"model": "tiny", "problems": "64", "gen.n_boxes": "2"}


def test_values_land_in_the_right_place():
    run = config_from_dict({"iterations": "3", "problems": "64", "refinement": "off", "lr": "0.01",
                            "gen.n_boxes": "2", "log": "m.jsonl"})
    assert run.iterations == 3 and run.log == "m.jsonl"
    assert run.iteration.problems == 64 and run.iteration.refinement is False and run.iteration.lr == 0.01
    assert run.generator.n_boxes == 2


def test_unknown_keys_are_errors():
    with pytest.raises(ValueError, match="unknown config key"):
        config_from_dict({"problemz": "1"})
    with pytest.raises(ValueError, match="unknown generator key"):
        config_from_dict({"gen.boxes": "1"})
    with pytest.raises(ValueError):
        config_from_dict({"refinement": "maybe"})
    with pytest.raises(ValueError):
        config_from_dict({"problems": "0"})


def test_dump_round_trip(tmp_path):
    run = config_from_dict({"iterations": "7", "n_dss": "5", "gen.width": "7", "same_level_goals": "1.0"})
    path = tmp_path / "run.cfg"
    path.write_text(dump_config(run))
    assert load_config(path) == run
    assert load_config(_write(tmp_path, "")) == RunConfig()


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.cfg")


def _write(tmp_path, text):
    p = tmp_path / "empty.cfg"
    p.write_text(text)
    return p


def test_desk_config_matches_desk_module():
    from pathlib import Path

    from halfweg import desk

    run = load_config(Path(__file__).parents[1] / "demos" / "desk.cfg")
    assert run.iteration == desk.ITERATION
    assert run.generator == desk.TRAIN_LEVELS
    assert run.model == desk.MODEL
    assert (run.iterations, run.seed, run.n_levels) == (desk.ITERATIONS, desk.SEED, desk.N_TRAIN_LEVELS)
