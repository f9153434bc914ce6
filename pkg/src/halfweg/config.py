"""Plain ``key = value`` run configuration files.

Lines starting with ``#`` or ``;`` are comments.  Unknown keys are an error so
typos do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .levels import GeneratorParams
from .training import IterationConfig

_SECTION = "run"


@dataclass
class RunConfig:
    """Everything ``train`` needs besides the iteration hyper-parameters."""

    model: str = "tiny"
    filters: int | None = None
    blocks: int | None = None
    iterations: int = 10
    seed: int = 0
    levels: str | None = None
    n_levels: int = 1000
    checkpoint: str = "halfweg.ckpt"
    log: str | None = None
    checkpoint_every: int = 1
    generator: GeneratorParams = field(default_factory=lambda: GeneratorParams(width=6, height=6, n_boxes=1))
    iteration: IterationConfig = field(default_factory=IterationConfig)


def _coerce(raw: str, like):
    if isinstance(like, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw.strip()


def parse_key_values(text: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(f"[{_SECTION}]\n" + text)
    return dict(cp[_SECTION])


_RUN_TYPES = {"model": "", "filters": 0, "blocks": 0, "iterations": 0, "seed": 0, "levels": "",
              "n_levels": 0, "checkpoint": "", "log": "", "checkpoint_every": 0}


def config_from_dict(values: dict[str, str]) -> RunConfig:
    """Build a RunConfig from string values.

    Generator keys take a ``gen.`` prefix (``gen.n_boxes = 2``); iteration
    keys are used bare (``problems = 512``).
    """
    run = RunConfig()
    gen = asdict(run.generator)
    it = asdict(run.iteration)
    for key, raw in values.items():
        if key.startswith("gen."):
            name = key[4:]
            if name not in gen:
                raise ValueError(f"unknown generator key {name!r}")
            gen[name] = _coerce(raw, gen[name])
        elif key in _RUN_TYPES:
            setattr(run, key, _coerce(raw, _RUN_TYPES[key]))
        elif key in it:
            it[key] = _coerce(raw, it[key])
        else:
            raise ValueError(f"unknown config key {key!r}")
    run.generator = GeneratorParams(**gen)
    run.iteration = IterationConfig(**it)
    return run


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return config_from_dict(parse_key_values(path.read_text()))


def dump_config(run: RunConfig) -> str:
    lines = []
    for f in fields(run):
        value = getattr(run, f.name)
        if f.name == "generator":
            lines += [f"gen.{k} = {v}" for k, v in asdict(value).items()]
        elif f.name == "iteration":
            lines += [f"{k} = {v}" for k, v in asdict(value).items()]
        elif value is not None:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
