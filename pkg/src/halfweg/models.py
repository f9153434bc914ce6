"""The action network (MA) and the landmark-state network (MS).

Both read a channel-stacked planning problem: start planes, goal planes and
a constant direction plane, plus one-hot depth planes for MS.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .sokoban import N_ACTIONS, N_CHANNELS, STOP, PuzzleState

# (filters, residual blocks)
MODEL_SIZES = {
    "tiny": (32, 1),
    "small": (48, 1),
    "medium": (64, 2),
    "large": (96, 4),
    "boxoban": (64, 4),
}


@dataclass(frozen=True)
class ModelConfig:
    height: int = 6
    width: int = 6
    filters: int = 48
    blocks: int = 1
    d: int = 4
    R: int = 5

    @classmethod
    def preset(cls, name: str, height: int, width: int, d: int = 4, R: int = 5) -> "ModelConfig":
        filters, blocks = MODEL_SIZES[name]
        return cls(height, width, filters, blocks, d, R)

    @property
    def ma_channels(self) -> int:
        return 2 * N_CHANNELS + 1

    @property
    def ms_channels(self) -> int:
        return 2 * N_CHANNELS + 1 + self.R

    def to_dict(self) -> dict:
        return asdict(self)


def ma_net(cfg: ModelConfig) -> list[nn.LayerSpec]:
    layers = [nn.conv3x3(cfg.ma_channels, cfg.filters), nn.relu()]
    layers += [nn.resnet_block(cfg.filters) for _ in range(cfg.blocks)]
    layers += [
        nn.linear(cfg.filters * cfg.height * cfg.width, cfg.d * N_ACTIONS),
        nn.reshape(cfg.d, N_ACTIONS),
    ]
    return layers


def ms_net(cfg: ModelConfig) -> list[nn.LayerSpec]:
    layers = [nn.conv3x3(cfg.ms_channels, cfg.filters), nn.relu()]
    layers += [nn.resnet_block(cfg.filters) for _ in range(cfg.blocks)]
    layers += [nn.conv3x3(cfg.filters, N_CHANNELS)]
    return layers


MA_HEAD_SCALE = 0.1


class Ensemble:
    """MA and MS parameters with the config they were built for."""

    def __init__(self, cfg: ModelConfig, ma: nn.ModelParams, ms: nn.ModelParams):
        self.cfg = cfg
        self.ma = ma
        self.ms = ms
        self.ma_layers = ma_net(cfg)
        self.ms_layers = ms_net(cfg)

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int | np.random.Generator = 0) -> "Ensemble":
        rng = np.random.default_rng(seed)
        ma = nn.init_params(ma_net(cfg), rng)
        # a small action head keeps the initial action distribution near uniform
        head = max((k for k in ma.tensors if k.endswith(".w")), key=lambda k: int(k.split(".")[0]))
        ma.tensors[head] *= MA_HEAD_SCALE
        return cls(cfg, ma, nn.init_params(ms_net(cfg), rng))

    def copy(self) -> "Ensemble":
        return Ensemble(self.cfg, self.ma.copy(), self.ms.copy())

    def n_parameters(self) -> dict[str, int]:
        return {"ma": self.ma.n_parameters(), "ms": self.ms.n_parameters()}


def _as_goal_planes(v) -> np.ndarray:
    if isinstance(v, PuzzleState):
        return v.planes.astype(np.float32)
    return np.asarray(v, dtype=np.float32)


def encode_batch(us: np.ndarray, vs: np.ndarray, bs, rs=None, R: int | None = None) -> np.ndarray:
    """Stack ``(N, 4, H, W)`` starts and goals into network input.

    With ``rs`` given (1-based depths, needs ``R``) the result carries the
    one-hot depth planes MS expects.
    """
    us = np.asarray(us, dtype=np.float32)
    vs = np.asarray(vs, dtype=np.float32)
    if us.shape != vs.shape:
        raise ValueError(f"start and goal shapes differ: {us.shape} vs {vs.shape}")
    n, _, h, w = us.shape
    bs = np.broadcast_to(np.asarray(bs, dtype=np.float32), (n,))
    planes = [us, vs, np.broadcast_to(bs[:, None, None, None], (n, 1, h, w))]
    if rs is not None:
        if R is None:
            raise ValueError("R is required with depth input")
        rs = np.broadcast_to(np.asarray(rs, dtype=np.int64), (n,))
        if rs.size and (rs.min() < 1 or rs.max() > R):
            raise ValueError(f"depth must be in [1, {R}]")
        onehot = np.zeros((n, R, h, w), dtype=np.float32)
        onehot[np.arange(n), rs - 1] = 1.0
        planes.append(onehot)
    return np.concatenate(planes, axis=1)


def encode_problem(u: PuzzleState, v, b: int, r: int | None = None, R: int | None = None) -> np.ndarray:
    """Single-problem encoding with a leading batch axis of one."""
    vp = _as_goal_planes(v)
    if vp.shape != u.planes.shape:
        raise ValueError(f"goal shape {vp.shape} does not match state {u.planes.shape}")
    return encode_batch(u.planes[None], vp[None], [b], None if r is None else [r], R)


def ma_forward(ens: Ensemble, enc: np.ndarray, *, tape: bool = False):
    if enc.shape[1] != ens.cfg.ma_channels:
        raise ValueError(f"MA expects {ens.cfg.ma_channels} channels, got {enc.shape[1]}")
    out, t = nn.forward(ens.ma_layers, ens.ma, enc)
    return (out, t) if tape else out


def ms_forward(ens: Ensemble, enc: np.ndarray, *, tape: bool = False):
    if enc.shape[1] != ens.cfg.ms_channels:
        raise ValueError(f"MS expects {ens.cfg.ms_channels} channels, got {enc.shape[1]}")
    out, t = nn.forward(ens.ms_layers, ens.ms, enc)
    return (out, t) if tape else out


def decode_batch(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Greedy decode of ``(N, d, 5)`` logits.

    Returns raw argmax rows with every position after the first stop set to
    stop, and a flag per row telling whether a stop was emitted.
    """
    raw = np.asarray(logits).argmax(axis=-1)
    stopped_before = np.cumsum(raw == STOP, axis=1) > 0
    plans = np.where(stopped_before, STOP, raw)
    return plans, stopped_before[:, -1]


def decode_actions(logits: np.ndarray) -> list[int]:
    """Greedy per-step argmax, cut at the first stop."""
    logits = np.asarray(logits)
    if logits.ndim == 2:
        logits = logits[None]
    plans, _ = decode_batch(logits)
    row = plans[0]
    return [int(a) for a in row[row != STOP]]
