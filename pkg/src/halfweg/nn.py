"""A small reverse-mode network library on numpy.

Networks are plain lists of :class:`LayerSpec`; parameters live in a
:class:`ModelParams` keyed ``"<layer index>.<name>"``.  :func:`forward`
returns the output together with a :class:`Tape` of cached activations and
:func:`backward` walks it in reverse.

Tensors enter and leave in ``(B, C, H, W)`` layout.  Convolutional layers
work in channels-last order internally so that 3x3 convolution is a single
im2col matmul without transposes between layers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DTYPE = np.float32

LAYER_KINDS = ("conv3x3", "resnet_block", "linear", "relu", "softmax_over_last", "reshape")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    n_in: int = 0
    n_out: int = 0
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out, "shape": list(self.shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(d["kind"], int(d["n_in"]), int(d["n_out"]), tuple(d["shape"]))


def conv3x3(n_in, n_out):
    return LayerSpec("conv3x3", n_in, n_out)


def resnet_block(channels):
    return LayerSpec("resnet_block", channels, channels)


def linear(n_in, n_out):
    return LayerSpec("linear", n_in, n_out)


def relu():
    return LayerSpec("relu")


def softmax_over_last():
    return LayerSpec("softmax_over_last")


def reshape(*shape):
    return LayerSpec("reshape", shape=tuple(shape))


def param_shapes(net: Sequence[LayerSpec]) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for i, layer in enumerate(net):
        if layer.kind == "conv3x3":
            shapes[f"{i}.w"] = (layer.n_out, layer.n_in, 3, 3)
            shapes[f"{i}.b"] = (layer.n_out,)
        elif layer.kind == "resnet_block":
            c = layer.n_in
            shapes[f"{i}.w1"] = (c, c, 3, 3)
            shapes[f"{i}.b1"] = (c,)
            shapes[f"{i}.w2"] = (c, c, 3, 3)
            shapes[f"{i}.b2"] = (c,)
        elif layer.kind == "linear":
            shapes[f"{i}.w"] = (layer.n_in, layer.n_out)
            shapes[f"{i}.b"] = (layer.n_out,)
    return shapes


class ModelParams:
    """Named parameter tensors plus Adam moments and a step counter."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {k: np.ascontiguousarray(v, dtype=DTYPE) for k, v in tensors.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.tensors.items()}
        self.step = 0
        # bumped on every mutation so stale tapes can be detected
        self.version = 0

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def copy(self) -> "ModelParams":
        out = ModelParams({k: v.copy() for k, v in self.tensors.items()})
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        out.step = self.step
        return out

    def set(self, name: str, value: np.ndarray) -> None:
        if self.tensors[name].shape != np.shape(value):
            raise ValueError(f"{name}: shape {np.shape(value)} != {self.tensors[name].shape}")
        self.tensors[name] = np.ascontiguousarray(value, dtype=DTYPE)
        self.version += 1


def init_params(net: Sequence[LayerSpec], rng: np.random.Generator) -> ModelParams:
    """He-uniform weights, zero biases."""
    tensors = {}
    for name, shape in param_shapes(net).items():
        if name.rsplit(".", 1)[1].startswith("b"):
            tensors[name] = np.zeros(shape, dtype=DTYPE)
            continue
        fan_in = shape[0] if len(shape) == 2 else int(np.prod(shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape).astype(DTYPE)
    return ModelParams(tensors)


# --------------------------------------------------------------------------
# layer kernels (channels-last activations)


def _im2col(x: np.ndarray) -> np.ndarray:
    """``(B, H, W, C)`` -> ``(B*H*W, 9*C)`` patches ordered (kernel row, kernel col, channel)."""
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    cols = np.empty((b, h, w, 9, c), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, :, 3 * i + j, :] = xp[:, i:i + h, j:j + w, :]
    return cols.reshape(b * h * w, 9 * c)


def _col2im(dcols: np.ndarray, shape) -> np.ndarray:
    b, h, w, c = shape
    d = dcols.reshape(b, h, w, 9, c)
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=dcols.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + w, :] += d[:, :, :, 3 * i + j, :]
    return dxp[:, 1:-1, 1:-1, :]


def _kernel_matrix(w: np.ndarray) -> np.ndarray:
    # (F, C, 3, 3) -> (9*C, F) matching the patch order of _im2col
    return w.transpose(2, 3, 1, 0).reshape(-1, w.shape[0])


def _conv_fwd(x, w, bias):
    b, h, wd, _ = x.shape
    cols = _im2col(x)
    y = cols @ _kernel_matrix(w) + bias
    return y.reshape(b, h, wd, w.shape[0]), cols


def _conv_bwd(dy, cols, w, x_shape):
    f, c = w.shape[:2]
    dyf = dy.reshape(-1, f)
    dw = (cols.T @ dyf).reshape(3, 3, c, f).transpose(3, 2, 0, 1)
    db = dyf.sum(axis=0)
    dcols = dyf @ _kernel_matrix(w).T
    return _col2im(dcols, x_shape), dw, db


@dataclass
class Tape:
    net: list
    params: ModelParams
    version: int
    caches: list = field(default_factory=list)
    output_layout: str = "nchw"
    input_grad: np.ndarray | None = None


def _check_input(layer: LayerSpec, i: int, x: np.ndarray, layout: str):
    if layer.kind in ("conv3x3", "resnet_block"):
        if x.ndim != 4:
            raise ValueError(f"layer {i} ({layer.kind}): expected 4-d input, got shape {x.shape}")
        c = x.shape[3] if layout == "nhwc" else x.shape[1]
        if c != layer.n_in:
            raise ValueError(f"layer {i} ({layer.kind}): expected {layer.n_in} channels, got {c}")
    elif layer.kind == "linear":
        n = int(np.prod(x.shape[1:]))
        if n != layer.n_in:
            raise ValueError(f"layer {i} (linear): expected {layer.n_in} features, got {n}")
    elif layer.kind == "reshape":
        if int(np.prod(x.shape[1:])) != int(np.prod(layer.shape)):
            raise ValueError(f"layer {i} (reshape): cannot reshape {x.shape[1:]} to {layer.shape}")


def forward(net: Sequence[LayerSpec], params: ModelParams, x: np.ndarray):
    """Run ``net`` on ``x``; returns ``(output, tape)``."""
    x = np.asarray(x, dtype=DTYPE)
    tape = Tape(list(net), params, params.version)
    layout = "nchw"
    t = params.tensors
    for i, layer in enumerate(net):
        _check_input(layer, i, x, layout)
        kind = layer.kind
        incoming = layout
        if kind in ("conv3x3", "resnet_block") and layout == "nchw":
            x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
            layout = "nhwc"
        elif kind not in ("conv3x3", "resnet_block", "relu") and layout == "nhwc":
            x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
            layout = "nchw"
        if kind == "conv3x3":
            y, cache = _conv_fwd(x, t[f"{i}.w"], t[f"{i}.b"])
        elif kind == "resnet_block":
            h1, cols1 = _conv_fwd(x, t[f"{i}.w1"], t[f"{i}.b1"])
            a1 = np.maximum(h1, 0)
            h2, cols2 = _conv_fwd(a1, t[f"{i}.w2"], t[f"{i}.b2"])
            s = h2 + x
            y = np.maximum(s, 0)
            cache = (cols1, h1, cols2, s)
        elif kind == "linear":
            cache = x.reshape(x.shape[0], -1)
            y = cache @ t[f"{i}.w"] + t[f"{i}.b"]
        elif kind == "relu":
            y = np.maximum(x, 0)
            cache = x > 0
        elif kind == "softmax_over_last":
            z = x - x.max(axis=-1, keepdims=True)
            e = np.exp(z)
            y = e / e.sum(axis=-1, keepdims=True)
            cache = y
        else:  # reshape
            y = x.reshape((x.shape[0],) + tuple(layer.shape))
            cache = None
        tape.caches.append((kind, incoming, layout, x.shape, cache))
        x = y
    if layout == "nhwc":
        x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    tape.output_layout = layout
    return x, tape


def backward(tape: Tape, loss_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the recorded computation, keyed like the params.

    The gradient with respect to the network input is stored on
    ``tape.input_grad`` in ``(B, C, H, W)`` layout.
    """
    if tape.params.version != tape.version:
        raise RuntimeError("tape is stale: parameters changed since the forward pass")
    t = tape.params.tensors
    grads = {k: np.zeros_like(v) for k, v in t.items()}
    g = np.asarray(loss_grad, dtype=DTYPE)
    if tape.output_layout == "nhwc":
        g = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
    for i in range(len(tape.caches) - 1, -1, -1):
        kind, incoming, layout, x_shape, cache = tape.caches[i]
        if kind == "conv3x3":
            g, dw, db = _conv_bwd(g, cache, t[f"{i}.w"], x_shape)
            grads[f"{i}.w"] += dw
            grads[f"{i}.b"] += db
        elif kind == "resnet_block":
            cols1, h1, cols2, s = cache
            gs = g * (s > 0)
            ga1, dw2, db2 = _conv_bwd(gs, cols2, t[f"{i}.w2"], x_shape)
            gh1 = ga1 * (h1 > 0)
            gx, dw1, db1 = _conv_bwd(gh1, cols1, t[f"{i}.w1"], x_shape)
            grads[f"{i}.w1"] += dw1
            grads[f"{i}.b1"] += db1
            grads[f"{i}.w2"] += dw2
            grads[f"{i}.b2"] += db2
            g = gx + gs
        elif kind == "linear":
            g2 = g.reshape(g.shape[0], -1)
            grads[f"{i}.w"] += cache.T @ g2
            grads[f"{i}.b"] += g2.sum(axis=0)
            g = (g2 @ t[f"{i}.w"].T).reshape(x_shape)
        elif kind == "relu":
            g = g * cache
        elif kind == "softmax_over_last":
            g = cache * (g - (g * cache).sum(axis=-1, keepdims=True))
        else:  # reshape
            g = g.reshape(x_shape)
        if incoming != layout:
            axes = (0, 3, 1, 2) if layout == "nhwc" else (0, 2, 3, 1)
            g = np.ascontiguousarray(g.transpose(axes))
    tape.input_grad = g
    return grads


# --------------------------------------------------------------------------
# losses


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over batch and positions, and its gradient.

    ``logits`` is ``(..., A)``, ``targets`` holds integer classes with the
    leading shape of ``logits``.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    targets = np.asarray(targets, dtype=np.int64)
    n_classes = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise ValueError(f"target index outside [0, {n_classes - 1}]")
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    onehot = np.eye(n_classes, dtype=DTYPE)[targets]
    count = max(targets.size, 1)
    loss = float(-(onehot * logp).sum(dtype=np.float64) / count)
    grad = (np.exp(logp) - onehot) / count
    return loss, grad.astype(DTYPE)


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=DTYPE)
    target = np.asarray(target, dtype=DTYPE)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    count = max(diff.size, 1)
    return float((diff.astype(np.float64) ** 2).sum() / count), (2.0 * diff / count).astype(DTYPE)


# --------------------------------------------------------------------------
# optimizer


def optimizer_step(params: ModelParams, grads: dict[str, np.ndarray], lr: float = 1e-3) -> ModelParams:
    """One in-place Adam update with bias correction."""
    if set(grads) != set(params.tensors):
        raise ValueError("gradient keys do not match parameter names")
    for name, g in grads.items():
        if g.shape != params.tensors[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != {params.tensors[name].shape}")
    params.step += 1
    t = params.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name, g in grads.items():
        g = g.astype(DTYPE)
        m = params.m[name]
        v = params.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        params.tensors[name] = params.tensors[name] - update.astype(DTYPE)
    params.version += 1
    return params
