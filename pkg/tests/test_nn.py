import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfweg import nn, oracles
from halfweg.selfcheck import layer_case


def randomize(params, rng, scale=0.5):
    for name in params.tensors:
        params.tensors[name] = (rng.normal(size=params.tensors[name].shape) * scale).astype(np.float32)
    return params


def test_zero_residual_block_is_identity_on_nonnegative_input(rng):
    net = [nn.resnet_block(3)]
    p = nn.init_params(net, rng)
    for k in ("0.w2", "0.b2"):
        p.tensors[k][:] = 0
    x = np.abs(rng.normal(size=(2, 3, 4, 5))).astype(np.float32)
    y, _ = nn.forward(net, p, x)
    assert np.array_equal(y, x)


def test_zero_conv_gives_zero(rng):
    net = [nn.conv3x3(3, 4)]
    p = nn.init_params(net, rng)
    p.tensors["0.w"][:] = 0
    y, _ = nn.forward(net, p, rng.normal(size=(2, 3, 5, 5)))
    assert y.shape == (2, 4, 5, 5) and not y.any()


def test_conv_matches_nested_loops(rng):
    net = [nn.conv3x3(3, 4), nn.relu(), nn.conv3x3(4, 2)]
    p = randomize(nn.init_params(net, rng), rng)
    x = rng.normal(size=(2, 3, 5, 6)).astype(np.float32)
    y, _ = nn.forward(net, p, x)
    h = np.maximum(oracles.naive_conv3x3(x, p.tensors["0.w"], p.tensors["0.b"]), 0)
    ref = oracles.naive_conv3x3(h, p.tensors["2.w"], p.tensors["2.b"])
    assert np.abs(y - ref).max() < 1e-5


def test_shape_errors_name_the_layer(rng):
    net = [nn.conv3x3(3, 4), nn.relu(), nn.linear(4 * 5 * 5, 7)]
    p = nn.init_params(net, rng)
    with pytest.raises(ValueError, match="layer 0"):
        nn.forward(net, p, np.zeros((1, 2, 5, 5)))
    with pytest.raises(ValueError, match="layer 2"):
        nn.forward(net, p, np.zeros((1, 3, 4, 4)))


@pytest.mark.parametrize("kind", nn.LAYER_KINDS)
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(zlib.crc32(kind.encode()))
    for _ in range(3):
        net, p, x = layer_case(kind, rng)
        errors, _ = oracles.gradient_check(net, p, x, rng)
        assert errors["all"] <= 1e-3, errors


def test_two_layer_net_gradients(rng):
    net = [nn.conv3x3(2, 3), nn.relu(), nn.linear(3 * 4 * 4, 5)]
    p = randomize(nn.init_params(net, rng), rng)
    x = rng.normal(size=(2, 2, 4, 4)).astype(np.float32)
    errors, skipped = oracles.gradient_check(net, p, x, rng)
    assert errors["all"] <= 1e-3
    assert skipped < 10


def test_zero_loss_gradient_gives_zero_grads(rng):
    net = [nn.conv3x3(2, 3), nn.resnet_block(3), nn.linear(3 * 4 * 4, 5)]
    p = randomize(nn.init_params(net, rng), rng)
    y, tape = nn.forward(net, p, rng.normal(size=(2, 2, 4, 4)))
    grads = nn.backward(tape, np.zeros_like(y))
    assert all(not g.any() for g in grads.values())


def test_mse_minimum_has_zero_gradient(rng):
    a = rng.normal(size=(3, 4, 5, 5)).astype(np.float32)
    loss, g = nn.mse(a, a)
    assert loss == 0.0 and not g.any()


def test_mse_formula(rng):
    a, b = rng.normal(size=(2, 3, 4, 5, 5))
    loss, _ = nn.mse(a, b)
    assert loss == pytest.approx(np.mean((a.astype(np.float32) - b.astype(np.float32)) ** 2), rel=1e-6)


def test_cross_entropy_uniform_logits():
    loss, _ = nn.cross_entropy(np.zeros((7, 4, 5)), np.random.default_rng(0).integers(0, 5, size=(7, 4)))
    assert loss == pytest.approx(math.log(5), abs=1e-6)


def test_cross_entropy_formula(rng):
    logits = rng.normal(size=(6, 4, 5)).astype(np.float32)
    t = rng.integers(0, 5, size=(6, 4))
    loss, g = nn.cross_entropy(logits, t)
    lg = logits.astype(np.float64)
    p = np.exp(lg) / np.exp(lg).sum(-1, keepdims=True)
    want = -np.mean(np.log(np.take_along_axis(p, t[..., None], -1)))
    assert loss == pytest.approx(want, abs=1e-6)
    onehot = np.eye(5)[t]
    assert np.allclose(g, (p - onehot) / t.size, atol=1e-7)


def test_cross_entropy_rejects_bad_targets():
    with pytest.raises(ValueError):
        nn.cross_entropy(np.zeros((2, 4, 5)), np.full((2, 4), 5))
    with pytest.raises(ValueError):
        nn.cross_entropy(np.zeros((2, 4, 5)), np.full((2, 4), -1))


def test_adam_zero_gradient_leaves_params():
    net = [nn.linear(3, 2)]
    p = nn.init_params(net, np.random.default_rng(0))
    before = {k: v.copy() for k, v in p.tensors.items()}
    nn.optimizer_step(p, {k: np.zeros_like(v) for k, v in p.tensors.items()}, lr=0.1)
    assert p.step == 1
    assert all(np.array_equal(before[k], p.tensors[k]) for k in before)


def test_adam_first_step_and_hand_oracle():
    net = [nn.linear(1, 1)]
    p = nn.init_params(net, np.random.default_rng(0))
    p.tensors["0.w"][:] = 0.5
    p.tensors["0.b"][:] = 0.0
    one = {"0.w": np.ones((1, 1), np.float32), "0.b": np.zeros(1, np.float32)}
    nn.optimizer_step(p, one, lr=0.1)
    assert p.tensors["0.w"][0, 0] == pytest.approx(0.4, abs=1e-6)
    grads = [1.0, -0.3, 2.0, 0.5]
    for g in grads[1:]:
        nn.optimizer_step(p, {"0.w": np.full((1, 1), g, np.float32), "0.b": np.zeros(1, np.float32)}, lr=0.1)
    assert p.tensors["0.w"][0, 0] == pytest.approx(oracles.hand_adam(0.5, grads, 0.1), abs=1e-6)


def test_adam_rejects_mismatched_grads():
    p = nn.init_params([nn.linear(3, 2)], np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.optimizer_step(p, {"0.w": np.zeros((2, 3)), "0.b": np.zeros(2)})
    with pytest.raises(ValueError):
        nn.optimizer_step(p, {"0.w": np.zeros((3, 2))})


def test_linear_regression_loss_decreases_monotonically(rng):
    net = [nn.linear(6, 1)]
    p = nn.init_params(net, rng)
    x = rng.normal(size=(32, 6, 1, 1)).astype(np.float32)
    y = (x.reshape(32, 6) @ rng.normal(size=(6, 1))).astype(np.float32)
    losses = []
    for _ in range(20):
        out, tape = nn.forward(net, p, x)
        loss, g = nn.mse(out, y)
        losses.append(loss)
        nn.optimizer_step(p, nn.backward(tape, g), lr=0.01)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_stale_tape_raises(rng):
    net = [nn.linear(4, 2)]
    p = nn.init_params(net, rng)
    y, tape = nn.forward(net, p, rng.normal(size=(3, 4, 1, 1)))
    nn.optimizer_step(p, nn.backward(tape, np.ones_like(y)))
    with pytest.raises(RuntimeError, match="stale"):
        nn.backward(tape, np.ones_like(y))


def test_training_is_deterministic():
    def run():
        rng = np.random.default_rng(3)
        net = [nn.conv3x3(2, 4), nn.resnet_block(4), nn.linear(4 * 3 * 3, 2)]
        p = nn.init_params(net, rng)
        x = rng.normal(size=(5, 2, 3, 3))
        for _ in range(5):
            y, tape = nn.forward(net, p, x)
            _, g = nn.mse(y, np.ones_like(y))
            nn.optimizer_step(p, nn.backward(tape, g))
        return p.tensors

    a, b = run(), run()
    assert all(np.array_equal(a[k], b[k]) for k in a)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(1, 5), st.integers(1, 6), st.integers(1, 6))
def test_shape_algebra(b, c, f, h, w):
    rng = np.random.default_rng(0)
    for net, shape in (([nn.conv3x3(c, f)], (b, f, h, w)), ([nn.resnet_block(c)], (b, c, h, w))):
        y, tape = nn.forward(net, nn.init_params(net, rng), rng.normal(size=(b, c, h, w)))
        assert y.shape == shape and y.dtype == np.float32 and np.isfinite(y).all()
        nn.backward(tape, np.ones_like(y))
        assert tape.input_grad.shape == (b, c, h, w) and np.isfinite(tape.input_grad).all()


def test_he_uniform_init_and_zero_bias():
    net = [nn.conv3x3(8, 16), nn.linear(100, 10)]
    p = nn.init_params(net, np.random.default_rng(0))
    assert not p.tensors["0.b"].any() and not p.tensors["1.b"].any()
    assert np.abs(p.tensors["0.w"]).max() <= math.sqrt(6 / (8 * 9)) + 1e-7
    assert np.abs(p.tensors["1.w"]).max() <= math.sqrt(6 / 100) + 1e-7
    assert all(v.dtype == np.float32 for v in p.tensors.values())
