"""Network substrate tests: hand gradients vs finite differences, optimizer
behavior, soft updates and the snapshot format."""

import numpy as np
import pytest

from stabletrade.errors import DataError, NumericError, ParamError
from stabletrade.tinynet import (
    Mlp,
    adam_init,
    clip_global_norm,
    gradient_check,
    load_net,
    opt_step,
    save_net,
    soft_update,
)


def test_rejects_bad_architectures():
    with pytest.raises(ParamError):
        Mlp([4])
    with pytest.raises(ParamError):
        Mlp([4, 2], out_act="softmax")


def test_forward_shapes_and_input_check():
    net = Mlp([3, 5, 2], seed=0)
    y, _ = net.forward(np.zeros((7, 3)))
    assert y.shape == (7, 2)
    y1, _ = net.forward(np.zeros(3))
    assert y1.shape == (2,)
    with pytest.raises(ParamError):
        net.forward(np.zeros((7, 4)))


def test_single_linear_layer_weight_gradient_is_input():
    net = Mlp([3, 1], seed=1)
    x = np.array([0.5, -2.0, 3.0])
    _, cache = net.forward(x)
    grads, _ = net.backward(cache, np.array([1.0]))
    np.testing.assert_allclose(grads[0].ravel(), x, atol=1e-14)
    np.testing.assert_allclose(grads[1], [1.0], atol=1e-14)


def test_zero_weights_pass_through_output_bias():
    net = Mlp([4, 6, 3], seed=2)
    for w in net.weights:
        w[...] = 0.0
    net.biases[0][...] = 0.0
    net.biases[1][...] = np.array([0.1, -0.2, 0.3])
    y, _ = net.forward(np.ones(4))
    np.testing.assert_allclose(y, [0.1, -0.2, 0.3], atol=1e-14)


def test_forward_is_pure():
    net = Mlp([3, 4, 2], seed=3)
    before = [p.copy() for p in net.params()]
    net.forward(np.random.default_rng(0).normal(size=(5, 3)))
    for b, p in zip(before, net.params()):
        np.testing.assert_array_equal(b, p)


@pytest.mark.parametrize("out_act", ["linear", "tanh"])
def test_three_layer_gradients_match_finite_differences(out_act):
    rng = np.random.default_rng(11)
    net = Mlp([4, 8, 8, 2], out_act=out_act, seed=7)
    worst = 0.0
    for _ in range(20):
        x = rng.normal(size=4)
        worst = max(worst, gradient_check(net, x, rng=rng))
    assert worst < 1e-4


def test_batch_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    net = Mlp([3, 10, 1], seed=9)
    x = rng.normal(size=(6, 3))
    assert gradient_check(net, x, rng=rng) < 1e-4


def test_tanh_output_is_bounded():
    net = Mlp([2, 4, 3], out_act="tanh", seed=0)
    y, _ = net.forward(100.0 * np.ones((10, 2)))
    assert np.all(np.abs(y) <= 1.0)


# ---------------------------------------------------------------------------
# optimizer


def test_zero_gradient_leaves_parameters_unchanged():
    net = Mlp([3, 4, 2], seed=1)
    before = [p.copy() for p in net.params()]
    state = adam_init(net)
    opt_step(net, [np.zeros_like(p) for p in net.params()], state)
    for b, p in zip(before, net.params()):
        np.testing.assert_array_equal(b, p)


def test_quadratic_converges_to_minimizer():
    # single parameter, loss (w - 3)^2, gradient 2(w - 3)
    net = Mlp([1, 1], seed=0)
    net.weights[0][...] = 0.0
    net.biases[0][...] = 0.0
    state = adam_init(net)
    for _ in range(500):
        w = float(net.weights[0][0, 0])
        g = [np.array([[2.0 * (w - 3.0)]]), np.zeros(1)]
        opt_step(net, g, state, lr=0.05)
    assert abs(float(net.weights[0][0, 0]) - 3.0) < 1e-3


def test_identical_streams_stay_identical():
    a = Mlp([2, 5, 1], seed=4)
    b = a.copy()
    sa, sb = adam_init(a), adam_init(b)
    rng = np.random.default_rng(0)
    for _ in range(50):
        gs = [rng.normal(size=p.shape) for p in a.params()]
        opt_step(a, gs, sa)
        opt_step(b, [g.copy() for g in gs], sb)
    for pa, pb in zip(a.params(), b.params()):
        np.testing.assert_array_equal(pa, pb)


def test_nonfinite_update_raises():
    net = Mlp([2, 2], seed=0)
    state = adam_init(net)
    bad = [np.full((2, 2), np.nan), np.zeros(2)]
    with pytest.raises(NumericError):
        opt_step(net, bad, state)


def test_parameters_stay_finite_under_clipped_noise():
    net = Mlp([3, 8, 2], seed=6)
    state = adam_init(net)
    rng = np.random.default_rng(6)
    for _ in range(2000):
        gs = [rng.standard_cauchy(size=p.shape) for p in net.params()]
        clip_global_norm(gs, 10.0)
        opt_step(net, gs, state, lr=1e-3)
    assert all(np.all(np.isfinite(p)) for p in net.params())


# ---------------------------------------------------------------------------
# soft updates


def test_soft_update_endpoints():
    src = Mlp([2, 3, 1], seed=1)
    tgt = Mlp([2, 3, 1], seed=2)
    keep = [p.copy() for p in tgt.params()]
    soft_update(tgt, src, 0.0)
    for k, p in zip(keep, tgt.params()):
        np.testing.assert_array_equal(k, p)
    soft_update(tgt, src, 1.0)
    for s, p in zip(src.params(), tgt.params()):
        np.testing.assert_array_equal(s, p)


def test_soft_update_geometric_closed_form():
    tau, n = 0.01, 137
    src = Mlp([2, 4, 2], seed=3)
    tgt = Mlp([2, 4, 2], seed=4)
    init = [p.copy() for p in tgt.params()]
    for _ in range(n):
        soft_update(tgt, src, tau)
    decay = (1.0 - tau) ** n
    for s, i0, p in zip(src.params(), init, tgt.params()):
        np.testing.assert_allclose(p, s * (1.0 - decay) + i0 * decay, atol=1e-10)


def test_soft_update_rejects_mismatched_architectures():
    with pytest.raises(ParamError):
        soft_update(Mlp([2, 3, 1]), Mlp([2, 4, 1]), 0.5)


# ---------------------------------------------------------------------------
# clipping


def test_clip_scales_only_above_the_cap():
    g = [np.array([3.0, 4.0])]  # norm 5
    norm = clip_global_norm(g, 10.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(g[0], [3.0, 4.0])
    g = [np.array([30.0, 40.0])]  # norm 50
    norm = clip_global_norm(g, 10.0)
    assert norm == pytest.approx(50.0)
    np.testing.assert_allclose(np.sqrt(np.sum(g[0] ** 2)), 10.0)


# ---------------------------------------------------------------------------
# snapshots


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    net = Mlp([3, 7, 2], out_act="tanh", seed=12)
    path = tmp_path / "net.bin"
    save_net(net, path)
    twin = load_net(path)
    assert twin.sizes == net.sizes and twin.out_act == net.out_act
    for a, b in zip(net.params(), twin.params()):
        assert a.tobytes() == b.tobytes()


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a net at all")
    with pytest.raises(DataError):
        load_net(path)


def test_snapshot_rejects_truncation(tmp_path):
    net = Mlp([3, 4, 1], seed=0)
    path = tmp_path / "net.bin"
    save_net(net, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-9])
    with pytest.raises(DataError):
        load_net(path)


def test_same_seed_same_init():
    a, b = Mlp([4, 4, 2], seed=5), Mlp([4, 4, 2], seed=5)
    for pa, pb in zip(a.params(), b.params()):
        np.testing.assert_array_equal(pa, pb)
