import numpy as np
import pytest

from qrmexec.nn import Adam, CheckpointError, QNetwork, load_weights, save_weights

from oracles import numeric_input_grad, numeric_param_grad


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def test_shapes_and_init_bounds():
    net = QNetwork.create(5, 3, rng=0)
    assert net.dims == [5, 30, 30, 30, 30, 3]
    for W, b in zip(net.weights, net.biases):
        lim = 1 / np.sqrt(W.shape[0])
        assert np.all(np.abs(W) <= lim) and np.all(np.abs(b) <= lim)
    assert net.forward(np.zeros(5)).shape == (3,)
    assert net.forward(np.zeros((7, 5))).shape == (7, 3)


def test_forward_matches_explicit_loop():
    net = QNetwork.create(4, 2, hidden=(3,), rng=1, slope=0.1)
    x = np.array([0.3, -1.2, 0.5, 2.0])
    W0, W1 = net.weights
    b0, b1 = net.biases
    h = []
    for j in range(3):
        z = sum(x[i] * W0[i, j] for i in range(4)) + b0[j]
        h.append(z if z > 0 else 0.1 * z)
    out = [sum(h[j] * W1[j, k] for j in range(3)) + b1[k] for k in range(2)]
    np.testing.assert_allclose(net(x), out, rtol=1e-13)


@pytest.mark.parametrize("seed", range(10))
def test_parameter_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    net = QNetwork.create(5, 3, rng=seed)
    X = rng.normal(size=(6, 5))
    a = rng.integers(0, 3, size=6)
    y = rng.normal(size=6)
    _, grads = net.loss_and_grad(X, a, y)
    num = numeric_param_grad(lambda: net.loss_and_grad(X, a, y)[0], net.params(), h=1e-6)
    for g, n in zip(grads, num):
        assert rel_err(g, n) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_input_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(100 + seed)
    net = QNetwork.create(5, 3, rng=seed)
    x = rng.normal(size=5)
    for act in range(3):
        g = net.input_gradient(x, act)[0]
        n = numeric_input_grad(lambda v: net(v)[act], x, h=1e-6)
        assert rel_err(g, n) < 1e-6


def test_loss_masks_unselected_actions():
    net = QNetwork.create(5, 3, rng=2)
    X = np.random.default_rng(2).normal(size=(4, 5))
    q = net(X)
    a = np.array([0, 2, 1, 2])
    loss, grads = net.loss_and_grad(X, a, q[np.arange(4), a])
    assert loss == pytest.approx(0.0, abs=1e-24)
    assert all(np.all(g == 0) for g in grads)


def test_adam_first_step_is_signed_learning_rate():
    net = QNetwork.create(2, 1, hidden=(), rng=3)
    before = [p.copy() for p in net.params()]
    g = [np.array([[0.5], [-2.0]]), np.array([1e-3])]
    opt = Adam(lr=1e-3)
    opt.step(net, g)
    # bias-corrected moments equal g and g^2 after one step
    for p0, p1, gi in zip(before, net.params(), g):
        np.testing.assert_allclose(p0 - p1, 1e-3 * gi / (np.abs(gi) + 1e-8), rtol=1e-12)


def test_adam_second_step_by_hand():
    net = QNetwork.create(1, 1, hidden=(), rng=4)
    w0 = net.weights[0][0, 0]
    opt = Adam(lr=0.1)
    g1, g2 = 1.0, -3.0
    opt.step(net, [np.array([[g1]]), np.array([0.0])])
    opt.step(net, [np.array([[g2]]), np.array([0.0])])
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
    step2 = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    step1 = 0.1 * 1.0 / (1.0 + 1e-8)
    assert net.weights[0][0, 0] == pytest.approx(w0 - step1 - step2, rel=1e-12)


def test_adam_rejects_bad_gradients():
    net = QNetwork.create(2, 1, hidden=(), rng=5)
    with pytest.raises(FloatingPointError):
        Adam().step(net, [np.array([[np.nan], [0.0]]), np.zeros(1)])
    with pytest.raises(ValueError):
        Adam().step(net, [np.zeros((2, 1))])


def test_training_reduces_loss_on_fixed_regression():
    rng = np.random.default_rng(6)
    net = QNetwork.create(5, 3, rng=6)
    X = rng.normal(size=(256, 5))
    a = rng.integers(0, 3, 256)
    y = np.sin(X[:, 0]) + 0.5 * a
    opt = Adam(lr=1e-3)
    first = net.loss_and_grad(X, a, y)[0]
    for _ in range(300):
        loss, g = net.loss_and_grad(X, a, y)
        opt.step(net, g)
    assert loss < 0.2 * first


def test_checkpoint_round_trip(tmp_path):
    net = QNetwork.create(5, 3, rng=7)
    path = tmp_path / "n.qnet"
    save_weights(net, path, extra={"note": "x"})
    back, extra = load_weights(path, expect_d_in=5, expect_n_out=3)
    assert extra == {"note": "x"} and back.slope == net.slope
    for p, q in zip(net.params(), back.params()):
        assert np.array_equal(p, q)
    X = np.random.default_rng(7).normal(size=(10, 5))
    assert np.array_equal(net(X), back(X))


def test_checkpoint_guards(tmp_path):
    net = QNetwork.create(5, 3, rng=8)
    path = tmp_path / "n.qnet"
    save_weights(net, path)
    with pytest.raises(CheckpointError, match="features"):
        load_weights(path, expect_d_in=4)
    with pytest.raises(CheckpointError, match="actions"):
        load_weights(path, expect_n_out=5)
    data = path.read_bytes()
    (tmp_path / "t.qnet").write_bytes(data[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_weights(tmp_path / "t.qnet")
    (tmp_path / "m.qnet").write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(CheckpointError, match="magic"):
        load_weights(tmp_path / "m.qnet")


def test_wrong_input_width_rejected():
    net = QNetwork.create(5, 3, rng=9)
    with pytest.raises(ValueError, match="features"):
        net(np.zeros(4))
