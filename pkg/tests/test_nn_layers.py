"""Finite-difference checks of every layer primitive plus shape helpers."""
import numpy as np
import pytest

from modules import nn_layers as nn
from modules.neural_detect import check_gradients
from rdtrack.exceptions import ConfigError, ShapeError

FD = np.longdouble
TOLERANCE = 1e-6


def _layer_check(forward, backward, inputs, seed=0):
    """Max relative error of ``backward`` against central differences of sum(forward * G)."""
    rng = np.random.default_rng(seed)
    out = forward(inputs)
    weights = rng.standard_normal(out.shape)
    analytic = backward(weights, inputs)
    weights_fd = weights.astype(FD)

    def objective(params):
        return np.sum(forward(params) * weights_fd)

    return check_gradients(objective, inputs, analytic, eps=1e-5, samples=12, seed=seed, fd_dtype=FD)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.mark.unit
def test_silu_gradient(rng):
    x = rng.standard_normal((2, 3, 3, 4))

    def forward(p):
        return nn.silu_forward(p["x"])[0]

    def backward(g, p):
        return {"x": nn.silu_backward(g, nn.silu_forward(p["x"])[1])}

    assert _layer_check(forward, backward, {"x": x}) < TOLERANCE


@pytest.mark.unit
@pytest.mark.parametrize("stride, pad", [(1, 1), (2, 1), (1, 0)])
def test_conv2d_gradient(rng, stride, pad):
    params = {"x": rng.standard_normal((2, 6, 6, 3)), "w": rng.standard_normal((3, 3, 3, 4)),
              "b": rng.standard_normal(4)}

    def forward(p):
        return nn.conv2d_forward(p["x"], p["w"], p["b"], stride=stride, pad=pad)[0]

    def backward(g, p):
        _, cache = nn.conv2d_forward(p["x"], p["w"], p["b"], stride=stride, pad=pad)
        dx, dw, db = nn.conv2d_backward(g, cache)
        return {"x": dx, "w": dw, "b": db}

    assert _layer_check(forward, backward, params) < TOLERANCE


@pytest.mark.unit
def test_conv2d_matches_direct_sum(rng):
    x = rng.standard_normal((1, 5, 5, 2))
    w = rng.standard_normal((3, 3, 2, 1))
    out, _ = nn.conv2d_forward(x, w, None, stride=1, pad=0)
    expected = sum(x[0, 1 + i, 2 + j] @ w[i + 1, j + 1] for i in (-1, 0, 1) for j in (-1, 0, 1))
    assert out[0, 0, 1] == pytest.approx(expected)


@pytest.mark.unit
def test_linear_gradient(rng):
    params = {"x": rng.standard_normal((2, 3, 5)), "w": rng.standard_normal((5, 4)), "b": rng.standard_normal(4)}

    def forward(p):
        return nn.linear_forward(p["x"], p["w"], p["b"])[0]

    def backward(g, p):
        dx, dw, db = nn.linear_backward(g, nn.linear_forward(p["x"], p["w"], p["b"])[1])
        return {"x": dx, "w": dw, "b": db}

    assert _layer_check(forward, backward, params) < TOLERANCE


@pytest.mark.unit
@pytest.mark.parametrize("kind", ["instance", "layer"])
def test_norm_gradients(rng, kind):
    fwd = nn.instance_norm_forward if kind == "instance" else nn.layer_norm_forward
    bwd = nn.instance_norm_backward if kind == "instance" else nn.layer_norm_backward
    params = {"x": rng.standard_normal((2, 4, 4, 6)), "g": 1.0 + 0.1 * rng.standard_normal(6),
              "b": rng.standard_normal(6)}

    def forward(p):
        return fwd(p["x"], p["g"], p["b"])[0]

    def backward(g, p):
        dx, dg, db = bwd(g, fwd(p["x"], p["g"], p["b"])[1])
        return {"x": dx, "g": dg, "b": db}

    assert _layer_check(forward, backward, params) < TOLERANCE


@pytest.mark.unit
def test_instance_norm_normalizes_each_channel(rng):
    x = 3.0 + 2.0 * rng.standard_normal((2, 8, 8, 4))
    out, _ = nn.instance_norm_forward(x, np.ones(4), np.zeros(4))
    assert np.allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-12)
    assert np.allclose(out.var(axis=(1, 2)), 1.0, atol=1e-3)


@pytest.mark.unit
def test_bias_before_instance_norm_or_in_keys_changes_nothing(rng):
    x = rng.standard_normal((2, 8, 8, 4))
    gamma, beta = rng.standard_normal(4), rng.standard_normal(4)
    plain, _ = nn.instance_norm_forward(x, gamma, beta)
    shifted, _ = nn.instance_norm_forward(x + rng.standard_normal(4), gamma, beta)
    assert np.allclose(plain, shifted, atol=1e-9)

    q, k, key_bias = rng.standard_normal((5, 8)), rng.standard_normal((6, 8)), rng.standard_normal(8)
    assert np.allclose(nn.softmax(q @ k.T), nn.softmax(q @ (k + key_bias).T), atol=1e-12)


@pytest.mark.unit
def test_mhsa_gradient(rng):
    c = 8
    params = {"x": rng.standard_normal((2, 4, c))}
    for name in ("wq", "wk", "wv", "wo"):
        params[name] = rng.standard_normal((c, c)) / np.sqrt(c)
    for name in ("bq", "bv", "bo"):
        params[name] = rng.standard_normal(c)

    def forward(p):
        return nn.mhsa_forward(p["x"], {k: v for k, v in p.items() if k != "x"}, heads=2)[0]

    def backward(g, p):
        _, cache = nn.mhsa_forward(p["x"], {k: v for k, v in p.items() if k != "x"}, heads=2)
        dx, grads = nn.mhsa_backward(g, cache)
        return {"x": dx, **grads}

    assert _layer_check(forward, backward, params) < TOLERANCE


@pytest.mark.unit
def test_mhsa_rejects_uneven_heads(rng):
    params = {k: np.zeros((6, 6)) for k in ("wq", "wk", "wv", "wo")}
    params.update({k: np.zeros(6) for k in ("bq", "bv", "bo")})
    with pytest.raises(ShapeError):
        nn.mhsa_forward(rng.standard_normal((1, 4, 6)), params, heads=4)


@pytest.mark.unit
def test_maxpool_gradient(rng):
    x = rng.standard_normal((1, 6, 6, 2))

    def forward(p):
        return nn.maxpool_forward(p["x"], 5)[0]

    def backward(g, p):
        return {"x": nn.maxpool_backward(g, nn.maxpool_forward(p["x"], 5)[1])}

    assert _layer_check(forward, backward, {"x": x}) < TOLERANCE


@pytest.mark.unit
def test_maxpool_keeps_size_and_takes_max(rng):
    x = rng.standard_normal((1, 7, 7, 1))
    out, _ = nn.maxpool_forward(x, 5)
    assert out.shape == x.shape
    assert out[0, 3, 3, 0] == x[0, 1:6, 1:6, 0].max()
    assert out[0, 0, 0, 0] == x[0, 0:3, 0:3, 0].max()


@pytest.mark.unit
def test_window_partition_round_trip(rng):
    x = rng.standard_normal((2, 8, 8, 3))
    windows = nn.window_partition(x, 4)
    assert windows.shape == (8, 16, 3)
    assert np.array_equal(windows[0].reshape(4, 4, 3), x[0, :4, :4])
    assert np.array_equal(nn.window_reverse(windows, 4, x.shape), x)
    with pytest.raises(ShapeError):
        nn.window_partition(rng.standard_normal((1, 6, 8, 1)), 4)


@pytest.mark.unit
def test_cyclic_shift_is_undone_by_negative_shift(rng):
    x = rng.standard_normal((1, 4, 4, 2))
    assert np.array_equal(nn.cyclic_shift(nn.cyclic_shift(x, 2), -2), x)
    assert nn.cyclic_shift(x, 1)[0, 0, 0, 0] == x[0, 1, 1, 0]


@pytest.mark.unit
def test_positional_encoding_layout():
    table = nn.positional_encoding(4, 4, 8)
    assert table.shape == (4, 4, 8)
    assert np.allclose(table[0, :, 0], 0.0)
    assert np.allclose(table[0, 0, 1], 1.0)
    assert table[2, 1, 0] == pytest.approx(np.sin(2.0))
    assert table[2, 1, 4] == pytest.approx(np.sin(1.0))
    with pytest.raises(ConfigError):
        nn.positional_encoding(4, 4, 6)


@pytest.mark.unit
def test_sigmoid_is_stable():
    values = nn.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(values))
    assert values.tolist() == [0.0, 0.5, 1.0]
    assert nn.silu(0.0) == 0.0
