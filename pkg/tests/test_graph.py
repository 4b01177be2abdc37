"""Forward/backward semantics of the computation graph engine."""

import numpy as np
import pytest

from classlm.graph import (
    Graph,
    GraphError,
    NonFiniteError,
    ShapeError,
    backward,
    finite_difference_check,
    forward_eval,
)


def test_identity_matmul():
    g = Graph()
    a = g.parameter("A", np.eye(2))
    x = g.input("x")
    g.mark_output(g.matmul(x, a), "y")
    ws = forward_eval(g, {"x": np.array([[3.0, 4.0]])})
    np.testing.assert_array_equal(ws.outputs["y"], [[3.0, 4.0]])


def test_softmax_of_zeros_is_uniform():
    g = Graph()
    x = g.input("x")
    g.mark_output(g.softmax(x), "p")
    ws = forward_eval(g, {"x": np.zeros(3)})
    np.testing.assert_allclose(ws.outputs["p"], [1 / 3] * 3, rtol=0, atol=1e-15)


def test_sigmoid_at_zero():
    g = Graph()
    g.mark_output(g.sigmoid(g.input("x")), "y")
    ws = forward_eval(g, {"x": np.zeros(1)})
    assert ws.outputs["y"][0] == 0.5


def test_square_loss_gradient():
    # loss = x^2 at x = 3 -> d loss / dx = 6
    g = Graph()
    x = g.parameter("x", np.array([[3.0]]))
    g.set_loss(g.sum(g.mul(x, x)))
    ws = forward_eval(g, {})
    grads = backward(g, ws)
    np.testing.assert_allclose(grads["x"], [[6.0]], rtol=1e-15)


def test_cross_entropy_gradient_vanishes_at_onehot():
    # With a saturated correct logit the softmax equals the target one-hot
    # and the logit gradient (p - onehot) is exactly zero.
    g = Graph()
    logits = g.parameter("logits", np.array([[1000.0, 0.0, 0.0]]))
    g.set_loss(g.sum(g.cross_entropy(logits, g.input("t"))))
    ws = forward_eval(g, {"t": np.array([0])})
    grads = backward(g, ws)
    np.testing.assert_array_equal(grads["logits"], np.zeros((1, 3)))


def test_cross_entropy_matches_log_softmax():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 5))
    targets = rng.integers(0, 5, size=4)
    g = Graph()
    ln = g.parameter("logits", logits)
    ce = g.cross_entropy(ln, g.input("t"))
    g.mark_output(ce, "ce")
    ws = forward_eval(g, {"t": targets})
    expected = -np.log(
        np.exp(logits)[np.arange(4), targets] / np.exp(logits).sum(axis=1)
    )
    np.testing.assert_allclose(ws.outputs["ce"], expected, rtol=1e-12)


def test_linear_graph_fd_error_tiny():
    g = Graph()
    w = g.parameter("w", np.array([[2.0, -1.0], [0.5, 3.0]]))
    x = g.input("x")
    g.set_loss(g.sum(g.matmul(x, w)))
    err = finite_difference_check(g, {"x": np.array([[1.5, -2.0]])}, "w", 1e-5)
    assert err < 1e-9


def test_fd_check_rejects_zero_step():
    g = Graph()
    w = g.parameter("w", np.ones((1, 1)))
    g.set_loss(g.sum(w))
    with pytest.raises(ValueError):
        finite_difference_check(g, {}, "w", 0.0)


def test_one_step_lstm_fd(rng):
    from classlm import layers

    g = Graph()
    n_in, n = 3, 4
    p = {}
    for name in layers.LSTM_PARAMS:
        if name.startswith("W"):
            shape = (n_in, n)
        elif name.startswith("U"):
            shape = (n, n)
        else:
            shape = (n,)
        p[name] = g.parameter(name, rng.normal(size=shape) * 0.5)
    x = g.input("x")
    h0 = g.input("h0")
    c0 = g.input("c0")
    h, c = layers.lstm_step(g, x, h0, c0, p)
    g.set_loss(g.sum(g.add(h, c)))
    bindings = {
        "x": rng.normal(size=(2, n_in)),
        "h0": rng.normal(size=(2, n)),
        "c0": rng.normal(size=(2, n)),
    }
    for name in layers.LSTM_PARAMS:
        assert finite_difference_check(g, bindings, name, 1e-5) < 1e-4


def _random_graph(rng):
    """A randomized composite graph exercising every primitive."""
    g = Graph()
    batch = int(rng.integers(1, 4))
    n1 = int(rng.integers(2, 5))
    n2 = int(rng.integers(2, 5))
    rows = int(rng.integers(3, 7))

    table = g.parameter("table", rng.normal(size=(rows, n1)))
    ids = g.input("ids")
    e = g.gather_rows(table, ids)

    w1 = g.parameter("w1", rng.normal(size=(n1, n2)) * 0.7)
    b1 = g.parameter("b1", rng.normal(size=(n2,)))
    h = g.add_bias(g.matmul(e, w1), b1)
    h = g.sigmoid(h) if rng.random() < 0.5 else g.tanh(h)

    gate = g.parameter("gate", rng.normal(size=(n2,)))
    gate_row = g.sigmoid(g.add_bias(g.matmul(e, g.parameter("wg", rng.normal(size=(n1, n2)))), gate))
    h = g.mul(h, gate_row) if rng.random() < 0.5 else g.mul(g.one_minus(gate_row), h)

    both = g.concat([e, h])
    w2 = g.parameter("w2", rng.normal(size=(n1 + n2, 3)) * 0.7)
    logits = g.add_bias(g.matmul(both, w2), g.parameter("b2", np.zeros(3)))
    if rng.random() < 0.5:
        probs = g.softmax(logits)
        loss = g.sum(g.mul(probs, g.input("mix")))
    else:
        ce = g.cross_entropy(logits, g.input("targets"))
        loss = g.sum(g.mul(ce, g.input("mask")))
    g.set_loss(g.smul(loss, g.input("scale")))

    bindings = {
        "ids": rng.integers(0, rows, size=batch),
        "mix": rng.normal(size=(batch, 3)),
        "targets": rng.integers(0, 3, size=batch),
        "mask": rng.random(size=batch),
        "scale": np.array(0.5 + rng.random()),
    }
    return g, bindings


def test_random_graphs_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g, bindings = _random_graph(rng)
        for name in g.trainable_parameters:
            assert finite_difference_check(g, bindings, name, 1e-5) < 1e-4


def test_forward_is_pure(rng):
    g, bindings = _random_graph(np.random.default_rng(3))
    ws1 = forward_eval(g, bindings)
    ws2 = forward_eval(g, bindings)
    for a, b in zip(ws1.values, ws2.values):
        np.testing.assert_array_equal(a, b)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(5)
    x64 = rng.normal(size=(20, 9)) * 30
    g = Graph()
    g.mark_output(g.softmax(g.input("x")), "p")
    p = forward_eval(g, {"x": x64}).outputs["p"]
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    p32 = forward_eval(g, {"x": x64.astype(np.float32)}).outputs["p"]
    np.testing.assert_allclose(p32.sum(axis=1), 1.0, rtol=0, atol=1e-5)


def test_unreachable_parameter_gets_zero_gradient():
    g = Graph()
    used = g.parameter("used", np.array([[2.0]]))
    unused = g.parameter("unused", np.ones((3, 2)))
    g.set_loss(g.sum(g.mul(used, used)))
    grads = backward(g, forward_eval(g, {}))
    assert grads["unused"].shape == (3, 2)
    np.testing.assert_array_equal(grads["unused"], np.zeros((3, 2)))
    assert np.any(grads["used"] != 0)


def test_shape_mismatch_names_node():
    g = Graph()
    a = g.parameter("a", np.ones((2, 3)))
    b = g.parameter("b", np.ones((2, 3)))
    g.matmul(a, b, name="bad_mm")
    with pytest.raises(ShapeError, match="bad_mm"):
        forward_eval(g, {})


def test_nonfinite_reports_first_offending_node():
    g = Graph()
    a = g.parameter("a", np.full((1, 2), 1e308))
    b = g.parameter("b", np.full((2, 1), 10.0))
    y = g.matmul(a, b, name="overflow_here")
    g.tanh(y)
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError, match="overflow_here"):
        forward_eval(g, {})


def test_missing_binding_and_loss_errors():
    g = Graph()
    x = g.input("x")
    y = g.tanh(x)
    with pytest.raises(GraphError, match="x"):
        forward_eval(g, {})
    ws = forward_eval(g, {"x": np.zeros(2)})
    with pytest.raises(GraphError, match="loss"):
        backward(g, ws)


def test_loss_must_be_scalar():
    g = Graph()
    x = g.parameter("x", np.ones(3))
    g.set_loss(g.tanh(x))
    ws = forward_eval(g, {})
    with pytest.raises(GraphError, match="scalar"):
        backward(g, ws)


def test_gather_rejects_out_of_range_ids():
    g = Graph()
    t = g.parameter("t", np.ones((3, 2)))
    g.gather_rows(t, g.input("ids"), name="lookup")
    with pytest.raises(GraphError, match="out of range"):
        forward_eval(g, {"ids": np.array([3])})


def test_parameter_override_at_eval_time():
    g = Graph()
    w = g.parameter("w", np.array([[1.0]]))
    g.set_loss(g.sum(g.mul(w, w)))
    assert forward_eval(g, {}).loss_value == 1.0
    assert forward_eval(g, {}, params={"w": np.array([[3.0]])}).loss_value == 9.0
