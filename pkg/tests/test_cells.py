import math

import numpy as np
import pytest
from scipy.special import expit

from rnnevo.cells import FORGET_BIAS_INDEX, cell_backward, cell_forward, init_cell_weights
from rnnevo.genome import CELL_PARAM_COUNT, CELL_TYPES


def reference(cell_type, w, x, h, c):
    """Reference equations written out afresh; returns (h', c')."""
    w = np.asarray(w, dtype=float)
    if cell_type == "simple":
        return np.tanh(x + w[0]), 0.0
    if cell_type == "delta_rnn":
        alpha, b1, b2, v, br, bz = w
        inner = np.tanh(alpha * (v * h) * x + b1 * (v * h) + b2 * x + bz)
        gate = expit(x + br)
        return np.tanh((1 - gate) * inner + gate * h), 0.0
    if cell_type == "gru":
        upd = expit(w[0] * x + w[1] * h + w[2])
        rst = expit(w[3] * x + w[4] * h + w[5])
        cand = np.tanh(w[6] * x + w[7] * (rst * h) + w[8])
        return upd * cand + (1 - upd) * h, 0.0
    if cell_type == "lstm":
        gi, gf, go = (expit(w[k] * x + w[k + 1] * h + w[k + 2]) for k in (0, 3, 6))
        cand = np.tanh(w[9] * x + w[10] * h + w[11])
        c_new = gf * c + gi * cand
        return go * np.tanh(c_new), c_new
    if cell_type == "mgu":
        f = expit(w[0] * x + w[1] * h + w[2])
        cand = np.tanh(w[3] * x + w[4] * (f * h) + w[5])
        return f * cand + (1 - f) * h, 0.0
    g = expit(w[3] * x + w[4] * h + w[5])
    return g * h + (1 - g) * np.tanh(w[0] * x + w[1] * h + w[2]), 0.0


def _config(rng, cell_type):
    w = rng.uniform(-2, 2, CELL_PARAM_COUNT[cell_type])
    x, h, c = rng.uniform(-2, 2, 3)
    return list(w), float(x), float(h), float(c)


@pytest.mark.parametrize("cell_type", CELL_TYPES)
def test_forward_matches_reference(cell_type):
    rng = np.random.default_rng(hash(cell_type) % 2**32)
    for _ in range(100):
        w, x, h, c = _config(rng, cell_type)
        y, (h2, c2) = cell_forward(cell_type, w, x, (h, c))
        rh, rc = reference(cell_type, w, x, h, c)
        assert y == h2
        assert h2 == pytest.approx(rh, abs=1e-12)
        if cell_type == "lstm":
            assert c2 == pytest.approx(rc, abs=1e-12)


def test_zero_cells_output_zero():
    # zero edge weights make the aggregated input 0 whatever the sensor reads
    assert cell_forward("simple", [0.0], 0.0 * 3.7)[0] == 0.0
    assert cell_forward("lstm", [0.0] * 12, 0.0, (0.0, 0.0))[0] == 0.0


@pytest.mark.parametrize("cell_type", CELL_TYPES)
def test_backward_matches_finite_differences(cell_type):
    rng = np.random.default_rng(len(cell_type))
    hstep = 1e-5
    for _ in range(50):
        w, x, h, c = _config(rng, cell_type)
        a, b = rng.normal(size=2)
        if cell_type != "lstm":
            b = 0.0

        def loss(w=w, x=x, h=h, c=c):
            _, (h2, c2) = cell_forward(cell_type, w, x, (h, c))
            return a * h2 + b * c2

        grads = cell_backward(cell_type, w, x, (h, c), (a, b))
        numeric = []
        for k in range(len(w)):
            up, dn = list(w), list(w)
            up[k] += hstep
            dn[k] -= hstep
            numeric.append((loss(w=up) - loss(w=dn)) / (2 * hstep))
        numeric.append((loss(x=x + hstep) - loss(x=x - hstep)) / (2 * hstep))
        numeric.append((loss(h=h + hstep) - loss(h=h - hstep)) / (2 * hstep))
        analytic = list(grads.weights) + [grads.x, grads.prev_state[0]]
        if cell_type == "lstm":
            numeric.append((loss(c=c + hstep) - loss(c=c - hstep)) / (2 * hstep))
            analytic.append(grads.prev_state[1])
        for an, nu in zip(analytic, numeric):
            assert abs(an - nu) / max(1.0, abs(an)) < 1e-5


def test_simple_neuron_hand_derivation():
    w, b, x, t = 0.7, -0.2, 0.9, 0.3
    y = math.tanh(w * x + b)
    # the cell sees the aggregated input w*x; chain through the edge by hand
    g = cell_backward("simple", [b], w * x, (0.0, 0.0), (y - t, 0.0))
    assert g.x * x == pytest.approx((y - t) * (1 - y * y) * x, rel=1e-14)
    assert g.weights[0] == pytest.approx((y - t) * (1 - y * y), rel=1e-14)


@pytest.mark.parametrize("cell_type", CELL_TYPES)
def test_zero_upstream_gives_zero_gradients(cell_type):
    w, x, h, c = _config(np.random.default_rng(0), cell_type)
    g = cell_backward(cell_type, w, x, (h, c), (0.0, 0.0))
    assert all(v == 0 for v in g.weights) and g.x == 0 and g.prev_state == (0.0, 0.0)


def test_forward_is_deterministic():
    w, x, h, c = _config(np.random.default_rng(2), "gru")
    assert cell_forward("gru", w, x, (h, c)) == cell_forward("gru", w, x, (h, c))


def test_weight_length_checked():
    with pytest.raises(ValueError):
        cell_forward("lstm", [0.0] * 3, 0.0)
    with pytest.raises(ValueError):
        cell_forward("nope", [0.0], 0.0)


@pytest.mark.parametrize("cell_type", CELL_TYPES)
def test_forget_bias_added_once_at_creation(cell_type):
    w = init_cell_weights(cell_type, lambda: 0.25)
    for k, v in enumerate(w):
        boosted = FORGET_BIAS_INDEX.get(cell_type) == k
        assert v == (1.25 if boosted else 0.25)
    assert set(FORGET_BIAS_INDEX) == {"lstm", "mgu"}
